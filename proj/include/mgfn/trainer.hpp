// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "mgfn/checkpoint.hpp"
#include "mgfn/feature_io.hpp"
#include "mgfn/grad_check.hpp"
#include "mgfn/losses.hpp"
#include "mgfn/metrics.hpp"
#include "mgfn/model.hpp"
#include "mgfn/rng.hpp"
#include "mgfn/settings.hpp"

namespace mgfn {

struct TrainConfig {
    std::size_t batch_size = 16;  ///< B, half normal and half abnormal
    std::size_t clips = 32;       ///< T
    std::size_t crops = 10;       ///< P, must match the data
    std::size_t topk = 3;         ///< k
    double alpha = 0.1;
    double lambda_ts = 1.0;
    double lambda_sp = 1.0;
    double lambda_mc = 0.001;
    double lr = 0.001;
    double weight_decay = 0.0005;
    double margin = 100.0;
    std::size_t steps = 500;
    std::size_t eval_every = 100;  ///< 0 evaluates only after the last step
    std::uint64_t seed = 0;
    LossVariant loss_variant = LossVariant::kMagnitudeContrastive;
    BlockOrder block_order = BlockOrder::kGlanceFocus;
    double dropout = 0.7;
    std::size_t head_hidden1 = 0;  ///< 0 derives D_out/4
    std::size_t head_hidden2 = 0;  ///< 0 derives D_out/32
    bool signed_pair_distances = false;

    /// Throws ConfigError on odd B, k > T, or non-positive sizes.
    void validate() const;
    ArchitectureDescriptor architecture(std::size_t channels) const;
    LossSettings loss_settings() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

/// Adam moments keyed by parameter position.
struct AdamState {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::uint64_t t = 0;
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;
};

/// One Adam step with bias correction. Decoupled weight decay p <- p - lr*wd*p
/// is applied before the moment update. Parameters without a gradient buffer
/// are treated as having a zero gradient.
void adam_step(std::span<Tensor> params, AdamState& state, double lr, double weight_decay);

/// Videos pre-segmented to T clips.
struct ClipDataset {
    std::vector<Tensor> clips;  ///< each T x P x C
    std::vector<VideoLabel> labels;
    std::vector<std::size_t> normal;
    std::vector<std::size_t> abnormal;
    std::size_t crops = 0;
    std::size_t channels = 0;

    static ClipDataset build(std::span<const VideoRecord> records, std::size_t clips);
    std::size_t size() const { return clips.size(); }
};

/// B/2 normal indices followed by B/2 abnormal indices, each drawn uniformly
/// without replacement. Throws DataError when a class has fewer than B/2 videos.
std::vector<std::size_t> sample_batch(const ClipDataset& data, std::size_t batch_size, Rng& rng);

/// Stacks the selected videos into B x T x P x C.
Tensor stack_batch(const ClipDataset& data, std::span<const std::size_t> indices);

/// Frame-level AUC/AP over every video with the model in inference mode.
/// Normal videos without a mask count as all-normal frames; abnormal videos
/// need one. Fans out over min(MGFN_THREADS, videos) threads.
EvalResult evaluate_model(const MgfnModel& model, std::span<const VideoRecord> videos,
                          bool with_curves = false);

struct StepLog {
    std::size_t step = 0;  ///< 1-based count of completed updates
    LossBreakdown loss;
};

struct EvalLog {
    std::size_t step = 0;
    double auc = 0.0;
    double ap = 0.0;
};

class Trainer {
public:
    Trainer(TrainConfig config, std::span<const VideoRecord> train_videos);
    /// Resumes from a checkpoint written by `checkpoint()`.
    Trainer(const Checkpoint& checkpoint, std::span<const VideoRecord> train_videos);

    /// One optimization step. Throws NumericalError on a non-finite loss.
    StepLog step();
    std::size_t steps_done() const { return step_; }
    const TrainConfig& config() const { return config_; }
    const MgfnModel& model() const { return model_; }
    Checkpoint checkpoint() const;

private:
    TrainConfig config_;
    ClipDataset data_;
    MgfnModel model_;
    AdamState adam_;
    std::size_t step_ = 0;
};

struct TrainReport {
    std::vector<StepLog> steps;
    std::vector<EvalLog> evals;
    EvalResult final_eval;
    std::size_t best_step = 0;
    double best_auc = 0.0;
    Checkpoint final_checkpoint;
    Checkpoint best_checkpoint;
};

/// Runs `config.steps` updates, evaluating every `eval_every` steps and after
/// the last (no evaluation when `eval_videos` is empty). With `out_dir`, writes config.json, steps.jsonl, eval.jsonl,
/// best.ckpt, final.ckpt and summary.json there.
TrainReport train(const TrainConfig& config, std::span<const VideoRecord> train_videos,
                  std::span<const VideoRecord> eval_videos,
                  const std::optional<std::filesystem::path>& out_dir = std::nullopt,
                  const std::optional<Checkpoint>& resume = std::nullopt);

/// Finite-difference check of the total loss on the "micro" fixture
/// (B=2, T=4, P=2, C=64) in training mode with a fixed dropout mask.
GradCheckReport gradcheck_micro(BlockOrder order, LossVariant loss, std::uint64_t seed = 0,
                                const GradCheckOptions& options = {});

/// JSON rendering of run metadata shared by reports.
nlohmann::json describe_run(const TrainConfig& config, const ArchitectureDescriptor& arch);
nlohmann::json to_json_value(const LossBreakdown& loss);

}  // namespace mgfn
