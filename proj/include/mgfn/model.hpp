// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <variant>
#include <vector>

#include "mgfn/checkpoint.hpp"
#include "mgfn/fam.hpp"
#include "mgfn/feature_io.hpp"
#include "mgfn/focus.hpp"
#include "mgfn/glance.hpp"
#include "mgfn/settings.hpp"

namespace mgfn {

/// D_out -> h1 -> h2 -> 1 with GeLU and dropout between layers; sigmoid on top.
struct ScoreHead {
    DenseLayer hidden1;
    DenseLayer hidden2;
    DenseLayer out;

    static ScoreHead init(std::size_t in, std::size_t h1, std::size_t h2, Rng rng);
    void collect(const std::string& prefix, std::vector<NamedParam>& out) const;
};

using Block = std::variant<GlanceParams, FocusParams>;

struct ModelParams {
    FamParams fam;
    std::vector<Block> blocks;
    /// GF-Fusion only: lifts the glance branch (C/32) to the focus width (C/16).
    std::optional<DenseLayer> fusion_lift;
    ScoreHead head;

    std::vector<NamedParam> named() const;
};

struct ModelOutput {
    Tensor clip_scores;      ///< B x T, sigmoid outputs
    Tensor clip_magnitudes;  ///< B x T, crop-mean of ||f||_2 of the final features
    Tensor features;         ///< B x T x P x D_out
};

/// FAM followed by the configured block stack and the per-clip score head.
class MgfnModel {
public:
    /// Initializes every parameter from `Rng(seed).split("init")`.
    MgfnModel(ArchitectureDescriptor arch, std::uint64_t seed);

    /// Restores parameters; throws CheckpointError on unknown or missing names
    /// without modifying anything.
    static MgfnModel from_checkpoint(const Checkpoint& checkpoint);

    /// `dropout_rng == nullptr` selects inference mode (no dropout).
    ModelOutput forward(Tape& tape, const Tensor& features, Rng* dropout_rng = nullptr) const;

    const ArchitectureDescriptor& arch() const { return arch_; }
    const ModelParams& params() const { return params_; }
    ModelParams& mutable_params() { return params_; }
    std::vector<NamedParam> parameters() const { return params_.named(); }

    std::vector<NamedBlob> export_params() const;
    void import_params(const std::vector<NamedBlob>& blobs);

private:
    ArchitectureDescriptor arch_;
    ModelParams params_;
};

/// Segments the record to T clips, scores it in inference mode, and expands
/// clip scores to its frames. Throws DimensionError when (P, C) differ from
/// the model.
ScoreSeries infer_video(const MgfnModel& model, const VideoRecord& record);
ScoreSeries infer_video(const VideoRecord& record, const Checkpoint& checkpoint);

/// Clip scores of one record in inference mode (length T).
std::vector<double> score_clips(const MgfnModel& model, const VideoRecord& record);

}  // namespace mgfn
