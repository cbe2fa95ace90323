// SPDX-License-Identifier: Apache-2.0

#include "mgfn/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#include "mgfn/errors.hpp"
#include "mgfn/ops.hpp"
#include "mgfn/synthgen.hpp"

namespace mgfn {

namespace fs = std::filesystem;
using nlohmann::json;

void TrainConfig::validate() const {
    if (batch_size < 2 || batch_size % 2 != 0) {
        throw ConfigError("batch size B must be a positive even number, got " + std::to_string(batch_size));
    }
    if (clips == 0 || crops == 0) {
        throw ConfigError("T and P must be positive");
    }
    if (topk == 0 || topk > clips) {
        throw ConfigError("k=" + std::to_string(topk) + " must lie in [1, T=" + std::to_string(clips) + "]");
    }
    if (!(lr >= 0.0) || !(weight_decay >= 0.0)) {
        throw ConfigError("lr and weight_decay must be non-negative");
    }
    if (!(margin >= 0.0)) {
        throw ConfigError("margin must be non-negative");
    }
    for (double w : {lambda_ts, lambda_sp, lambda_mc, alpha}) {
        if (!std::isfinite(w)) {
            throw ConfigError("loss weights and alpha must be finite");
        }
    }
}

ArchitectureDescriptor TrainConfig::architecture(std::size_t channels) const {
    ArchitectureDescriptor a;
    a.block_order = block_order;
    a.channels = channels;
    a.clips = clips;
    a.crops = crops;
    a.topk = topk;
    a.alpha = alpha;
    a.dropout = dropout;
    a.head_hidden1 = head_hidden1;
    a.head_hidden2 = head_hidden2;
    a.validate();
    return a;
}

LossSettings TrainConfig::loss_settings() const {
    LossSettings s;
    s.variant = loss_variant;
    s.lambda_ts = lambda_ts;
    s.lambda_sp = lambda_sp;
    s.lambda_mc = lambda_mc;
    s.margin = margin;
    s.signed_pair_distances = signed_pair_distances;
    return s;
}

void to_json(json& j, const TrainConfig& c) {
    j = json{{"B", c.batch_size},
             {"T", c.clips},
             {"P", c.crops},
             {"k", c.topk},
             {"alpha", c.alpha},
             {"lambda1", c.lambda_ts},
             {"lambda2", c.lambda_sp},
             {"lambda3", c.lambda_mc},
             {"lr", c.lr},
             {"weight_decay", c.weight_decay},
             {"margin", c.margin},
             {"steps", c.steps},
             {"eval_every", c.eval_every},
             {"seed", c.seed},
             {"loss", to_string(c.loss_variant)},
             {"arch", to_string(c.block_order)},
             {"dropout", c.dropout},
             {"head_hidden1", c.head_hidden1},
             {"head_hidden2", c.head_hidden2},
             {"signed_pair_distances", c.signed_pair_distances}};
}

void from_json(const json& j, TrainConfig& c) {
    c.batch_size = j.at("B").get<std::size_t>();
    c.clips = j.at("T").get<std::size_t>();
    c.crops = j.at("P").get<std::size_t>();
    c.topk = j.at("k").get<std::size_t>();
    c.alpha = j.at("alpha").get<double>();
    c.lambda_ts = j.at("lambda1").get<double>();
    c.lambda_sp = j.at("lambda2").get<double>();
    c.lambda_mc = j.at("lambda3").get<double>();
    c.lr = j.at("lr").get<double>();
    c.weight_decay = j.at("weight_decay").get<double>();
    c.margin = j.at("margin").get<double>();
    c.steps = j.at("steps").get<std::size_t>();
    c.eval_every = j.at("eval_every").get<std::size_t>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.loss_variant = parse_loss_variant(j.at("loss").get<std::string>());
    c.block_order = parse_block_order(j.at("arch").get<std::string>());
    c.dropout = j.at("dropout").get<double>();
    c.head_hidden1 = j.at("head_hidden1").get<std::size_t>();
    c.head_hidden2 = j.at("head_hidden2").get<std::size_t>();
    c.signed_pair_distances = j.at("signed_pair_distances").get<bool>();
}

void adam_step(std::span<Tensor> params, AdamState& state, double lr, double weight_decay) {
    if (state.m.empty()) {
        for (const auto& p : params) {
            state.m.emplace_back(p.numel(), 0.0);
            state.v.emplace_back(p.numel(), 0.0);
        }
    }
    if (state.m.size() != params.size()) {
        throw DimensionError("adam_step: optimizer state holds " + std::to_string(state.m.size()) +
                             " moments for " + std::to_string(params.size()) + " parameters");
    }
    ++state.t;
    const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
    const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto p = params[i].mutable_data();
        const auto g = params[i].grad();
        auto& m = state.m[i];
        auto& v = state.v[i];
        if (m.size() != p.size() || v.size() != p.size() || (!g.empty() && g.size() != p.size())) {
            throw DimensionError("adam_step: moment shape mismatch for parameter " + std::to_string(i));
        }
        for (std::size_t j = 0; j < p.size(); ++j) {
            const double gj = g.empty() ? 0.0 : g[j];
            p[j] -= lr * weight_decay * p[j];
            m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * gj;
            v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * gj * gj;
            p[j] -= lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + state.eps);
        }
    }
}

ClipDataset ClipDataset::build(std::span<const VideoRecord> records, std::size_t clips) {
    ClipDataset d;
    for (const auto& r : records) {
        const auto t = segment_to_clips(r, clips);
        if (d.clips.empty()) {
            d.crops = t.dim(1);
            d.channels = t.dim(2);
        } else if (t.dim(1) != d.crops || t.dim(2) != d.channels) {
            throw DataError("video '" + r.id + "' has P x C = " + std::to_string(t.dim(1)) + " x " +
                            std::to_string(t.dim(2)) + ", dataset has " + std::to_string(d.crops) +
                            " x " + std::to_string(d.channels));
        }
        (r.abnormal() ? d.abnormal : d.normal).push_back(d.clips.size());
        d.labels.push_back(r.label);
        d.clips.push_back(t);
    }
    return d;
}

std::vector<std::size_t> sample_batch(const ClipDataset& data, std::size_t batch_size, Rng& rng) {
    const std::size_t half = batch_size / 2;
    if (batch_size % 2 != 0) {
        throw ConfigError("batch size must be even");
    }
    if (data.normal.size() < half || data.abnormal.size() < half) {
        throw DataError("batch needs " + std::to_string(half) + " videos per class; dataset has " +
                        std::to_string(data.normal.size()) + " normal and " +
                        std::to_string(data.abnormal.size()) + " abnormal");
    }
    std::vector<std::size_t> out;
    out.reserve(batch_size);
    for (const auto* pool : {&data.normal, &data.abnormal}) {
        auto idx = *pool;
        // Partial Fisher-Yates: the first `half` slots become a uniform sample.
        for (std::size_t i = 0; i < half; ++i) {
            const auto j = i + static_cast<std::size_t>(rng.below(idx.size() - i));
            std::swap(idx[i], idx[j]);
            out.push_back(idx[i]);
        }
    }
    return out;
}

Tensor stack_batch(const ClipDataset& data, std::span<const std::size_t> indices) {
    if (data.clips.empty() || indices.empty()) {
        throw ArgumentError("stack_batch: empty selection");
    }
    const auto& first = data.clips[indices[0]];
    const std::size_t per = first.numel();
    std::vector<double> values;
    values.reserve(per * indices.size());
    for (auto i : indices) {
        const auto src = data.clips.at(i).data();
        values.insert(values.end(), src.begin(), src.end());
    }
    return Tensor::adopt({indices.size(), first.dim(0), first.dim(1), first.dim(2)}, std::move(values), false);
}

namespace {

std::size_t worker_count(std::size_t jobs) {
    std::size_t n = 1;
    if (const char* env = std::getenv("MGFN_THREADS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end != env && v > 0) {
            n = static_cast<std::size_t>(v);
        }
    } else {
        n = std::max(1u, std::thread::hardware_concurrency());
    }
    return std::max<std::size_t>(1, std::min(n, jobs));
}

std::vector<std::uint8_t> frame_labels(const VideoRecord& r) {
    if (r.frame_mask) {
        return *r.frame_mask;
    }
    if (r.abnormal()) {
        throw DataError("video '" + r.id + "' is abnormal but has no frame mask; cannot evaluate");
    }
    return std::vector<std::uint8_t>(r.frame_count, 0);
}

}  // namespace

EvalResult evaluate_model(const MgfnModel& model, std::span<const VideoRecord> videos, bool with_curves) {
    std::vector<ScoreSeries> scores(videos.size());
    std::vector<std::vector<std::uint8_t>> labels(videos.size());
    for (std::size_t i = 0; i < videos.size(); ++i) {
        labels[i] = frame_labels(videos[i]);
    }
    const std::size_t workers = worker_count(videos.size());
    auto run = [&](std::size_t w) {
        for (std::size_t i = w; i < videos.size(); i += workers) {
            scores[i] = infer_video(model, videos[i]);
        }
    };
    if (workers == 1) {
        run(0);
    } else {
        std::vector<std::exception_ptr> errors(workers);
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back([&, w] {
                try {
                    run(w);
                } catch (...) {
                    errors[w] = std::current_exception();
                }
            });
        }
        for (auto& t : pool) {
            t.join();
        }
        for (const auto& e : errors) {
            if (e) {
                std::rethrow_exception(e);
            }
        }
    }
    std::vector<double> all_scores;
    std::vector<std::uint8_t> all_labels;
    for (std::size_t i = 0; i < videos.size(); ++i) {
        all_scores.insert(all_scores.end(), scores[i].begin(), scores[i].end());
        all_labels.insert(all_labels.end(), labels[i].begin(), labels[i].end());
    }
    return evaluate(all_scores, all_labels, with_curves);
}

Trainer::Trainer(TrainConfig config, std::span<const VideoRecord> train_videos)
    : config_(std::move(config)),
      data_(ClipDataset::build(train_videos, config_.clips)),
      model_(config_.architecture(data_.channels == 0 ? 32 : data_.channels), config_.seed) {
    config_.validate();
    if (data_.size() == 0) {
        throw DataError("training set is empty");
    }
    if (data_.crops != config_.crops) {
        throw ConfigError("P=" + std::to_string(config_.crops) + " does not match the data (P=" +
                          std::to_string(data_.crops) + ")");
    }
}

Trainer::Trainer(const Checkpoint& checkpoint, std::span<const VideoRecord> train_videos)
    : config_(checkpoint.training.get<TrainConfig>()),
      data_(ClipDataset::build(train_videos, config_.clips)),
      model_(MgfnModel::from_checkpoint(checkpoint)),
      step_(checkpoint.step) {
    config_.validate();
    if (data_.crops != model_.arch().crops || data_.channels != model_.arch().channels) {
        throw DimensionError("training data P x C = " + std::to_string(data_.crops) + " x " +
                             std::to_string(data_.channels) + " does not match the checkpoint (" +
                             std::to_string(model_.arch().crops) + " x " +
                             std::to_string(model_.arch().channels) + ")");
    }
    const auto params = model_.parameters();
    if (!checkpoint.optimizer.empty()) {
        if (checkpoint.optimizer.size() != 2 * params.size()) {
            throw CheckpointError("optimizer state does not match the parameter list");
        }
        adam_.t = checkpoint.optimizer_step;
        for (std::size_t i = 0; i < params.size(); ++i) {
            const auto& m = checkpoint.optimizer[2 * i];
            const auto& v = checkpoint.optimizer[2 * i + 1];
            if (m.name != "adam.m." + params[i].name || v.name != "adam.v." + params[i].name ||
                m.values.size() != params[i].tensor.numel() || v.values.size() != params[i].tensor.numel()) {
                throw CheckpointError("optimizer state for '" + params[i].name + "' is malformed");
            }
            adam_.m.push_back(m.values);
            adam_.v.push_back(v.values);
        }
    }
}

StepLog Trainer::step() {
    const Rng root(config_.seed);
    Rng batch_rng = root.split("batch").split(static_cast<std::uint64_t>(step_));
    Rng dropout_rng = root.split("dropout").split(static_cast<std::uint64_t>(step_));

    const auto indices = sample_batch(data_, config_.batch_size, batch_rng);
    std::vector<VideoLabel> labels;
    labels.reserve(indices.size());
    for (auto i : indices) {
        labels.push_back(data_.labels[i]);
    }
    const auto batch = stack_batch(data_, indices);

    Tape tape;
    const auto out = model_.forward(tape, batch, &dropout_rng);
    auto loss = total_loss(tape, out, labels, config_.loss_settings(), config_.topk);
    const auto& b = loss.breakdown;
    if (!std::isfinite(b.total) || !std::isfinite(b.l_sce) || !std::isfinite(b.l_mc) ||
        !std::isfinite(b.l_ts) || !std::isfinite(b.l_sp)) {
        std::ostringstream msg;
        msg << "non-finite loss at step " << step_ + 1 << ": l_sce=" << b.l_sce << " l_mc=" << b.l_mc
            << " l_ts=" << b.l_ts << " l_sp=" << b.l_sp << " total=" << b.total;
        throw NumericalError(msg.str());
    }
    tape.backward(loss.value);

    auto named = model_.parameters();
    std::vector<Tensor> params;
    params.reserve(named.size());
    for (auto& p : named) {
        params.push_back(p.tensor);
    }
    adam_step(params, adam_, config_.lr, config_.weight_decay);
    ++step_;
    loss.breakdown.pairs.clear();
    return StepLog{step_, std::move(loss.breakdown)};
}

Checkpoint Trainer::checkpoint() const {
    Checkpoint c;
    c.arch = model_.arch();
    c.loss = config_.loss_settings();
    c.seed = config_.seed;
    c.step = step_;
    c.training = config_;
    c.params = model_.export_params();
    c.optimizer_step = adam_.t;
    const auto params = model_.parameters();
    for (std::size_t i = 0; i < adam_.m.size(); ++i) {
        c.optimizer.push_back({"adam.m." + params[i].name, adam_.m[i]});
        c.optimizer.push_back({"adam.v." + params[i].name, adam_.v[i]});
    }
    return c;
}

GradCheckReport gradcheck_micro(BlockOrder order, LossVariant loss, std::uint64_t seed,
                                const GradCheckOptions& options) {
    const auto fixture = preset("micro");
    const auto videos = generate_videos(fixture.scenes, fixture.dims, seed);
    const auto data = ClipDataset::build(videos.train, fixture.clips);
    const std::vector<std::size_t> picked{data.normal.at(0), data.abnormal.at(0)};
    const std::vector<VideoLabel> labels{VideoLabel::kNormal, VideoLabel::kAbnormal};
    const auto batch = stack_batch(data, picked);

    TrainConfig config;
    config.batch_size = 2;
    config.clips = fixture.clips;
    config.crops = fixture.dims.crops;
    config.loss_variant = loss;
    config.block_order = order;
    config.seed = seed;
    const MgfnModel model(config.architecture(fixture.dims.channels), seed);
    const auto settings = config.loss_settings();
    const Rng dropout_root = Rng(seed).split("gradcheck-dropout");

    auto objective = [&](Tape& tape) {
        Rng dropout = dropout_root;  // same mask on every evaluation
        const auto out = model.forward(tape, batch, &dropout);
        return total_loss(tape, out, labels, settings, config.topk).value;
    };
    return grad_check(objective, model.parameters(), options);
}

json to_json_value(const LossBreakdown& loss) {
    return json{{"l_sce", loss.l_sce}, {"l_mc", loss.l_mc}, {"l_ts", loss.l_ts},
                {"l_sp", loss.l_sp},   {"total", loss.total}};
}

json describe_run(const TrainConfig& config, const ArchitectureDescriptor& arch) {
    return json{{"config", config},
                {"arch", arch},
                {"widths",
                 {{"glance", arch.glance_width()},
                  {"focus", arch.focus_width()},
                  {"output", arch.output_width()},
                  {"head", {arch.head_width1(), arch.head_width2()}}}},
                {"rng", Rng::kAlgorithm},
                {"optimizer", "adam(beta1=0.9, beta2=0.999, eps=1e-8), decoupled weight decay"},
                {"score_protocol", "sigmoid applied after averaging over crops"},
                {"frame_protocol", "clip scores expanded piecewise-constant over the snippet partition"},
                {"pair_distances",
                 config.signed_pair_distances
                     ? "signed: same-class min (m_a - m_b), cross-class max (m_a - m_b)"
                     : "absolute: same-class hardest pair = max |m_a - m_b| (pulled together), "
                       "cross-class hardest pair = min |m_a - m_b| (pushed past the margin)"},
                {"fusion_protocol", "gf-fusion lifts the glance branch to C/16 with a dense layer"}};
}

namespace {

class RunWriter {
public:
    explicit RunWriter(const fs::path& dir) : dir_(dir) {
        fs::create_directories(dir_);
        steps_.open(dir_ / "steps.jsonl", std::ios::trunc);
        evals_.open(dir_ / "eval.jsonl", std::ios::trunc);
        if (!steps_ || !evals_) {
            throw LoadError("cannot write run logs under " + dir_.string());
        }
    }
    void write_json(const std::string& name, const json& doc) const {
        std::ofstream out(dir_ / name, std::ios::trunc);
        out << doc.dump(2) << "\n";
        if (!out) {
            throw LoadError("cannot write " + (dir_ / name).string());
        }
    }
    void step(const StepLog& s) {
        json j = to_json_value(s.loss);
        j["step"] = s.step;
        steps_ << j.dump() << "\n";
    }
    void eval(const EvalLog& e) {
        evals_ << json{{"step", e.step}, {"auc", e.auc}, {"ap", e.ap}}.dump() << "\n";
        evals_.flush();
    }
    const fs::path& dir() const { return dir_; }

private:
    fs::path dir_;
    std::ofstream steps_;
    std::ofstream evals_;
};

}  // namespace

TrainReport train(const TrainConfig& config, std::span<const VideoRecord> train_videos,
                  std::span<const VideoRecord> eval_videos, const std::optional<fs::path>& out_dir,
                  const std::optional<Checkpoint>& resume) {
    config.validate();
    Trainer trainer = resume ? Trainer(*resume, train_videos) : Trainer(config, train_videos);
    const TrainConfig& effective = trainer.config();
    const auto run_info = describe_run(effective, trainer.model().arch());

    std::optional<RunWriter> writer;
    if (out_dir) {
        writer.emplace(*out_dir);
        writer->write_json("config.json", run_info);
    }

    TrainReport report;
    report.best_auc = -1.0;
    auto run_eval = [&]() {
        if (eval_videos.empty()) {
            return EvalResult{};
        }
        const auto r = evaluate_model(trainer.model(), eval_videos);
        EvalLog log{trainer.steps_done(), r.auc, r.ap};
        report.evals.push_back(log);
        if (writer) {
            writer->eval(log);
        }
        if (r.auc > report.best_auc) {
            report.best_auc = r.auc;
            report.best_step = trainer.steps_done();
            report.best_checkpoint = trainer.checkpoint();
        }
        return r;
    };

    while (trainer.steps_done() < config.steps) {
        report.steps.push_back(trainer.step());
        if (writer) {
            writer->step(report.steps.back());
        }
        const auto done = trainer.steps_done();
        if (config.eval_every > 0 && done % config.eval_every == 0 && done < config.steps) {
            run_eval();
        }
    }
    report.final_eval = run_eval();
    report.final_checkpoint = trainer.checkpoint();
    if (eval_videos.empty()) {
        report.best_step = trainer.steps_done();
        report.best_checkpoint = report.final_checkpoint;
    }

    if (writer) {
        save_checkpoint(writer->dir() / "final.ckpt", report.final_checkpoint);
        save_checkpoint(writer->dir() / "best.ckpt", report.best_checkpoint);
        json summary = run_info;
        summary["seed"] = effective.seed;
        summary["steps"] = trainer.steps_done();
        summary["evaluated"] = !eval_videos.empty();
        summary["final"] = {{"auc", report.final_eval.auc},
                            {"ap", report.final_eval.ap},
                            {"frames", report.final_eval.n_frames},
                            {"positive_frames", report.final_eval.n_positive}};
        summary["best"] = {{"step", report.best_step}, {"auc", report.best_auc}};
        if (!report.steps.empty()) {
            summary["last_loss"] = to_json_value(report.steps.back().loss);
        }
        writer->write_json("summary.json", summary);
    }
    return report;
}

}  // namespace mgfn
