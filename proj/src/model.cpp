// SPDX-License-Identifier: Apache-2.0

#include "mgfn/model.hpp"

#include <map>

#include "mgfn/errors.hpp"
#include "mgfn/ops.hpp"

namespace mgfn {

ScoreHead ScoreHead::init(std::size_t in, std::size_t h1, std::size_t h2, Rng rng) {
    return ScoreHead{DenseLayer::init(in, h1, rng.split("hidden1")),
                     DenseLayer::init(h1, h2, rng.split("hidden2")),
                     DenseLayer::init(h2, 1, rng.split("out"))};
}

void ScoreHead::collect(const std::string& prefix, std::vector<NamedParam>& out) const {
    hidden1.collect(prefix + ".hidden1", out);
    hidden2.collect(prefix + ".hidden2", out);
    this->out.collect(prefix + ".out", out);
}

std::vector<NamedParam> ModelParams::named() const {
    std::vector<NamedParam> out;
    fam.collect("fam", out);
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        const std::string prefix = "blocks." + std::to_string(i);
        std::visit(
            [&](const auto& b) {
                using B = std::decay_t<decltype(b)>;
                b.collect(prefix + (std::is_same_v<B, GlanceParams> ? ".glance" : ".focus"), out);
            },
            blocks[i]);
    }
    if (fusion_lift) {
        fusion_lift->collect("fusion_lift", out);
    }
    head.collect("head", out);
    return out;
}

MgfnModel::MgfnModel(ArchitectureDescriptor arch, std::uint64_t seed) : arch_(std::move(arch)) {
    arch_.validate();
    const Rng root = Rng(seed).split("init");
    const std::size_t c = arch_.channels;
    const std::size_t g = arch_.glance_width();
    const std::size_t f = arch_.focus_width();
    const ops::SacWindow window{arch_.sac_window, arch_.sac_full, arch_.sac_normalize};
    auto glance = [&](std::size_t in, std::size_t width, std::size_t i) {
        return GlanceParams::init(in, width, arch_.scc_kernel, arch_.ffn_mult, arch_.attention_scale,
                                  root.split("blocks").split(i));
    };
    auto focus = [&](std::size_t in, std::size_t width, std::size_t i) {
        return FocusParams::init(in, width, arch_.scc_kernel, arch_.ffn_mult, window,
                                 root.split("blocks").split(i));
    };

    params_.fam = FamParams::init(c, arch_.fam_kernel, arch_.alpha, root.split("fam"));
    switch (arch_.block_order) {
        case BlockOrder::kGlanceFocus:
            params_.blocks.emplace_back(glance(c, g, 0));
            params_.blocks.emplace_back(focus(g, f, 1));
            break;
        case BlockOrder::kFocusFocus:
            params_.blocks.emplace_back(focus(c, f, 0));
            params_.blocks.emplace_back(focus(f, f, 1));
            break;
        case BlockOrder::kFocusGlance:
            params_.blocks.emplace_back(focus(c, f, 0));
            params_.blocks.emplace_back(glance(f, g, 1));
            break;
        case BlockOrder::kFusion:
            params_.blocks.emplace_back(glance(c, g, 0));
            params_.blocks.emplace_back(focus(c, f, 1));
            params_.fusion_lift = DenseLayer::init(g, f, root.split("fusion_lift"));
            break;
    }
    params_.head = ScoreHead::init(arch_.output_width(), arch_.head_width1(), arch_.head_width2(),
                                   root.split("head"));
}

MgfnModel MgfnModel::from_checkpoint(const Checkpoint& checkpoint) {
    MgfnModel model(checkpoint.arch, 0);
    model.import_params(checkpoint.params);
    return model;
}

namespace {

Tensor run_block(Tape& tape, const Block& block, const Tensor& x) {
    return std::visit(
        [&](const auto& b) -> Tensor {
            using B = std::decay_t<decltype(b)>;
            if constexpr (std::is_same_v<B, GlanceParams>) {
                return glance_forward(tape, x, b);
            } else {
                return focus_forward(tape, x, b);
            }
        },
        block);
}

}  // namespace

ModelOutput MgfnModel::forward(Tape& tape, const Tensor& features, Rng* dropout_rng) const {
    if (features.rank() != 4 || features.dim(2) != arch_.crops || features.dim(3) != arch_.channels) {
        throw DimensionError("model expects B x T x " + std::to_string(arch_.crops) + " x " +
                             std::to_string(arch_.channels) + " features, got " +
                             shape_str(features.shape()));
    }
    const std::size_t batch = features.dim(0);
    const std::size_t clips = features.dim(1);

    const auto amplified = amplify(tape, features, params_.fam);
    Tensor x;
    if (arch_.block_order == BlockOrder::kFusion) {
        const auto global = run_block(tape, params_.blocks[0], amplified);
        const auto local = run_block(tape, params_.blocks[1], amplified);
        x = ops::add(tape, (*params_.fusion_lift)(tape, global), local);
    } else {
        x = run_block(tape, params_.blocks[1], run_block(tape, params_.blocks[0], amplified));
    }

    ModelOutput out;
    out.features = x;
    const auto norms = ops::reshape(tape, ops::l2_norm_over_channels(tape, x),
                                    {batch, clips, arch_.crops});
    out.clip_magnitudes = ops::mean_axis(tape, norms, 2);

    const auto pooled = ops::mean_axis(tape, x, 2);
    auto h = ops::gelu(tape, params_.head.hidden1(tape, pooled));
    if (dropout_rng != nullptr) {
        h = ops::dropout(tape, h, arch_.dropout, *dropout_rng);
    }
    h = ops::gelu(tape, params_.head.hidden2(tape, h));
    if (dropout_rng != nullptr) {
        h = ops::dropout(tape, h, arch_.dropout, *dropout_rng);
    }
    const auto logits = ops::reshape(tape, params_.head.out(tape, h), {batch, clips});
    out.clip_scores = ops::sigmoid(tape, logits);
    return out;
}

std::vector<NamedBlob> MgfnModel::export_params() const {
    std::vector<NamedBlob> blobs;
    for (const auto& p : parameters()) {
        blobs.push_back({p.name, p.tensor.values()});
    }
    return blobs;
}

void MgfnModel::import_params(const std::vector<NamedBlob>& blobs) {
    auto params = parameters();
    std::map<std::string, NamedParam*> by_name;
    for (auto& p : params) {
        by_name[p.name] = &p;
    }
    std::map<std::string, const NamedBlob*> incoming;
    for (const auto& b : blobs) {
        const auto it = by_name.find(b.name);
        if (it == by_name.end()) {
            throw CheckpointError("unknown parameter '" + b.name + "' for architecture " +
                                  std::string(to_string(arch_.block_order)));
        }
        if (it->second->tensor.numel() != b.values.size()) {
            throw CheckpointError("parameter '" + b.name + "' holds " +
                                  std::to_string(b.values.size()) + " values, model expects " +
                                  std::to_string(it->second->tensor.numel()));
        }
        if (!incoming.emplace(b.name, &b).second) {
            throw CheckpointError("parameter '" + b.name + "' appears twice");
        }
    }
    if (incoming.size() != params.size()) {
        for (const auto& p : params) {
            if (!incoming.count(p.name)) {
                throw CheckpointError("checkpoint is missing parameter '" + p.name + "'");
            }
        }
    }
    for (auto& p : params) {
        const auto& src = incoming.at(p.name)->values;
        auto dst = p.tensor.mutable_data();
        std::copy(src.begin(), src.end(), dst.begin());
    }
}

std::vector<double> score_clips(const MgfnModel& model, const VideoRecord& record) {
    const auto& a = model.arch();
    if (record.snippets.rank() != 3 || record.snippets.dim(1) != a.crops ||
        record.snippets.dim(2) != a.channels) {
        throw DimensionError("video '" + record.id + "' has features " +
                             shape_str(record.snippets.shape()) + " but the model expects N x " +
                             std::to_string(a.crops) + " x " + std::to_string(a.channels));
    }
    const auto clips = segment_to_clips(record, a.clips);
    Tape tape(Tape::Mode::kNoGrad);
    const auto batch = ops::reshape(tape, clips, {1, a.clips, a.crops, a.channels});
    const auto out = model.forward(tape, batch);
    return out.clip_scores.values();
}

ScoreSeries infer_video(const MgfnModel& model, const VideoRecord& record) {
    return expand_scores_to_frames(score_clips(model, record), record.frame_count);
}

ScoreSeries infer_video(const VideoRecord& record, const Checkpoint& checkpoint) {
    return infer_video(MgfnModel::from_checkpoint(checkpoint), record);
}

}  // namespace mgfn
