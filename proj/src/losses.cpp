// SPDX-License-Identifier: Apache-2.0

#include "mgfn/losses.hpp"

#include <algorithm>
#include <cmath>

#include "mgfn/errors.hpp"
#include "mgfn/ops.hpp"

namespace mgfn {

namespace {

constexpr double kScoreClamp = 1e-7;

double sign(double x) { return static_cast<double>((x > 0.0) - (x < 0.0)); }

struct ClassSplit {
    std::vector<const MagnitudeSet*> normal;
    std::vector<const MagnitudeSet*> abnormal;
};

ClassSplit split_balanced(std::span<const MagnitudeSet> mags, const char* op) {
    ClassSplit s;
    for (const auto& m : mags) {
        (m.label == VideoLabel::kAbnormal ? s.abnormal : s.normal).push_back(&m);
    }
    if (s.normal.size() != s.abnormal.size()) {
        throw ArgumentError(std::string(op) +
                            ": batch must hold equally many normal and abnormal videos, got " +
                            std::to_string(s.normal.size()) + " normal and " +
                            std::to_string(s.abnormal.size()) + " abnormal");
    }
    return s;
}

/// A chosen candidate pair and its signed difference m_a - m_b.
struct Candidate {
    PairChoice choice;
    double diff = 0.0;
};

/// Scans the k x k candidates of (a, b) for the extreme of distance(diff);
/// `largest` selects the maximum, otherwise the minimum. First one wins ties.
template <typename Distance>
Candidate hardest_pair(const MagnitudeSet& a, const MagnitudeSet& b, bool largest, Distance distance) {
    Candidate best;
    bool found = false;
    for (std::size_t t = 0; t < a.topk_magnitudes.size(); ++t) {
        for (std::size_t r = 0; r < b.topk_magnitudes.size(); ++r) {
            const double diff = a.topk_magnitudes[t] - b.topk_magnitudes[r];
            const double d = distance(diff);
            if (!found || (largest ? d > best.choice.distance : d < best.choice.distance)) {
                found = true;
                best.diff = diff;
                best.choice.a_video = a.video_index;
                best.choice.a_clip = a.topk_indices[t];
                best.choice.b_video = b.video_index;
                best.choice.b_clip = b.topk_indices[r];
                best.choice.distance = d;
            }
        }
    }
    if (!found) {
        throw ArgumentError("mc_loss: empty top-k magnitude set");
    }
    return best;
}

std::size_t flat(std::size_t video, std::size_t clip, std::size_t clips) {
    return video * clips + clip;
}

}  // namespace

std::vector<MagnitudeSet> magnitude_sets(std::span<const double> magnitudes, std::size_t clips,
                                         std::span<const VideoLabel> labels, std::size_t k) {
    if (clips == 0 || magnitudes.size() != labels.size() * clips) {
        throw DimensionError("magnitude_sets: " + std::to_string(magnitudes.size()) +
                             " magnitudes for " + std::to_string(labels.size()) + " videos of " +
                             std::to_string(clips) + " clips");
    }
    std::vector<MagnitudeSet> sets;
    sets.reserve(labels.size());
    for (std::size_t v = 0; v < labels.size(); ++v) {
        auto top = ops::topk(magnitudes.subspan(v * clips, clips), k);
        sets.push_back({v, labels[v], std::move(top.values), std::move(top.indices)});
    }
    return sets;
}

ContrastiveResult mc_loss(std::span<const MagnitudeSet> mags, double margin, bool signed_distances) {
    const auto split = split_balanced(mags, "mc_loss");
    ContrastiveResult result;

    // D as a function of diff = m_a - m_b, and dD/d(diff).
    auto distance = [&](double diff) { return signed_distances ? diff : std::abs(diff); };
    auto slope = [&](double diff) { return signed_distances ? 1.0 : sign(diff); };

    auto same_class = [&](const std::vector<const MagnitudeSet*>& group, PairKind kind) {
        const std::size_t n = group.size();
        const std::size_t count = n < 2 ? 0 : n * (n - 1) / 2;
        if (count == 0) {
            return 0.0;
        }
        const double w = 1.0 / static_cast<double>(count);
        double sum = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = i + 1; j < n; ++j) {
                // |.|: widest gap is the hardest; signed: the smallest difference
                auto c = hardest_pair(*group[i], *group[j], !signed_distances, distance);
                c.choice.kind = kind;
                c.choice.term = c.choice.distance;
                c.choice.grad_a = w * slope(c.diff);
                c.choice.grad_b = -c.choice.grad_a;
                sum += c.choice.term;
                result.pairs.push_back(c.choice);
            }
        }
        return sum * w;
    };

    const double normal_term = same_class(split.normal, PairKind::kNormal);
    const double abnormal_term = same_class(split.abnormal, PairKind::kAbnormal);

    double cross_term = 0.0;
    const std::size_t cross_count = split.normal.size() * split.abnormal.size();
    if (cross_count > 0) {
        const double w = 1.0 / static_cast<double>(cross_count);
        double sum = 0.0;
        for (const auto* p : split.normal) {
            for (const auto* u : split.abnormal) {
                // |.|: closest pair is the hardest to separate; signed: the largest difference
                auto c = hardest_pair(*p, *u, signed_distances, distance);
                c.choice.kind = PairKind::kCross;
                const double hinge = margin - c.choice.distance;
                if (hinge > 0.0) {
                    c.choice.term = hinge;
                    c.choice.grad_a = -w * slope(c.diff);
                    c.choice.grad_b = -c.choice.grad_a;
                }
                sum += c.choice.term;
                result.pairs.push_back(c.choice);
            }
        }
        cross_term = sum * w;
    }

    result.value = normal_term + abnormal_term + cross_term;
    return result;
}

LossValue sce_loss(std::span<const double> scores, std::size_t clips, std::span<const MagnitudeSet> mags) {
    if (mags.empty()) {
        throw ArgumentError("sce_loss: empty batch");
    }
    if (scores.size() != mags.size() * clips) {
        throw DimensionError("sce_loss: score matrix does not match the batch");
    }
    LossValue out;
    out.grad.assign(scores.size(), 0.0);
    const double batch_w = 1.0 / static_cast<double>(mags.size());
    for (const auto& m : mags) {
        const double k = static_cast<double>(m.topk_indices.size());
        double s = 0.0;
        for (auto idx : m.topk_indices) {
            s += scores[flat(m.video_index, idx, clips)];
        }
        s /= k;
        const double y = m.label == VideoLabel::kAbnormal ? 1.0 : 0.0;
        const double c = std::clamp(s, kScoreClamp, 1.0 - kScoreClamp);
        out.value += batch_w * (-y * std::log(c) - (1.0 - y) * std::log(1.0 - c));
        if (c != s) {
            continue;  // clamped: locally constant
        }
        const double ds = batch_w * (-y / c + (1.0 - y) / (1.0 - c)) / k;
        for (auto idx : m.topk_indices) {
            out.grad[flat(m.video_index, idx, clips)] += ds;
        }
    }
    return out;
}

SmoothSparse smoothness_sparsity(std::span<const double> scores, std::size_t clips,
                                 std::span<const VideoLabel> labels) {
    if (scores.size() != labels.size() * clips) {
        throw DimensionError("smoothness_sparsity: score matrix does not match the batch");
    }
    SmoothSparse out;
    out.ts.grad.assign(scores.size(), 0.0);
    out.sp.grad.assign(scores.size(), 0.0);
    const auto abnormal = static_cast<std::size_t>(
        std::count(labels.begin(), labels.end(), VideoLabel::kAbnormal));
    if (abnormal == 0) {
        return out;
    }
    const double w = 1.0 / static_cast<double>(abnormal);
    for (std::size_t v = 0; v < labels.size(); ++v) {
        if (labels[v] != VideoLabel::kAbnormal) {
            continue;
        }
        const auto s = scores.subspan(v * clips, clips);
        for (std::size_t j = 0; j < clips; ++j) {
            out.ts.value += w * s[j];
            out.ts.grad[v * clips + j] += w;
        }
        for (std::size_t j = 0; j + 1 < clips; ++j) {
            const double d = s[j] - s[j + 1];
            out.sp.value += w * d * d;
            out.sp.grad[v * clips + j] += 2.0 * w * d;
            out.sp.grad[v * clips + j + 1] -= 2.0 * w * d;
        }
    }
    return out;
}

RtfmResult rtfm_baseline_loss(std::span<const MagnitudeSet> mags, std::span<const double> scores,
                              std::size_t clips, double margin) {
    const auto split = split_balanced(mags, "rtfm_baseline_loss");
    RtfmResult out;
    out.magnitude.grad.assign(mags.size() * clips, 0.0);
    auto class_mean = [](const std::vector<const MagnitudeSet*>& group) {
        double acc = 0.0;
        for (const auto* m : group) {
            double s = 0.0;
            for (double v : m->topk_magnitudes) {
                s += v;
            }
            acc += s / static_cast<double>(m->topk_magnitudes.size());
        }
        return group.empty() ? 0.0 : acc / static_cast<double>(group.size());
    };
    const double gap = class_mean(split.abnormal) - class_mean(split.normal);
    const double hinge = margin - gap;
    if (hinge > 0.0 && !split.normal.empty()) {
        out.magnitude.value = hinge;
        auto spread = [&](const std::vector<const MagnitudeSet*>& group, double direction) {
            for (const auto* m : group) {
                const double g = direction / static_cast<double>(group.size() * m->topk_indices.size());
                for (auto idx : m->topk_indices) {
                    out.magnitude.grad[flat(m->video_index, idx, clips)] += g;
                }
            }
        };
        spread(split.abnormal, -1.0);
        spread(split.normal, 1.0);
    }
    out.sce = sce_loss(scores, clips, mags);
    out.total = out.magnitude.value + out.sce.value;
    return out;
}

namespace {

Tensor term_on_tape(Tape& tape, const Tensor& input, LossValue term) {
    return ops::custom(tape, {input}, {}, {term.value},
                       [grad = std::move(term.grad)](std::span<const double> g, std::vector<Tensor>& in) {
                           auto sink = in[0].grad_buffer();
                           for (std::size_t i = 0; i < grad.size(); ++i) {
                               sink[i] += g[0] * grad[i];
                           }
                       });
}

LossValue contrastive_as_value(const ContrastiveResult& r, std::size_t batch, std::size_t clips) {
    LossValue v;
    v.value = r.value;
    v.grad.assign(batch * clips, 0.0);
    for (const auto& p : r.pairs) {
        v.grad[flat(p.a_video, p.a_clip, clips)] += p.grad_a;
        v.grad[flat(p.b_video, p.b_clip, clips)] += p.grad_b;
    }
    return v;
}

}  // namespace

TotalLoss total_loss(Tape& tape, const ModelOutput& output, std::span<const VideoLabel> labels,
                     const LossSettings& settings, std::size_t k) {
    const auto& scores = output.clip_scores;
    const auto& magnitudes = output.clip_magnitudes;
    if (scores.rank() != 2 || scores.shape() != magnitudes.shape() || scores.dim(0) != labels.size()) {
        throw DimensionError("total_loss: scores/magnitudes must be B x T with one label per video");
    }
    const std::size_t batch = scores.dim(0);
    const std::size_t clips = scores.dim(1);
    const auto mags = magnitude_sets(magnitudes.data(), clips, labels, k);

    TotalLoss out;
    auto sce = sce_loss(scores.data(), clips, mags);
    auto reg = smoothness_sparsity(scores.data(), clips, labels);
    LossValue contrastive;
    switch (settings.variant) {
        case LossVariant::kMagnitudeContrastive: {
            auto r = mc_loss(mags, settings.margin, settings.signed_pair_distances);
            contrastive = contrastive_as_value(r, batch, clips);
            out.breakdown.pairs = std::move(r.pairs);
            break;
        }
        case LossVariant::kRtfm:
            // The sce half of the baseline already occupies the l_sce slot.
            contrastive = rtfm_baseline_loss(mags, scores.data(), clips, settings.margin).magnitude;
            break;
        case LossVariant::kSceOnly:
            contrastive.grad.assign(batch * clips, 0.0);
            break;
    }

    auto& b = out.breakdown;
    b.l_sce = sce.value;
    b.l_ts = reg.ts.value;
    b.l_sp = reg.sp.value;
    b.l_mc = contrastive.value;

    const auto t_sce = term_on_tape(tape, scores, std::move(sce));
    const auto t_ts = term_on_tape(tape, scores, std::move(reg.ts));
    const auto t_sp = term_on_tape(tape, scores, std::move(reg.sp));
    const auto t_mc = term_on_tape(tape, magnitudes, std::move(contrastive));
    out.value = ops::weighted_sum(tape, {t_sce, t_ts, t_sp, t_mc},
                                  {1.0, settings.lambda_ts, settings.lambda_sp, settings.lambda_mc});
    b.total = out.value.item();
    return out;
}

}  // namespace mgfn
