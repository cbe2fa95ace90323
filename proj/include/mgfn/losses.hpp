// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "mgfn/feature_io.hpp"
#include "mgfn/model.hpp"
#include "mgfn/settings.hpp"

namespace mgfn {

/// Top-k clip magnitudes of one video, largest first.
struct MagnitudeSet {
    std::size_t video_index = 0;
    VideoLabel label = VideoLabel::kNormal;
    std::vector<double> topk_magnitudes;
    std::vector<std::size_t> topk_indices;
};

/// One row per video of a B x T magnitude matrix.
std::vector<MagnitudeSet> magnitude_sets(std::span<const double> magnitudes, std::size_t clips,
                                         std::span<const VideoLabel> labels, std::size_t k);

/// Value of a loss term and its gradient with respect to the flattened
/// B x T input it was computed from.
struct LossValue {
    double value = 0.0;
    std::vector<double> grad;
};

enum class PairKind { kNormal, kAbnormal, kCross };

/// The candidate pair chosen for one term of the contrastive loss.
struct PairChoice {
    PairKind kind = PairKind::kNormal;
    std::size_t a_video = 0, a_clip = 0;
    std::size_t b_video = 0, b_clip = 0;
    double distance = 0.0;  ///< D(a, b) after hardest-pair selection
    double term = 0.0;      ///< this pair's contribution before averaging
    double grad_a = 0.0;    ///< d(loss)/d(m_a), averaging included
    double grad_b = 0.0;
};

struct ContrastiveResult {
    double value = 0.0;
    std::vector<PairChoice> pairs;
};

/// Magnitude-contrastive loss over a class-balanced batch:
///   mean_{normal p<q} D_same(p,q) + mean_{abnormal u<v} D_same(u,v)
///     + mean_{normal p, abnormal u} max(0, margin - D_cross(p,u)).
/// D_same is the largest |m_p - m_q| over the k x k top-k candidates (the
/// hardest same-class pair), D_cross the smallest |m_p - m_u|. With
/// `signed_distances`, D_same = min (m_p - m_q) and D_cross = max (m_p - m_u).
/// Empty pair groups contribute 0. Throws ArgumentError when unbalanced.
ContrastiveResult mc_loss(std::span<const MagnitudeSet> mags, double margin,
                          bool signed_distances = false);

/// Sigmoid cross-entropy on video scores, each the mean score of the
/// video's top-k-magnitude clips, clamped to [1e-7, 1 - 1e-7]; batch mean.
LossValue sce_loss(std::span<const double> scores, std::size_t clips,
                   std::span<const MagnitudeSet> mags);

struct SmoothSparse {
    LossValue ts;  ///< sum_j s_j over abnormal videos
    LossValue sp;  ///< sum_j (s_j - s_{j+1})^2 over abnormal videos
};

/// Both regularizers, each divided by the abnormal-video count (0 when
/// the batch has no abnormal video).
SmoothSparse smoothness_sparsity(std::span<const double> scores, std::size_t clips,
                                 std::span<const VideoLabel> labels);

struct RtfmResult {
    LossValue magnitude;  ///< w.r.t. magnitudes
    LossValue sce;        ///< w.r.t. scores
    double total = 0.0;   ///< magnitude + sce
};

/// max(0, margin - (mean top-k abnormal magnitude - mean top-k normal
/// magnitude)) plus the top-k sce term. Class-balanced batches only.
RtfmResult rtfm_baseline_loss(std::span<const MagnitudeSet> mags, std::span<const double> scores,
                              std::size_t clips, double margin);

struct LossBreakdown {
    double l_sce = 0.0;
    double l_mc = 0.0;  ///< contrastive slot: MC, RTFM magnitude term, or 0
    double l_ts = 0.0;
    double l_sp = 0.0;
    double total = 0.0;
    std::vector<PairChoice> pairs;
};

struct TotalLoss {
    Tensor value;  ///< scalar on the tape
    LossBreakdown breakdown;
};

/// total = l_sce + lambda1 l_ts + lambda2 l_sp + lambda3 l_mc, recorded on
/// `tape` so `tape.backward(result.value)` reaches the model parameters.
TotalLoss total_loss(Tape& tape, const ModelOutput& output, std::span<const VideoLabel> labels,
                     const LossSettings& settings, std::size_t k);

}  // namespace mgfn
