// SPDX-License-Identifier: Apache-2.0

#include "mgfn/metrics.hpp"

#include <algorithm>
#include <numeric>

#include "mgfn/errors.hpp"

namespace mgfn {

namespace {

void check_sizes(std::span<const double> scores, std::span<const std::uint8_t> labels) {
    if (scores.size() != labels.size()) {
        throw ArgumentError("metric: " + std::to_string(scores.size()) + " scores for " +
                            std::to_string(labels.size()) + " labels");
    }
}

/// Indices ordered by descending score, lower index first on ties.
std::vector<std::size_t> rank_order(std::span<const double> scores) {
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    return order;
}

}  // namespace

double roc_auc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
    check_sizes(scores, labels);
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // Walk ascending tie groups; every positive beats all negatives in
    // strictly lower groups and ties with the negatives of its own group.
    double credit = 0.0;
    std::size_t neg_below = 0;
    std::size_t pos = 0;
    std::size_t neg = 0;
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        std::size_t group_pos = 0;
        std::size_t group_neg = 0;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) {
            (labels[order[j]] ? group_pos : group_neg)++;
            ++j;
        }
        credit += static_cast<double>(group_pos) *
                  (static_cast<double>(neg_below) + 0.5 * static_cast<double>(group_neg));
        neg_below += group_neg;
        pos += group_pos;
        neg += group_neg;
        i = j;
    }
    if (pos == 0 || neg == 0) {
        throw MetricError("roc_auc undefined: need at least one positive and one negative");
    }
    return credit / (static_cast<double>(pos) * static_cast<double>(neg));
}

double average_precision(std::span<const double> scores, std::span<const std::uint8_t> labels) {
    check_sizes(scores, labels);
    const auto positives = static_cast<std::size_t>(std::count_if(labels.begin(), labels.end(),
                                                                  [](auto l) { return l != 0; }));
    if (positives == 0) {
        throw MetricError("average_precision undefined: no positive labels");
    }
    const auto order = rank_order(scores);
    double ap = 0.0;
    std::size_t hits = 0;
    for (std::size_t r = 0; r < order.size(); ++r) {
        if (labels[order[r]]) {
            ++hits;
            ap += static_cast<double>(hits) / static_cast<double>(r + 1);
        }
    }
    return ap / static_cast<double>(positives);
}

EvalResult evaluate(std::span<const double> scores, std::span<const std::uint8_t> labels,
                    bool with_curves) {
    EvalResult r;
    r.auc = roc_auc(scores, labels);
    r.ap = average_precision(scores, labels);
    r.n_frames = scores.size();
    r.n_positive = static_cast<std::size_t>(
        std::count_if(labels.begin(), labels.end(), [](auto l) { return l != 0; }));
    if (!with_curves) {
        return r;
    }
    const auto order = rank_order(scores);
    const double pos = static_cast<double>(r.n_positive);
    const double neg = static_cast<double>(r.n_frames - r.n_positive);
    std::size_t tp = 0;
    std::size_t fp = 0;
    r.roc_points.emplace_back(0.0, 0.0);
    for (std::size_t i = 0; i < order.size(); ++i) {
        (labels[order[i]] ? tp : fp)++;
        r.pr_points.emplace_back(static_cast<double>(tp) / pos,
                                 static_cast<double>(tp) / static_cast<double>(i + 1));
        const bool group_end = i + 1 == order.size() || scores[order[i + 1]] != scores[order[i]];
        if (group_end) {
            r.roc_points.emplace_back(static_cast<double>(fp) / neg, static_cast<double>(tp) / pos);
        }
    }
    return r;
}

}  // namespace mgfn
