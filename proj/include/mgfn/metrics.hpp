// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

namespace mgfn {

struct EvalResult {
    double auc = 0.0;
    double ap = 0.0;
    std::size_t n_frames = 0;
    std::size_t n_positive = 0;
    std::vector<std::pair<double, double>> roc_points;  ///< (fpr, tpr)
    std::vector<std::pair<double, double>> pr_points;   ///< (recall, precision)
};

/// Mann-Whitney AUC: (correctly ordered pairs + 0.5 * tied pairs) / (pos * neg),
/// O(n log n) via sorting with tie groups. Throws MetricError unless both
/// classes are present.
double roc_auc(std::span<const double> scores, std::span<const std::uint8_t> labels);

/// Step-wise area under the precision-recall curve: sum over positives, in
/// descending score order with ties broken by original index, of the
/// precision at that rank divided by the positive count. Throws MetricError
/// when there is no positive.
double average_precision(std::span<const double> scores, std::span<const std::uint8_t> labels);

/// AUC, AP, and the curves (ROC points at tie-group boundaries, PR points at
/// every rank).
EvalResult evaluate(std::span<const double> scores, std::span<const std::uint8_t> labels,
                    bool with_curves = false);

}  // namespace mgfn
