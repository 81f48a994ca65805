#pragma once

#include <cstdint>
#include <span>

#include "adaptlab/data.hpp"

namespace adaptlab {

double accuracy(std::span<const std::int32_t> preds,
                std::span<const std::int32_t> labels);

// Binary Matthews correlation from the confusion matrix; 0 when any
// marginal is empty (degenerate denominator).
double matthews(std::span<const std::int32_t> preds,
                std::span<const std::int32_t> labels);

double compute_metric(MetricKind kind, std::span<const std::int32_t> preds,
                      std::span<const std::int32_t> labels);

}  // namespace adaptlab
