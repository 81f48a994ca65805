#include "adaptlab/metrics.hpp"

#include <cmath>
#include <string>

#include "adaptlab/errors.hpp"

namespace adaptlab {

namespace {
void check_inputs(std::span<const std::int32_t> preds,
                  std::span<const std::int32_t> labels) {
    if (preds.empty()) throw ConfigError("metric: empty predictions");
    if (preds.size() != labels.size())
        throw ConfigError("metric: " + std::to_string(preds.size()) +
                          " predictions vs " + std::to_string(labels.size()) +
                          " labels");
}
}  // namespace

double accuracy(std::span<const std::int32_t> preds,
                std::span<const std::int32_t> labels) {
    check_inputs(preds, labels);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < preds.size(); ++i)
        if (preds[i] == labels[i]) ++hits;
    return static_cast<double>(hits) / static_cast<double>(preds.size());
}

double matthews(std::span<const std::int32_t> preds,
                std::span<const std::int32_t> labels) {
    check_inputs(preds, labels);
    double tp = 0, tn = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        const std::int32_t p = preds[i], y = labels[i];
        if ((p != 0 && p != 1) || (y != 0 && y != 1))
            throw ConfigError("matthews: non-binary value at index " +
                              std::to_string(i));
        if (p == 1 && y == 1)
            ++tp;
        else if (p == 0 && y == 0)
            ++tn;
        else if (p == 1)
            ++fp;
        else
            ++fn;
    }
    const double denom =
        (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn);
    if (denom == 0.0) return 0.0;
    return (tp * tn - fp * fn) / std::sqrt(denom);
}

double compute_metric(MetricKind kind, std::span<const std::int32_t> preds,
                      std::span<const std::int32_t> labels) {
    return kind == MetricKind::Accuracy ? accuracy(preds, labels)
                                        : matthews(preds, labels);
}

}  // namespace adaptlab
