#pragma once

#include <cstdint>
#include <memory>
#include <numeric>
#include <vector>

#include "adaptlab/errors.hpp"
#include "adaptlab/rng.hpp"

namespace adaptlab {

using i64 = std::int64_t;

// Dense row-major f64 tensor. Gradient storage exists only for tensors that
// are trainable or sit on the differentiation path of the current tape.
struct Tensor {
    std::vector<i64> shape;
    std::vector<double> values;
    std::vector<double> grad;
    bool requires_grad = false;
    // True when a backward pass will write this tensor's gradient.
    bool on_path = false;

    i64 size() const { return static_cast<i64>(values.size()); }

    i64 rank() const { return static_cast<i64>(shape.size()); }

    // Rows/cols of a rank-2 tensor; rank-1 counts as a single row.
    i64 rows() const { return rank() == 2 ? shape[0] : 1; }
    i64 cols() const { return rank() == 2 ? shape[1] : (rank() == 1 ? shape[0] : 1); }

    void ensure_grad() {
        if (grad.size() != values.size()) grad.assign(values.size(), 0.0);
    }

    void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }
};

using TensorRef = std::shared_ptr<Tensor>;

inline i64 shape_numel(const std::vector<i64>& shape) {
    i64 n = 1;
    for (i64 d : shape) n *= d;
    return n;
}

inline TensorRef make_tensor(std::vector<i64> shape, std::vector<double> values,
                             bool requires_grad = false) {
    if (shape_numel(shape) != static_cast<i64>(values.size())) {
        throw ConfigError("tensor: " + std::to_string(values.size()) +
                          " values do not fill shape " + shape_str(shape));
    }
    auto t = std::make_shared<Tensor>();
    t->shape = std::move(shape);
    t->values = std::move(values);
    t->requires_grad = requires_grad;
    t->on_path = requires_grad;
    if (requires_grad) t->ensure_grad();
    return t;
}

inline TensorRef zeros(std::vector<i64> shape, bool requires_grad = false) {
    std::vector<double> v(static_cast<std::size_t>(shape_numel(shape)), 0.0);
    return make_tensor(std::move(shape), std::move(v), requires_grad);
}

inline TensorRef full(std::vector<i64> shape, double value,
                      bool requires_grad = false) {
    std::vector<double> v(static_cast<std::size_t>(shape_numel(shape)), value);
    return make_tensor(std::move(shape), std::move(v), requires_grad);
}

inline TensorRef scalar_tensor(double value, bool requires_grad = false) {
    return make_tensor({1}, {value}, requires_grad);
}

inline TensorRef randn(std::vector<i64> shape, Rng& rng, double stddev,
                       bool requires_grad = false) {
    std::vector<double> v(static_cast<std::size_t>(shape_numel(shape)));
    for (auto& x : v) x = rng.normal() * stddev;
    return make_tensor(std::move(shape), std::move(v), requires_grad);
}

inline bool all_finite(const Tensor& t) {
    for (double v : t.values)
        if (!std::isfinite(v)) return false;
    return true;
}

}  // namespace adaptlab
