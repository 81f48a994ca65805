#include "adaptlab/gumbel.hpp"

#include <algorithm>
#include <cmath>

#include "adaptlab/errors.hpp"

namespace adaptlab {

namespace {
constexpr double kLogPiFloor = -30.0;
}

SwitchParams make_switch_params(double tau, bool trainable) {
    if (!(tau > 0.0))
        throw ConfigError("switch: tau must be > 0, got " + std::to_string(tau));
    SwitchParams p;
    p.logits = make_tensor({2}, {0.0, 0.0}, trainable);
    p.tau = tau;
    return p;
}

double gumbel_from_uniform(double u) {
    u = std::clamp(u, 1e-12, 1.0 - 1e-12);
    return -std::log(-std::log(u));
}

std::array<double, 2> gumbel_sample(Rng& rng) {
    return {gumbel_from_uniform(rng.uniform()),
            gumbel_from_uniform(rng.uniform())};
}

TensorRef gs_forward(Tape& tape, const SwitchParams& p,
                     const std::array<double, 2>& g) {
    const TensorRef& logits = p.logits;
    if (logits->size() != 2)
        throw ConfigError("gs_forward: logits shape " + shape_str(logits->shape) +
                          ", expected [2]");
    const double tau = p.tau;
    const double l0 = logits->values[0], l1 = logits->values[1];
    const double lse = std::max(l0, l1) +
                       std::log(std::exp(l0 - std::max(l0, l1)) +
                                std::exp(l1 - std::max(l0, l1)));
    // log pi, floored so a collapsed pi_i = 0 still yields finite z.
    std::array<double, 2> logp = {l0 - lse, l1 - lse};
    std::array<bool, 2> clamped{};
    for (int i = 0; i < 2; ++i) {
        if (logp[i] < kLogPiFloor) {
            logp[i] = kLogPiFloor;
            clamped[i] = true;
        }
    }
    std::array<double, 2> z = {(logp[0] + g[0]) / tau, (logp[1] + g[1]) / tau};
    const double zmax = std::max(z[0], z[1]);
    const double e0 = std::exp(z[0] - zmax), e1 = std::exp(z[1] - zmax);
    const double norm = e0 + e1;
    auto out = make_tensor({2}, {e0 / norm, e1 / norm});
    out->on_path = logits->on_path;
    if (out->on_path) {
        out->ensure_grad();
        tape.push(out, [logits, out, tau, clamped] {
            const double y0 = out->values[0], y1 = out->values[1];
            const double dot = out->grad[0] * y0 + out->grad[1] * y1;
            // softmax jacobian for z, then the chain through the tau scale,
            // the clamp, and log-softmax of the logits.
            std::array<double, 2> dlogp;
            for (int i = 0; i < 2; ++i) {
                const double dz = out->values[i] * (out->grad[i] - dot);
                dlogp[i] = clamped[i] ? 0.0 : dz / tau;
            }
            const double p0 = std::exp(logits->values[0] -
                                       std::max(logits->values[0],
                                                logits->values[1])),
                         p1 = std::exp(logits->values[1] -
                                       std::max(logits->values[0],
                                                logits->values[1]));
            const double psum = p0 + p1;
            const std::array<double, 2> pi = {p0 / psum, p1 / psum};
            const double dsum = dlogp[0] + dlogp[1];
            for (int i = 0; i < 2; ++i)
                logits->grad[i] += dlogp[i] - pi[i] * dsum;
        });
    }
    return out;
}

TensorRef mix(Tape& tape, const TensorRef& y, const TensorRef& branch_adapter,
              const TensorRef& branch_identity, bool straight_through) {
    if (y->size() != 2)
        throw ConfigError("mix: weights shape " + shape_str(y->shape) +
                          ", expected [2]");
    require_same_shape(branch_adapter->shape, branch_identity->shape, "mix");
    const double soft0 = y->values[0], soft1 = y->values[1];
    double w0 = soft0, w1 = soft1;
    if (straight_through) {
        const bool adapter = soft0 > soft1;
        w0 = adapter ? 1.0 : 0.0;
        w1 = adapter ? 0.0 : 1.0;
    }
    const std::size_t count = branch_adapter->values.size();
    std::vector<double> v(count);
    for (std::size_t i = 0; i < count; ++i)
        v[i] = w0 * branch_adapter->values[i] + w1 * branch_identity->values[i];
    const bool path =
        y->on_path || branch_adapter->on_path || branch_identity->on_path;
    auto out = make_tensor(branch_adapter->shape, std::move(v));
    out->on_path = path;
    if (path) {
        out->ensure_grad();
        // Straight-through: gradients are computed against the soft weights.
        tape.push(out, [y, branch_adapter, branch_identity, out, soft0, soft1,
                        count] {
            if (branch_adapter->on_path)
                for (std::size_t i = 0; i < count; ++i)
                    branch_adapter->grad[i] += soft0 * out->grad[i];
            if (branch_identity->on_path)
                for (std::size_t i = 0; i < count; ++i)
                    branch_identity->grad[i] += soft1 * out->grad[i];
            if (y->on_path) {
                double d0 = 0.0, d1 = 0.0;
                for (std::size_t i = 0; i < count; ++i) {
                    d0 += out->grad[i] * branch_adapter->values[i];
                    d1 += out->grad[i] * branch_identity->values[i];
                }
                y->grad[0] += d0;
                y->grad[1] += d1;
            }
        });
    }
    return out;
}

SwitchChoice hard_decision(const SwitchParams& p) {
    return p.logits->values[0] > p.logits->values[1] ? SwitchChoice::Adapter
                                                     : SwitchChoice::Identity;
}

std::array<double, 2> switch_pi(const SwitchParams& p) {
    const double l0 = p.logits->values[0], l1 = p.logits->values[1];
    const double m = std::max(l0, l1);
    const double e0 = std::exp(l0 - m), e1 = std::exp(l1 - m);
    return {e0 / (e0 + e1), e1 / (e0 + e1)};
}

}  // namespace adaptlab
