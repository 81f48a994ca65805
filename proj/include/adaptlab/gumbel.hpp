#pragma once

#include <array>

#include "adaptlab/rng.hpp"
#include "adaptlab/tape.hpp"
#include "adaptlab/tensor.hpp"

// Binary Gumbel-Softmax switch: a differentiable selector between an adapter
// branch (index 0) and the identity branch (index 1).

namespace adaptlab {

enum class SwitchChoice { Adapter, Identity };

// Selection probabilities pi = softmax(logits); logits start at (0, 0) so
// pi = (0.5, 0.5). tau is the fixed sampling temperature.
struct SwitchParams {
    TensorRef logits;
    double tau = 0.1;
};

SwitchParams make_switch_params(double tau = 0.1, bool trainable = true);

// -log(-log(u)) with u clamped to [1e-12, 1 - 1e-12].
double gumbel_from_uniform(double u);

// Two iid Gumbel(0,1) draws.
std::array<double, 2> gumbel_sample(Rng& rng);

// y_i = exp((log pi_i + g_i) / tau) / sum_j exp(...), computed in log space.
// Gradients flow to the logits; log pi is clamped at -30 (clamped entries get
// zero gradient).
TensorRef gs_forward(Tape& tape, const SwitchParams& p,
                     const std::array<double, 2>& g);

// y_0 * branch_adapter + y_1 * branch_identity. With straight_through the
// forward pass uses one-hot(argmax y) while gradients are taken as if the
// soft weights had been used.
TensorRef mix(Tape& tape, const TensorRef& y, const TensorRef& branch_adapter,
              const TensorRef& branch_identity, bool straight_through = false);

// Adapter iff pi_adapter > pi_identity; exact tie picks Identity (the
// cheaper branch).
SwitchChoice hard_decision(const SwitchParams& p);

// softmax(logits), for reports and serialization.
std::array<double, 2> switch_pi(const SwitchParams& p);

}  // namespace adaptlab
