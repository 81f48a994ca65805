#pragma once

#include <vector>

#include "adaptlab/tensor.hpp"

namespace adaptlab {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    std::vector<double> m;
    std::vector<double> v;
    i64 step = 0;
};

// One bias-corrected Adam update for a single parameter tensor. State starts
// as zeros at step 0 and the step counter increments per call.
void adam_step(Tensor& param, const std::vector<double>& grad, AdamState& state,
               const AdamConfig& cfg);

// Optimizer over a fixed parameter set; steps use each tensor's own grad.
class AdamOptimizer {
  public:
    AdamOptimizer(std::vector<TensorRef> params, AdamConfig cfg)
        : params_(std::move(params)), states_(params_.size()), cfg_(cfg) {}

    void step() {
        for (std::size_t i = 0; i < params_.size(); ++i)
            adam_step(*params_[i], params_[i]->grad, states_[i], cfg_);
    }

    void zero_grad() {
        for (const auto& p : params_) p->zero_grad();
    }

    const std::vector<TensorRef>& params() const { return params_; }

  private:
    std::vector<TensorRef> params_;
    std::vector<AdamState> states_;
    AdamConfig cfg_;
};

}  // namespace adaptlab
