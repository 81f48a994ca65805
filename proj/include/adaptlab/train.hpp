#pragma once

#include <string>
#include <vector>

#include "adaptlab/adam.hpp"
#include "adaptlab/data.hpp"
#include "adaptlab/metrics.hpp"
#include "adaptlab/model.hpp"

namespace adaptlab {

struct TrainOptions {
    int epochs = 20;
    int batch_size = 16;
    AdamConfig adam;  // lr 1e-3, betas (0.9, 0.999)
    std::uint64_t seed = 42;
};

struct RunResult {
    std::string task_id;
    std::string variant;
    std::uint64_t seed = 0;
    std::string data_setting;  // "full" or "n<count>"
    std::uint64_t dataset_fingerprint = 0;
    std::vector<double> dev_history;  // one dev metric per epoch
    int best_epoch = -1;
    double dev_metric = 0.0;   // at best epoch
    double test_metric = 0.0;  // at best epoch
    std::vector<int> selected_layers;  // hard switch decisions, if any
    i64 trainable_params = 0;
    double wall_time_sec = 0.0;
    bool failed = false;
    std::string fail_reason;
};

std::string setting_name(int low_data_n);

// Argmax-prediction metric of the model over the given example indices.
double evaluate(AdapterModel& model, const Dataset& data,
                const std::vector<int>& indices, int batch_size = 16);

// Cross-entropy training of the model's trainable parameters; dev is scored
// every epoch and the reported test metric comes from the best dev epoch
// (ties keep the earlier epoch). A non-finite training loss marks the run
// failed instead of throwing.
RunResult train(AdapterModel& model, const Dataset& data,
                const SplitPlan& plan, const TrainOptions& opts);

}  // namespace adaptlab
