#pragma once

#include <array>
#include <string>
#include <vector>

#include "adaptlab/model.hpp"
#include "adaptlab/train.hpp"

namespace adaptlab {

inline constexpr int kRunSchemaVersion = 1;

// Write-temp-then-rename so readers never observe a partial file.
void atomic_write_file(const std::string& path, const std::string& content);

std::string architecture_to_json_string(const ArchitectureSpec& spec);
ArchitectureSpec architecture_from_json_string(const std::string& text);

struct LayerRational {
    int layer = 0;
    RationalCoefficients coeffs;
};

struct LayerSwitchState {
    int layer = 0;
    std::array<double, 2> logits{0.0, 0.0};
    double tau = 0.1;
    SwitchChoice decision = SwitchChoice::Identity;
    std::array<double, 2> pi{0.5, 0.5};
};

// One run's result file: metrics plus everything needed to reconstruct the
// learned activations and switch decisions without the model.
struct RunRecord {
    RunResult result;
    bool has_architecture = false;
    ArchitectureSpec architecture;
    std::vector<LayerRational> rationals;
    std::vector<LayerSwitchState> switches;
};

RunRecord make_run_record(const RunResult& result, const AdapterModel& model);
std::string run_record_to_json_string(const RunRecord& record);
RunRecord run_record_from_json_string(const std::string& text,
                                      const std::string& origin);
void save_run_record(const std::string& path, const RunRecord& record);
RunRecord load_run_record(const std::string& path);

// Checkpoint = <base>.json manifest + <base>.weights blob of little-endian
// f64 tensors referenced by offset/length. The frozen backbone is rebuilt
// from its config on load; only trainable tensors live in the blob.
void save_checkpoint(const std::string& base_path, const AdapterModel& model,
                     std::uint64_t init_seed, const std::string& note = "");
AdapterModel load_checkpoint(const std::string& base_path);

}  // namespace adaptlab
