#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "adaptlab/data.hpp"
#include "adaptlab/model.hpp"
#include "adaptlab/serialize.hpp"
#include "adaptlab/svg.hpp"
#include "adaptlab/train.hpp"

namespace adaptlab {

// One dataset source: a synthetic generator or a delimited text file.
struct TaskSpec {
    std::string name;  // defaults to the generator kind / file stem
    bool from_file = false;
    SyntheticKind kind = SyntheticKind::KeywordTopic;
    int size = 800;
    std::uint64_t gen_seed = 3;
    double label_noise = 0.0;  // fraction of flipped labels, [0, 0.5)
    std::string path;
    std::vector<std::string> text_columns;
    std::string label_column = "label";
    char delimiter = '\t';
    bool metric_override = false;
    MetricKind metric = MetricKind::Accuracy;
};

struct ExperimentConfig {
    BackboneConfig backbone;
    AdapterConfig adapter;
    std::vector<TaskSpec> tasks;
    std::vector<AdapterVariant> variants;
    std::vector<int> data_settings{0};  // 0 = full data
    std::vector<std::uint64_t> seeds{42, 92, 111, 245, 651};
    int epochs = 20;
    int batch_size = 16;
    double lr = 1e-3;
    std::string output_dir = "runs";
    int workers = 1;
};

ExperimentConfig experiment_config_from_json_string(const std::string& text,
                                                    const std::string& origin);
ExperimentConfig load_experiment_config(const std::string& path);
std::string experiment_config_to_json_string(const ExperimentConfig& config);

// ADAPTLAB_OUTPUT_ROOT prefixes relative output directories when set.
std::string resolve_output_dir(const std::string& configured);

struct RunKey {
    std::string task;
    std::string variant;
    std::string setting;
    std::uint64_t seed = 0;

    std::string describe() const;
};

// The (task, variant, setting, seed) grid in config order; variants bound to
// a task or setting by filter expand only for the matching pairs.
std::vector<RunKey> expand_grid(const ExperimentConfig& config);
std::string run_file_name(const RunKey& key);

struct AggregateRow {
    std::string task;
    std::string variant;
    std::string setting;
    int seed_count = 0;
    double mean = 0.0;
    double stddev = 0.0;                // population
    double mean_selected_layers = -1.0;  // negative = variant has no switches
    i64 trainable_params = 0;
};

std::vector<AggregateRow> aggregate_records(
    const std::vector<RunRecord>& records);
std::string aggregate_csv(const std::vector<AggregateRow>& rows);

struct ExperimentOutcome {
    std::vector<RunRecord> records;  // grid order, completed and failed
    std::vector<RunKey> failed;
    std::vector<AggregateRow> rows;
    int new_runs = 0;
    int resumed_runs = 0;
};

Dataset materialize_task(const TaskSpec& task, const BackboneConfig& backbone);

// Executes the grid (resuming from existing run files), writes one JSON per
// run plus summary.csv and aggregate.json under the resolved output dir.
ExperimentOutcome run_experiment(const ExperimentConfig& config,
                                 std::ostream* log = nullptr);

enum class DeriveMode { Spec, Uni, Sim };

// Focused variants from stored AA runs: per-(task, setting) architecture
// (spec), one architecture reused everywhere (uni), or the last-|uni| layer
// construction (sim). Sources are the first configured seed's AA runs.
std::vector<AdapterVariant> derive_focused(const ExperimentConfig& config,
                                           DeriveMode mode,
                                           std::ostream* log = nullptr);

// AdapterDrop counterparts: per-(task, setting) infer_drop = L - |S|, plus
// one fixed counterpart matching the uni layer count.
std::vector<AdapterVariant> derive_adapterdrop_counterparts(
    const ExperimentConfig& config, std::ostream* log = nullptr);

// LastK over each k; emits sweep_<activation>.csv next to the run files.
ExperimentOutcome layer_sweep(const ExperimentConfig& config,
                              const std::vector<int>& ks, ActivationKind act,
                              std::ostream* log = nullptr);

SvgChart rational_chart_for_run(const RunRecord& record, double x_lo = -5.0,
                                double x_hi = 5.0, int samples = 512);
SvgChart rational_chart_for_layer(const std::vector<RunRecord>& records,
                                  int layer, double x_lo = -5.0,
                                  double x_hi = 5.0, int samples = 512);

}  // namespace adaptlab
