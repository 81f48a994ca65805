#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "adaptlab/errors.hpp"
#include "adaptlab/experiment.hpp"
#include "adaptlab/serialize.hpp"
#include "adaptlab/svg.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfigError = 1;
constexpr int kExitPartialFailure = 2;

struct Overrides {
    std::optional<std::string> output_dir;
    std::optional<int> epochs;
    std::optional<int> batch_size;
    std::optional<double> lr;
    std::optional<int> workers;
    std::vector<std::uint64_t> seeds;
    std::vector<std::string> settings;
};

void add_override_flags(CLI::App* cmd, std::string& config_path,
                        Overrides& ov) {
    cmd->add_option("-c,--config", config_path, "experiment config JSON")
        ->required();
    cmd->add_option("--output-dir", ov.output_dir,
                    "override output directory (ADAPTLAB_OUTPUT_ROOT prefixes "
                    "relative paths)");
    cmd->add_option("--epochs", ov.epochs, "override epoch count");
    cmd->add_option("--batch-size", ov.batch_size, "override batch size");
    cmd->add_option("--lr", ov.lr, "override learning rate");
    cmd->add_option("--workers", ov.workers, "override worker count");
    cmd->add_option("--seeds", ov.seeds, "override seed list")->delimiter(',');
    cmd->add_option("--settings", ov.settings,
                    "override data settings (ints or 'full')")
        ->delimiter(',');
}

adaptlab::ExperimentConfig load_with_overrides(const std::string& path,
                                               const Overrides& ov) {
    adaptlab::ExperimentConfig config = adaptlab::load_experiment_config(path);
    if (ov.output_dir) config.output_dir = *ov.output_dir;
    if (ov.epochs) config.epochs = *ov.epochs;
    if (ov.batch_size) config.batch_size = *ov.batch_size;
    if (ov.lr) config.lr = *ov.lr;
    if (ov.workers) config.workers = *ov.workers;
    if (!ov.seeds.empty()) config.seeds = ov.seeds;
    if (!ov.settings.empty()) {
        config.data_settings.clear();
        for (const auto& s : ov.settings) {
            if (s == "full")
                config.data_settings.push_back(0);
            else
                config.data_settings.push_back(std::stoi(s));
        }
    }
    return config;
}

int finish_run(const adaptlab::ExperimentOutcome& outcome,
               const std::string& out_dir) {
    std::cout << adaptlab::aggregate_csv(outcome.rows);
    std::cerr << "wrote " << out_dir << "/summary.csv and aggregate.json\n";
    if (!outcome.failed.empty()) {
        std::cerr << outcome.failed.size() << " run(s) failed:\n";
        for (const auto& key : outcome.failed)
            std::cerr << "  " << key.describe() << "\n";
        return kExitPartialFailure;
    }
    return kExitOk;
}

std::vector<adaptlab::RunRecord> load_records(
    const std::vector<std::string>& paths) {
    std::vector<adaptlab::RunRecord> records;
    records.reserve(paths.size());
    for (const auto& p : paths) records.push_back(adaptlab::load_run_record(p));
    return records;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{
        "adaptlab: adapter experiments with learnable rational activations "
        "and layer switches on a frozen toy encoder"};
    app.require_subcommand(1);

    std::string config_path;
    Overrides ov;

    auto* run_cmd = app.add_subcommand(
        "run", "execute the (task, variant, setting, seed) grid, resuming "
               "from existing run files");
    add_override_flags(run_cmd, config_path, ov);

    auto* derive_cmd = app.add_subcommand(
        "derive", "derive focused / counterpart variants from stored AA runs "
                  "and emit an extended config");
    std::string derive_mode = "spec";
    std::string derive_out;
    add_override_flags(derive_cmd, config_path, ov);
    derive_cmd
        ->add_option("--mode", derive_mode,
                     "spec, uni, sim, or adapterdrop")
        ->check(CLI::IsMember({"spec", "uni", "sim", "adapterdrop"}));
    derive_cmd->add_option(
        "--out", derive_out,
        "write the extended config here (default: stdout)");

    auto* sweep_cmd = app.add_subcommand(
        "sweep", "train LastK for each k and report mean metric vs k");
    std::vector<int> sweep_ks;
    std::string sweep_act = "relu";
    add_override_flags(sweep_cmd, config_path, ov);
    sweep_cmd->add_option("--ks", sweep_ks, "k values, e.g. 8,6,4")
        ->delimiter(',')
        ->required();
    sweep_cmd->add_option("--activation", sweep_act, "relu or rational")
        ->check(CLI::IsMember({"relu", "rational"}));

    auto* plot_cmd = app.add_subcommand(
        "plot", "render learned rational activations to SVG");
    std::string plot_run;
    std::vector<std::string> plot_runs;
    int plot_layer = -1;
    std::string plot_out;
    double x_lo = -5.0, x_hi = 5.0;
    int samples = 512;
    plot_cmd->add_option("--run", plot_run,
                         "one run file: curves for every rational layer");
    plot_cmd->add_option("--runs", plot_runs,
                         "several run files: one layer compared across tasks")
        ->delimiter(',');
    plot_cmd->add_option("--layer", plot_layer,
                         "layer index for --runs mode");
    plot_cmd->add_option("-o,--out", plot_out, "output SVG path")->required();
    plot_cmd->add_option("--x-lo", x_lo, "left end of the x range");
    plot_cmd->add_option("--x-hi", x_hi, "right end of the x range");
    plot_cmd->add_option("--samples", samples, "points per curve");

    auto* report_cmd = app.add_subcommand(
        "report", "recompute the aggregate CSV from stored run files");
    add_override_flags(report_cmd, config_path, ov);

    CLI11_PARSE(app, argc, argv);

    try {
        if (run_cmd->parsed()) {
            adaptlab::ExperimentConfig config =
                load_with_overrides(config_path, ov);
            adaptlab::ExperimentOutcome outcome =
                adaptlab::run_experiment(config, &std::cerr);
            return finish_run(outcome,
                              adaptlab::resolve_output_dir(config.output_dir));
        }

        if (derive_cmd->parsed()) {
            adaptlab::ExperimentConfig config =
                load_with_overrides(config_path, ov);
            std::vector<adaptlab::AdapterVariant> derived;
            if (derive_mode == "adapterdrop") {
                derived =
                    adaptlab::derive_adapterdrop_counterparts(config, &std::cerr);
            } else {
                adaptlab::DeriveMode mode = adaptlab::DeriveMode::Spec;
                if (derive_mode == "uni") mode = adaptlab::DeriveMode::Uni;
                if (derive_mode == "sim") mode = adaptlab::DeriveMode::Sim;
                derived = adaptlab::derive_focused(config, mode, &std::cerr);
            }
            for (const auto& v : derived) {
                std::cerr << "derived " << v.label();
                if (!v.task_filter.empty())
                    std::cerr << " for " << v.task_filter << "/"
                              << v.setting_filter;
                std::cerr << "\n";
            }
            config.variants.insert(config.variants.end(), derived.begin(),
                                   derived.end());
            std::string text =
                adaptlab::experiment_config_to_json_string(config);
            if (derive_out.empty()) {
                std::cout << text;
            } else {
                adaptlab::atomic_write_file(derive_out, text);
                std::cerr << "wrote " << derive_out << "\n";
            }
            return kExitOk;
        }

        if (sweep_cmd->parsed()) {
            adaptlab::ExperimentConfig config =
                load_with_overrides(config_path, ov);
            adaptlab::ActivationKind act =
                adaptlab::activation_from_name(sweep_act);
            adaptlab::ExperimentOutcome outcome =
                adaptlab::layer_sweep(config, sweep_ks, act, &std::cerr);
            return finish_run(outcome,
                              adaptlab::resolve_output_dir(config.output_dir));
        }

        if (plot_cmd->parsed()) {
            adaptlab::SvgChart chart;
            if (!plot_run.empty() && plot_runs.empty()) {
                chart = adaptlab::rational_chart_for_run(
                    adaptlab::load_run_record(plot_run), x_lo, x_hi, samples);
            } else if (plot_run.empty() && !plot_runs.empty()) {
                if (plot_layer < 0)
                    throw adaptlab::ConfigError(
                        "plot: --runs mode needs --layer");
                chart = adaptlab::rational_chart_for_layer(
                    load_records(plot_runs), plot_layer, x_lo, x_hi, samples);
            } else {
                throw adaptlab::ConfigError(
                    "plot: give exactly one of --run or --runs");
            }
            adaptlab::atomic_write_file(plot_out,
                                        adaptlab::render_line_chart(chart));
            std::cerr << "wrote " << plot_out << "\n";
            return kExitOk;
        }

        if (report_cmd->parsed()) {
            adaptlab::ExperimentConfig config =
                load_with_overrides(config_path, ov);
            std::string out_dir =
                adaptlab::resolve_output_dir(config.output_dir);
            std::vector<adaptlab::RunRecord> records;
            std::vector<std::string> missing;
            bool any_failed = false;
            for (const auto& key : adaptlab::expand_grid(config)) {
                std::string path = out_dir + "/" + adaptlab::run_file_name(key);
                std::ifstream probe(path);
                if (!probe) {
                    missing.push_back(key.describe());
                    continue;
                }
                records.push_back(adaptlab::load_run_record(path));
                any_failed = any_failed || records.back().result.failed;
            }
            std::string csv =
                adaptlab::aggregate_csv(adaptlab::aggregate_records(records));
            std::cout << csv;
            adaptlab::atomic_write_file(out_dir + "/summary.csv", csv);
            for (const auto& m : missing)
                std::cerr << "missing run " << m << "\n";
            return any_failed ? kExitPartialFailure : kExitOk;
        }
    } catch (const adaptlab::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfigError;
    } catch (const adaptlab::IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return kExitConfigError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfigError;
    }
    return kExitOk;
}
