#include "adaptlab/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>
#include <variant>

#include <json.hpp>

#include "adaptlab/errors.hpp"
#include "json_util.hpp"

namespace fs = std::filesystem;

namespace adaptlab {

using nlohmann::json;

namespace {

std::string task_display_name(const TaskSpec& task) {
    if (!task.name.empty()) return task.name;
    if (task.from_file) return fs::path(task.path).stem().string();
    return synthetic_kind_name(task.kind);
}

std::string sanitize_component(const std::string& s) {
    std::string out;
    out.reserve(s.size());
    for (char c : s) {
        bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
                  (c >= '0' && c <= '9') || c == '_' || c == '-' || c == '.';
        out.push_back(ok ? c : '-');
    }
    return out;
}

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void validate_config(const ExperimentConfig& config) {
    if (config.tasks.empty()) throw ConfigError("config: no tasks");
    if (config.variants.empty()) throw ConfigError("config: no variants");
    if (config.seeds.empty()) throw ConfigError("config: no seeds");
    if (config.data_settings.empty())
        throw ConfigError("config: no data settings");
    if (config.epochs <= 0) throw ConfigError("config: epochs must be positive");
    if (config.batch_size <= 0)
        throw ConfigError("config: batch_size must be positive");
    if (!(config.lr > 0.0) || !std::isfinite(config.lr))
        throw ConfigError("config: lr must be positive and finite");
    if (config.workers < 1)
        throw ConfigError("config: workers must be at least 1");
    if (config.output_dir.empty()) throw ConfigError("config: empty output_dir");

    std::set<std::string> names;
    for (const auto& task : config.tasks) {
        std::string name = task_display_name(task);
        if (!names.insert(name).second)
            throw ConfigError("config: duplicate task name '" + name + "'");
        if (task.from_file) {
            if (task.path.empty())
                throw ConfigError("config: task '" + name + "' has empty file path");
            if (task.text_columns.empty() || task.text_columns.size() > 2)
                throw ConfigError("config: task '" + name +
                                  "' needs one or two text columns");
        } else if (!(task.label_noise >= 0.0 && task.label_noise < 0.5)) {
            throw ConfigError("config: task '" + name +
                              "' label_noise outside [0, 0.5)");
        }
    }
    std::set<int> settings(config.data_settings.begin(),
                           config.data_settings.end());
    if (settings.size() != config.data_settings.size())
        throw ConfigError("config: duplicate data settings");
    for (int s : config.data_settings)
        if (s < 0) throw ConfigError("config: negative data setting");
    std::set<std::uint64_t> seeds(config.seeds.begin(), config.seeds.end());
    if (seeds.size() != config.seeds.size())
        throw ConfigError("config: duplicate seeds");
}

struct RunJob {
    RunKey key;
    const TaskSpec* task = nullptr;
    AdapterVariant variant;
    int setting = 0;
};

std::vector<RunJob> expand_jobs(const ExperimentConfig& config) {
    std::vector<RunJob> jobs;
    std::set<std::string> seen;
    for (const auto& task : config.tasks) {
        std::string tname = task_display_name(task);
        for (const auto& variant : config.variants) {
            if (!variant.task_filter.empty() && variant.task_filter != tname)
                continue;
            for (int setting : config.data_settings) {
                std::string sname = setting_name(setting);
                if (!variant.setting_filter.empty() &&
                    variant.setting_filter != sname)
                    continue;
                for (std::uint64_t seed : config.seeds) {
                    RunJob job{RunKey{tname, variant.label(), sname, seed},
                               &task, variant, setting};
                    if (!seen.insert(run_file_name(job.key)).second)
                        throw ConfigError("config: run key collides: " +
                                          job.key.describe());
                    jobs.push_back(std::move(job));
                }
            }
        }
    }
    return jobs;
}

// Per-task dataset or the reason it could not be built.
using TaskData = std::variant<Dataset, std::string>;

std::map<std::string, TaskData> materialize_all(const ExperimentConfig& config) {
    std::map<std::string, TaskData> out;
    for (const auto& task : config.tasks) {
        std::string name = task_display_name(task);
        try {
            out.emplace(name, materialize_task(task, config.backbone));
        } catch (const std::exception& e) {
            out.emplace(name, std::string(e.what()));
        }
    }
    return out;
}

RunRecord failed_record(const RunJob& job, const std::string& reason) {
    RunRecord record;
    record.result.task_id = job.key.task;
    record.result.variant = job.key.variant;
    record.result.seed = job.key.seed;
    record.result.data_setting = job.key.setting;
    record.result.best_epoch = -1;
    record.result.dev_metric = std::nan("");
    record.result.test_metric = std::nan("");
    record.result.failed = true;
    record.result.fail_reason = reason;
    return record;
}

RunRecord execute_job(const RunJob& job, const ExperimentConfig& config,
                      const std::shared_ptr<Backbone>& backbone,
                      const Dataset& data) {
    SplitPlan plan = make_split(data, job.setting, job.key.seed);
    AdapterModel model(backbone, config.adapter, job.variant, data.num_classes,
                       job.key.seed);
    TrainOptions opts;
    opts.epochs = config.epochs;
    opts.batch_size = config.batch_size;
    opts.adam.lr = config.lr;
    opts.seed = job.key.seed;
    RunResult result = train(model, data, plan, opts);
    return make_run_record(result, model);
}

void log_line(std::ostream* log, std::mutex& mu, const std::string& line) {
    if (!log) return;
    std::lock_guard<std::mutex> lock(mu);
    (*log) << line << "\n";
}

struct GroupStats {
    std::vector<double> metrics;
    std::vector<double> selected;
    std::vector<double> params;
    bool any_architecture = false;
};

int smallest_setting(const std::vector<int>& settings) {
    // Full data (0) counts as the largest setting.
    int best = settings.front();
    for (int s : settings) {
        long long a = (s == 0) ? (1LL << 40) : s;
        long long b = (best == 0) ? (1LL << 40) : best;
        if (a < b) best = s;
    }
    return best;
}

std::string find_aa_label(const ExperimentConfig& config) {
    for (const auto& v : config.variants)
        if (v.kind == AdapterVariant::Kind::AA) return v.label();
    throw ConfigError("derive: config has no aa variant to read runs from");
}

RunRecord load_source_run(const std::string& out_dir, const RunKey& key) {
    std::string path = out_dir + "/" + run_file_name(key);
    if (!fs::exists(path))
        throw ConfigError("derive: missing source run " + key.describe() +
                          " (expected file " + path + ")");
    RunRecord record = load_run_record(path);
    if (record.result.failed)
        throw ConfigError("derive: source run " + key.describe() +
                          " failed: " + record.result.fail_reason);
    if (!record.has_architecture)
        throw ConfigError("derive: source run " + key.describe() +
                          " has no stored architecture");
    return record;
}

std::vector<double> linspace(double lo, double hi, int samples) {
    std::vector<double> xs(samples);
    for (int i = 0; i < samples; ++i)
        xs[i] = lo + (hi - lo) * i / (samples - 1);
    return xs;
}

json settings_to_json(const std::vector<int>& settings) {
    json arr = json::array();
    for (int s : settings) {
        if (s == 0)
            arr.push_back("full");
        else
            arr.push_back(s);
    }
    return arr;
}

std::vector<int> settings_from_json(const json& arr) {
    std::vector<int> out;
    for (const auto& item : arr) {
        if (item.is_string()) {
            if (item.get<std::string>() != "full")
                throw ConfigError("config: data setting must be an int or \"full\"");
            out.push_back(0);
        } else {
            out.push_back(item.get<int>());
        }
    }
    return out;
}

}  // namespace

// nlohmann finds these through ADL, so they live at namespace scope.
static void to_json(json& j, const TaskSpec& task) {
    j = json::object();
    if (!task.name.empty()) j["name"] = task.name;
    if (task.from_file) {
        j["file"] = task.path;
        j["text_columns"] = task.text_columns;
        j["label_column"] = task.label_column;
        j["delimiter"] = std::string(1, task.delimiter);
    } else {
        j["kind"] = synthetic_kind_name(task.kind);
        j["size"] = task.size;
        j["gen_seed"] = task.gen_seed;
        if (task.label_noise > 0.0) j["label_noise"] = task.label_noise;
    }
    if (task.metric_override) j["metric"] = metric_name(task.metric);
}

static void from_json(const json& j, TaskSpec& task) {
    task = TaskSpec{};
    if (j.contains("name")) j.at("name").get_to(task.name);
    task.from_file = j.contains("file");
    if (task.from_file) {
        j.at("file").get_to(task.path);
        j.at("text_columns").get_to(task.text_columns);
        if (j.contains("label_column"))
            j.at("label_column").get_to(task.label_column);
        if (j.contains("delimiter")) {
            std::string d = j.at("delimiter").get<std::string>();
            if (d.size() != 1)
                throw ConfigError("config: delimiter must be one character");
            task.delimiter = d[0];
        }
    } else {
        if (!j.contains("kind"))
            throw ConfigError("config: task needs either 'kind' or 'file'");
        task.kind =
            synthetic_kind_from_name(j.at("kind").get<std::string>());
        if (j.contains("size")) j.at("size").get_to(task.size);
        if (j.contains("gen_seed")) j.at("gen_seed").get_to(task.gen_seed);
        if (j.contains("label_noise"))
            j.at("label_noise").get_to(task.label_noise);
    }
    if (j.contains("metric")) {
        task.metric_override = true;
        task.metric = metric_from_name(j.at("metric").get<std::string>());
    }
}

std::string RunKey::describe() const {
    std::ostringstream os;
    os << "(task=" << task << ", variant=" << variant << ", setting=" << setting
       << ", seed=" << seed << ")";
    return os.str();
}

std::string resolve_output_dir(const std::string& configured) {
    const char* root = std::getenv("ADAPTLAB_OUTPUT_ROOT");
    if (root && *root && !fs::path(configured).is_absolute())
        return (fs::path(root) / configured).string();
    return configured;
}

std::vector<RunKey> expand_grid(const ExperimentConfig& config) {
    validate_config(config);
    std::vector<RunKey> keys;
    for (const auto& job : expand_jobs(config)) keys.push_back(job.key);
    return keys;
}

std::string run_file_name(const RunKey& key) {
    std::ostringstream os;
    os << sanitize_component(key.task) << "__" << sanitize_component(key.variant)
       << "__" << sanitize_component(key.setting) << "__seed" << key.seed
       << ".json";
    return os.str();
}

Dataset materialize_task(const TaskSpec& task, const BackboneConfig& backbone) {
    Dataset data;
    if (task.from_file) {
        data = load_tsv(task.path, task.text_columns, task.label_column,
                        task.delimiter, backbone.vocab_size,
                        backbone.max_seq_len);
    } else {
        data = generate_synthetic_task(task.kind, task.size,
                                       backbone.vocab_size,
                                       backbone.max_seq_len, task.gen_seed,
                                       task.label_noise);
    }
    data.task_id = task_display_name(task);
    if (task.metric_override) data.metric = task.metric;
    return data;
}

ExperimentConfig experiment_config_from_json_string(const std::string& text,
                                                    const std::string& origin) {
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded())
        throw ConfigError("invalid JSON in " + origin);
    ExperimentConfig config;
    try {
        if (j.contains("backbone")) j.at("backbone").get_to(config.backbone);
        if (j.contains("adapter")) j.at("adapter").get_to(config.adapter);
        if (j.contains("tasks"))
            config.tasks = j.at("tasks").get<std::vector<TaskSpec>>();
        if (j.contains("variants"))
            config.variants =
                j.at("variants").get<std::vector<AdapterVariant>>();
        if (j.contains("data_settings"))
            config.data_settings = settings_from_json(j.at("data_settings"));
        if (j.contains("seeds"))
            config.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
        if (j.contains("epochs")) j.at("epochs").get_to(config.epochs);
        if (j.contains("batch_size"))
            j.at("batch_size").get_to(config.batch_size);
        if (j.contains("lr")) j.at("lr").get_to(config.lr);
        if (j.contains("output_dir"))
            j.at("output_dir").get_to(config.output_dir);
        if (j.contains("workers")) j.at("workers").get_to(config.workers);
    } catch (const json::exception& e) {
        throw ConfigError("config " + origin + ": " + e.what());
    }
    validate_config(config);
    return config;
}

ExperimentConfig load_experiment_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open config file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return experiment_config_from_json_string(buf.str(), path);
}

std::string experiment_config_to_json_string(const ExperimentConfig& config) {
    json j;
    j["backbone"] = config.backbone;
    j["adapter"] = config.adapter;
    j["tasks"] = config.tasks;
    j["variants"] = config.variants;
    j["data_settings"] = settings_to_json(config.data_settings);
    j["seeds"] = config.seeds;
    j["epochs"] = config.epochs;
    j["batch_size"] = config.batch_size;
    j["lr"] = config.lr;
    j["output_dir"] = config.output_dir;
    j["workers"] = config.workers;
    return j.dump(2) + "\n";
}

std::vector<AggregateRow> aggregate_records(
    const std::vector<RunRecord>& records) {
    std::map<std::array<std::string, 3>, GroupStats> groups;
    for (const auto& record : records) {
        if (record.result.failed) continue;
        auto& g = groups[{record.result.task_id, record.result.variant,
                          record.result.data_setting}];
        g.metrics.push_back(record.result.test_metric);
        g.params.push_back(static_cast<double>(record.result.trainable_params));
        if (record.has_architecture) {
            g.any_architecture = true;
            g.selected.push_back(
                static_cast<double>(record.result.selected_layers.size()));
        }
    }
    std::vector<AggregateRow> rows;
    for (const auto& [key, g] : groups) {
        AggregateRow row;
        row.task = key[0];
        row.variant = key[1];
        row.setting = key[2];
        row.seed_count = static_cast<int>(g.metrics.size());
        double sum = 0.0;
        for (double m : g.metrics) sum += m;
        row.mean = sum / g.metrics.size();
        double sq = 0.0;
        for (double m : g.metrics) sq += (m - row.mean) * (m - row.mean);
        row.stddev = std::sqrt(sq / g.metrics.size());
        if (g.any_architecture) {
            double s = 0.0;
            for (double v : g.selected) s += v;
            row.mean_selected_layers = s / g.selected.size();
        }
        double p = 0.0;
        for (double v : g.params) p += v;
        row.trainable_params = p / g.params.size();
        rows.push_back(std::move(row));
    }
    return rows;
}

std::string aggregate_csv(const std::vector<AggregateRow>& rows) {
    std::ostringstream os;
    os << "# std is the population standard deviation over completed runs\n";
    os << "task,variant,setting,seed_count,mean,std,mean_selected_layers,"
          "trainable_params\n";
    for (const auto& row : rows) {
        os << row.task << "," << row.variant << "," << row.setting << ","
           << row.seed_count << "," << format_double(row.mean) << ","
           << format_double(row.stddev) << ",";
        if (row.mean_selected_layers >= 0.0)
            os << format_double(row.mean_selected_layers);
        os << "," << format_double(row.trainable_params) << "\n";
    }
    return os.str();
}

ExperimentOutcome run_experiment(const ExperimentConfig& config,
                                 std::ostream* log) {
    validate_config(config);
    std::string out_dir = resolve_output_dir(config.output_dir);
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec)
        throw IoError("cannot create output directory " + out_dir + ": " +
                      ec.message());

    std::vector<RunJob> jobs = expand_jobs(config);
    auto backbone = std::make_shared<Backbone>(build_backbone(config.backbone));
    std::map<std::string, TaskData> datasets = materialize_all(config);

    ExperimentOutcome outcome;
    outcome.records.resize(jobs.size());
    std::mutex log_mu;
    std::atomic<size_t> next{0};
    std::atomic<int> new_runs{0};
    std::atomic<int> resumed_runs{0};
    // Resume check + schema validation happen before training; a bad stored
    // file is a config-level error, not a run failure.
    std::exception_ptr first_error;
    std::mutex error_mu;

    auto worker = [&]() {
        for (;;) {
            size_t i = next.fetch_add(1);
            if (i >= jobs.size()) return;
            {
                std::lock_guard<std::mutex> lock(error_mu);
                if (first_error) return;
            }
            const RunJob& job = jobs[i];
            std::string path = out_dir + "/" + run_file_name(job.key);
            try {
                if (fs::exists(path)) {
                    RunRecord record = load_run_record(path);
                    if (record.result.task_id != job.key.task ||
                        record.result.variant != job.key.variant ||
                        record.result.data_setting != job.key.setting ||
                        record.result.seed != job.key.seed)
                        throw ConfigError("run file " + path +
                                          " does not match its name (stored " +
                                          RunKey{record.result.task_id,
                                                 record.result.variant,
                                                 record.result.data_setting,
                                                 record.result.seed}
                                              .describe() +
                                          ")");
                    outcome.records[i] = std::move(record);
                    resumed_runs.fetch_add(1);
                    log_line(log, log_mu, "resumed " + job.key.describe());
                    continue;
                }
                RunRecord record;
                auto it = datasets.find(job.key.task);
                if (it == datasets.end() ||
                    std::holds_alternative<std::string>(it->second)) {
                    std::string reason =
                        it == datasets.end()
                            ? "dataset not materialized"
                            : std::get<std::string>(it->second);
                    record = failed_record(job, "dataset error: " + reason);
                } else {
                    try {
                        record = execute_job(job, config, backbone,
                                             std::get<Dataset>(it->second));
                    } catch (const std::exception& e) {
                        record = failed_record(job, e.what());
                    }
                }
                save_run_record(path, record);
                outcome.records[i] = std::move(record);
                new_runs.fetch_add(1);
                const RunRecord& r = outcome.records[i];
                std::ostringstream os;
                if (r.result.failed) {
                    os << "FAILED " << job.key.describe() << ": "
                       << r.result.fail_reason;
                } else {
                    os << "ran " << job.key.describe() << " test "
                       << format_double(r.result.test_metric) << " ("
                       << format_double(r.result.wall_time_sec) << "s)";
                }
                log_line(log, log_mu, os.str());
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mu);
                if (!first_error) first_error = std::current_exception();
                return;
            }
        }
    };

    int workers = std::min<int>(config.workers, static_cast<int>(jobs.size()));
    workers = std::max(workers, 1);
    if (workers == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    if (first_error) std::rethrow_exception(first_error);

    outcome.new_runs = new_runs.load();
    outcome.resumed_runs = resumed_runs.load();
    for (size_t i = 0; i < jobs.size(); ++i)
        if (outcome.records[i].result.failed) outcome.failed.push_back(jobs[i].key);

    outcome.rows = aggregate_records(outcome.records);
    atomic_write_file(out_dir + "/summary.csv", aggregate_csv(outcome.rows));

    json report;
    report["schema_version"] = kRunSchemaVersion;
    report["rows"] = json::array();
    for (const auto& row : outcome.rows) {
        json r;
        r["task"] = row.task;
        r["variant"] = row.variant;
        r["setting"] = row.setting;
        r["seed_count"] = row.seed_count;
        r["mean"] = row.mean;
        r["std"] = row.stddev;
        if (row.mean_selected_layers >= 0.0)
            r["mean_selected_layers"] = row.mean_selected_layers;
        r["trainable_params"] = row.trainable_params;
        report["rows"].push_back(std::move(r));
    }
    report["incomplete"] = json::array();
    for (const auto& key : outcome.failed)
        report["incomplete"].push_back(key.describe());
    atomic_write_file(out_dir + "/aggregate.json", report.dump(2) + "\n");

    if (log) {
        std::ostringstream os;
        os << "done: " << outcome.new_runs << " new, " << outcome.resumed_runs
           << " resumed, " << outcome.failed.size() << " failed";
        log_line(log, log_mu, os.str());
    }
    return outcome;
}

std::vector<AdapterVariant> derive_focused(const ExperimentConfig& config,
                                           DeriveMode mode,
                                           std::ostream* log) {
    validate_config(config);
    std::string out_dir = resolve_output_dir(config.output_dir);
    std::string aa_label = find_aa_label(config);
    std::uint64_t seed = config.seeds.front();

    auto source = [&](const std::string& task, int setting) {
        return load_source_run(
            out_dir, RunKey{task, aa_label, setting_name(setting), seed});
    };

    std::vector<AdapterVariant> out;
    if (mode == DeriveMode::Spec) {
        for (const auto& task : config.tasks) {
            std::string tname = task_display_name(task);
            for (int setting : config.data_settings) {
                RunRecord rec = source(tname, setting);
                AdapterVariant v = AdapterVariant::aa_focused(
                    rec.architecture.selected_layers,
                    rec.architecture.activation);
                v.name = "aa_focused_spec";
                v.task_filter = tname;
                v.setting_filter = setting_name(setting);
                if (v.layers.empty() && log)
                    (*log) << "warning: empty selected set for " << tname << "/"
                           << setting_name(setting)
                           << "; focused variant is backbone + head\n";
                out.push_back(std::move(v));
            }
        }
        return out;
    }

    // uni and sim both start from the uni source: the task whose AA run
    // selected the fewest layers at the smallest data setting, first seed.
    int setting = smallest_setting(config.data_settings);
    bool have = false;
    RunRecord best;
    std::string best_task;
    for (const auto& task : config.tasks) {
        std::string tname = task_display_name(task);
        RunRecord rec = source(tname, setting);
        if (!have || rec.architecture.selected_layers.size() <
                         best.architecture.selected_layers.size()) {
            have = true;
            best = rec;
            best_task = tname;
        }
    }
    int count = static_cast<int>(best.architecture.selected_layers.size());
    if (log)
        (*log) << "uni source: task " << best_task << ", setting "
               << setting_name(setting) << ", seed " << seed << ", " << count
               << " layers\n";
    if (count == 0 && log)
        (*log) << "warning: empty selected set; focused variant is backbone + "
                  "head\n";

    AdapterVariant v;
    if (mode == DeriveMode::Uni) {
        v = AdapterVariant::aa_focused(best.architecture.selected_layers,
                                       best.architecture.activation);
        v.name = "aa_focused_uni";
    } else {
        ArchitectureSpec sim =
            make_sim_spec(count, config.backbone.num_layers);
        v = AdapterVariant::aa_focused(sim.selected_layers,
                                       ActivationKind::Rational);
        v.name = "aa_focused_sim";
    }
    out.push_back(std::move(v));
    return out;
}

std::vector<AdapterVariant> derive_adapterdrop_counterparts(
    const ExperimentConfig& config, std::ostream* log) {
    validate_config(config);
    std::string out_dir = resolve_output_dir(config.output_dir);
    std::string aa_label = find_aa_label(config);
    std::uint64_t seed = config.seeds.front();
    int total = config.backbone.num_layers;

    std::vector<AdapterVariant> out;
    for (const auto& task : config.tasks) {
        std::string tname = task_display_name(task);
        for (int setting : config.data_settings) {
            RunRecord rec = load_source_run(
                out_dir, RunKey{tname, aa_label, setting_name(setting), seed});
            int drop = total -
                       static_cast<int>(rec.architecture.selected_layers.size());
            AdapterVariant v = AdapterVariant::adapter_drop(drop);
            v.name = "adapterdrop_spec";
            v.task_filter = tname;
            v.setting_filter = setting_name(setting);
            out.push_back(std::move(v));
        }
    }

    // One fixed counterpart matching the uni layer count.
    int setting = smallest_setting(config.data_settings);
    bool have = false;
    size_t best_count = 0;
    for (const auto& task : config.tasks) {
        std::string tname = task_display_name(task);
        RunRecord rec = load_source_run(
            out_dir, RunKey{tname, aa_label, setting_name(setting), seed});
        size_t n = rec.architecture.selected_layers.size();
        if (!have || n < best_count) {
            have = true;
            best_count = n;
        }
    }
    AdapterVariant v =
        AdapterVariant::adapter_drop(total - static_cast<int>(best_count));
    v.name = "adapterdrop_uni";
    out.push_back(std::move(v));
    if (log)
        (*log) << "adapterdrop counterparts: " << out.size() << " variants\n";
    return out;
}

ExperimentOutcome layer_sweep(const ExperimentConfig& config,
                              const std::vector<int>& ks, ActivationKind act,
                              std::ostream* log) {
    if (ks.empty()) throw ConfigError("sweep: no k values");
    for (int k : ks)
        if (k < 0 || k > config.backbone.num_layers)
            throw ConfigError("sweep: k = " + std::to_string(k) +
                              " outside [0, " +
                              std::to_string(config.backbone.num_layers) + "]");
    ExperimentConfig sweep = config;
    sweep.variants.clear();
    for (int k : ks) sweep.variants.push_back(AdapterVariant::last_k(k, act));

    ExperimentOutcome outcome = run_experiment(sweep, log);

    // k-indexed view of the aggregate rows.
    std::ostringstream os;
    os << "# std is the population standard deviation over completed runs\n";
    os << "task,setting,k,activation,seed_count,mean,std\n";
    std::vector<std::tuple<std::string, std::string, int, const AggregateRow*>>
        lines;
    for (const auto& row : outcome.rows) {
        for (int k : ks) {
            if (row.variant == AdapterVariant::last_k(k, act).label()) {
                lines.emplace_back(row.task, row.setting, k, &row);
                break;
            }
        }
    }
    std::sort(lines.begin(), lines.end(), [](const auto& a, const auto& b) {
        if (std::get<0>(a) != std::get<0>(b)) return std::get<0>(a) < std::get<0>(b);
        if (std::get<1>(a) != std::get<1>(b)) return std::get<1>(a) < std::get<1>(b);
        return std::get<2>(a) < std::get<2>(b);
    });
    for (const auto& [task, setting, k, row] : lines) {
        os << task << "," << setting << "," << k << "," << activation_name(act)
           << "," << row->seed_count << "," << format_double(row->mean) << ","
           << format_double(row->stddev) << "\n";
    }
    std::string out_dir = resolve_output_dir(config.output_dir);
    atomic_write_file(
        out_dir + "/sweep_" + std::string(activation_name(act)) + ".csv",
        os.str());
    return outcome;
}

SvgChart rational_chart_for_run(const RunRecord& record, double x_lo,
                                double x_hi, int samples) {
    if (record.rationals.empty())
        throw ConfigError("plot: run " + record.result.task_id + "/" +
                          record.result.variant +
                          " has no rational coefficients");
    if (samples < 2) throw ConfigError("plot: need at least 2 samples");
    std::set<int> selected(record.result.selected_layers.begin(),
                           record.result.selected_layers.end());
    SvgChart chart;
    std::ostringstream title;
    title << "Learned rational activations: " << record.result.task_id << " ("
          << record.result.variant << ", seed " << record.result.seed << ")";
    chart.title = title.str();
    chart.x_label = "x";
    chart.y_label = "R(x)";
    std::vector<double> xs = linspace(x_lo, x_hi, samples);
    for (const auto& lr : record.rationals) {
        if (record.has_architecture && !selected.count(lr.layer)) {
            chart.notes.push_back("layer " + std::to_string(lr.layer) +
                                  ": identity selected, skipped");
            continue;
        }
        SvgSeries series;
        series.label = "layer " + std::to_string(lr.layer);
        series.xs = xs;
        series.ys.reserve(xs.size());
        for (double x : xs) series.ys.push_back(rational_value(x, lr.coeffs));
        chart.series.push_back(std::move(series));
    }
    if (chart.series.empty())
        throw ConfigError("plot: every rational layer was identity-selected");
    return chart;
}

SvgChart rational_chart_for_layer(const std::vector<RunRecord>& records,
                                  int layer, double x_lo, double x_hi,
                                  int samples) {
    if (records.empty()) throw ConfigError("plot: no runs given");
    if (samples < 2) throw ConfigError("plot: need at least 2 samples");
    SvgChart chart;
    chart.title = "Rational activation at layer " + std::to_string(layer) +
                  " across tasks";
    chart.x_label = "x";
    chart.y_label = "R(x)";
    std::vector<double> xs = linspace(x_lo, x_hi, samples);
    for (const auto& record : records) {
        const LayerRational* found = nullptr;
        for (const auto& lr : record.rationals)
            if (lr.layer == layer) found = &lr;
        std::set<int> selected(record.result.selected_layers.begin(),
                               record.result.selected_layers.end());
        bool identity = record.has_architecture && !selected.count(layer);
        if (!found || identity) {
            chart.notes.push_back(
                record.result.task_id + ": " +
                (found ? "identity selected, skipped" : "no rational, skipped"));
            continue;
        }
        SvgSeries series;
        series.label = record.result.task_id;
        series.xs = xs;
        series.ys.reserve(xs.size());
        for (double x : xs)
            series.ys.push_back(rational_value(x, found->coeffs));
        chart.series.push_back(std::move(series));
    }
    if (chart.series.empty())
        throw ConfigError("plot: no run has a rational at layer " +
                          std::to_string(layer));
    return chart;
}

}  // namespace adaptlab
