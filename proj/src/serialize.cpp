#include "adaptlab/serialize.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "json_util.hpp"

namespace adaptlab {

void atomic_write_file(const std::string& path, const std::string& content) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write '" + tmp + "'");
        out.write(content.data(),
                  static_cast<std::streamsize>(content.size()));
        if (!out) throw IoError("short write to '" + tmp + "'");
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0)
        throw IoError("cannot rename '" + tmp + "' to '" + path + "'");
}

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

json parse_json(const std::string& text, const std::string& origin) {
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded())
        throw ConfigError("invalid JSON in " + origin);
    return j;
}

}  // namespace

std::string architecture_to_json_string(const ArchitectureSpec& spec) {
    json j = spec;
    return j.dump(2) + "\n";
}

ArchitectureSpec architecture_from_json_string(const std::string& text) {
    return parse_json(text, "architecture spec").get<ArchitectureSpec>();
}

RunRecord make_run_record(const RunResult& result, const AdapterModel& model) {
    RunRecord rec;
    rec.result = result;
    bool any_switch = false;
    const auto& layers = model.layers();
    for (int i = 0; i < static_cast<int>(layers.size()); ++i) {
        const auto& lay = layers[i];
        if (!lay.active) continue;
        if (lay.rat_a) {
            LayerRational lr;
            lr.layer = i;
            lr.coeffs.a = lay.rat_a->values;
            lr.coeffs.b = lay.rat_b->values;
            rec.rationals.push_back(std::move(lr));
        }
        if (lay.has_switch) {
            any_switch = true;
            LayerSwitchState st;
            st.layer = i;
            st.logits = {lay.sw.logits->values[0], lay.sw.logits->values[1]};
            st.tau = lay.sw.tau;
            st.decision = hard_decision(lay.sw);
            st.pi = switch_pi(lay.sw);
            rec.switches.push_back(st);
        }
    }
    if (any_switch) {
        rec.has_architecture = true;
        rec.architecture = model.extract_architecture(
            result.task_id, result.seed, result.data_setting);
    }
    return rec;
}

std::string run_record_to_json_string(const RunRecord& rec) {
    const RunResult& r = rec.result;
    json j{{"schema_version", kRunSchemaVersion},
           {"task", r.task_id},
           {"variant", r.variant},
           {"seed", r.seed},
           {"data_setting", r.data_setting},
           {"dataset_fingerprint", fingerprint_to_hex(r.dataset_fingerprint)},
           {"dev_history", r.dev_history},
           {"best_epoch", r.best_epoch},
           {"dev_metric", metric_to_json(r.dev_metric)},
           {"test_metric", metric_to_json(r.test_metric)},
           {"selected_layers", r.selected_layers},
           {"trainable_params", r.trainable_params},
           {"wall_time_sec", r.wall_time_sec},
           {"failed", r.failed},
           {"fail_reason", r.fail_reason}};
    if (rec.has_architecture) j["architecture"] = rec.architecture;
    json rats = json::array();
    for (const auto& lr : rec.rationals)
        rats.push_back(json{{"layer", lr.layer},
                            {"a", lr.coeffs.a},
                            {"b", lr.coeffs.b}});
    j["rationals"] = rats;
    json sws = json::array();
    for (const auto& st : rec.switches)
        sws.push_back(json{
            {"layer", st.layer},
            {"logits", st.logits},
            {"tau", st.tau},
            {"decision",
             st.decision == SwitchChoice::Adapter ? "adapter" : "identity"},
            {"pi", st.pi}});
    j["switches"] = sws;
    return j.dump(2) + "\n";
}

RunRecord run_record_from_json_string(const std::string& text,
                                      const std::string& origin) {
    json j = parse_json(text, origin);
    if (!j.contains("schema_version"))
        throw ConfigError(origin + ": missing schema_version");
    const int version = j.at("schema_version").get<int>();
    if (version != kRunSchemaVersion)
        throw ConfigError(origin + ": run schema version " +
                          std::to_string(version) + " != supported " +
                          std::to_string(kRunSchemaVersion));
    RunRecord rec;
    RunResult& r = rec.result;
    j.at("task").get_to(r.task_id);
    j.at("variant").get_to(r.variant);
    j.at("seed").get_to(r.seed);
    j.at("data_setting").get_to(r.data_setting);
    r.dataset_fingerprint =
        fingerprint_from_hex(j.at("dataset_fingerprint").get<std::string>());
    j.at("dev_history").get_to(r.dev_history);
    j.at("best_epoch").get_to(r.best_epoch);
    r.dev_metric = metric_from_json(j.at("dev_metric"));
    r.test_metric = metric_from_json(j.at("test_metric"));
    j.at("selected_layers").get_to(r.selected_layers);
    j.at("trainable_params").get_to(r.trainable_params);
    j.at("wall_time_sec").get_to(r.wall_time_sec);
    j.at("failed").get_to(r.failed);
    j.at("fail_reason").get_to(r.fail_reason);
    if (j.contains("architecture") && !j.at("architecture").is_null()) {
        rec.has_architecture = true;
        j.at("architecture").get_to(rec.architecture);
    }
    for (const auto& e : j.at("rationals")) {
        LayerRational lr;
        e.at("layer").get_to(lr.layer);
        e.at("a").get_to(lr.coeffs.a);
        e.at("b").get_to(lr.coeffs.b);
        rec.rationals.push_back(std::move(lr));
    }
    for (const auto& e : j.at("switches")) {
        LayerSwitchState st;
        e.at("layer").get_to(st.layer);
        e.at("logits").get_to(st.logits);
        e.at("tau").get_to(st.tau);
        st.decision = e.at("decision").get<std::string>() == "adapter"
                          ? SwitchChoice::Adapter
                          : SwitchChoice::Identity;
        e.at("pi").get_to(st.pi);
        rec.switches.push_back(st);
    }
    return rec;
}

void save_run_record(const std::string& path, const RunRecord& record) {
    atomic_write_file(path, run_record_to_json_string(record));
}

RunRecord load_run_record(const std::string& path) {
    return run_record_from_json_string(read_file(path), "'" + path + "'");
}

namespace {

void append_f64_le(std::string& blob, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof(bits));
    for (int i = 0; i < 8; ++i)
        blob.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

double read_f64_le(const std::string& blob, std::size_t at) {
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i)
        bits |= static_cast<std::uint64_t>(
                    static_cast<unsigned char>(blob[at + i]))
                << (8 * i);
    double v;
    std::memcpy(&v, &bits, sizeof(v));
    return v;
}

// Every tensor a checkpoint must restore, in a stable order.
std::vector<std::pair<std::string, TensorRef>> named_state(
    const AdapterModel& model) {
    std::vector<std::pair<std::string, TensorRef>> out;
    const auto& layers = model.layers();
    for (int i = 0; i < static_cast<int>(layers.size()); ++i) {
        const auto& lay = layers[i];
        if (!lay.active) continue;
        const std::string p = "layers." + std::to_string(i) + ".";
        out.emplace_back(p + "w_down", lay.w_down);
        out.emplace_back(p + "b_down", lay.b_down);
        out.emplace_back(p + "w_up", lay.w_up);
        out.emplace_back(p + "b_up", lay.b_up);
        if (lay.rat_a) {
            out.emplace_back(p + "rat_a", lay.rat_a);
            out.emplace_back(p + "rat_b", lay.rat_b);
        }
        if (lay.has_switch) out.emplace_back(p + "sw_logits", lay.sw.logits);
    }
    out.emplace_back("head.w", model.head_w());
    out.emplace_back("head.b", model.head_b());
    return out;
}

}  // namespace

void save_checkpoint(const std::string& base_path, const AdapterModel& model,
                     std::uint64_t init_seed, const std::string& note) {
    std::string blob;
    json tensors = json::array();
    for (const auto& [name, t] : named_state(model)) {
        json entry{{"name", name},
                   {"shape", t->shape},
                   {"offset", blob.size()},
                   {"byte_length", t->values.size() * sizeof(double)}};
        tensors.push_back(std::move(entry));
        for (double v : t->values) append_f64_le(blob, v);
    }

    const std::string weights_name =
        base_path.substr(base_path.find_last_of('/') + 1) + ".weights";
    json manifest{{"schema_version", kRunSchemaVersion},
                  {"note", note},
                  {"backbone", model.backbone().cfg},
                  {"adapter", model.adapter_config()},
                  {"variant", model.variant()},
                  {"num_classes", model.num_classes()},
                  {"train_head", model.head_w()->requires_grad},
                  {"init_seed", init_seed},
                  {"weights_file", weights_name},
                  {"tensors", tensors}};
    json rats = json::array();
    json sws = json::array();
    const auto& layers = model.layers();
    for (int i = 0; i < static_cast<int>(layers.size()); ++i) {
        const auto& lay = layers[i];
        if (!lay.active) continue;
        if (lay.rat_a)
            rats.push_back(json{{"layer", i},
                                {"a", lay.rat_a->values},
                                {"b", lay.rat_b->values}});
        if (lay.has_switch)
            sws.push_back(json{
                {"layer", i},
                {"logits", lay.sw.logits->values},
                {"tau", lay.sw.tau},
                {"decision", hard_decision(lay.sw) == SwitchChoice::Adapter
                                 ? "adapter"
                                 : "identity"},
                {"pi", switch_pi(lay.sw)}});
    }
    manifest["rationals"] = rats;
    manifest["switches"] = sws;

    atomic_write_file(base_path + ".weights", blob);
    atomic_write_file(base_path + ".json", manifest.dump(2) + "\n");
}

AdapterModel load_checkpoint(const std::string& base_path) {
    const std::string origin = "'" + base_path + ".json'";
    json manifest = parse_json(read_file(base_path + ".json"), origin);
    const int version = manifest.at("schema_version").get<int>();
    if (version != kRunSchemaVersion)
        throw ConfigError(origin + ": checkpoint schema version " +
                          std::to_string(version) + " != supported " +
                          std::to_string(kRunSchemaVersion));

    const auto bcfg = manifest.at("backbone").get<BackboneConfig>();
    const auto acfg = manifest.at("adapter").get<AdapterConfig>();
    const auto variant = manifest.at("variant").get<AdapterVariant>();
    const int classes = manifest.at("num_classes").get<int>();
    const bool train_head = manifest.at("train_head").get<bool>();
    const auto init_seed = manifest.at("init_seed").get<std::uint64_t>();

    auto bb = std::make_shared<Backbone>(build_backbone(bcfg));
    AdapterModel model(bb, acfg, variant, classes, init_seed, train_head);

    const std::string dir =
        base_path.find('/') == std::string::npos
            ? ""
            : base_path.substr(0, base_path.find_last_of('/') + 1);
    const std::string blob =
        read_file(dir + manifest.at("weights_file").get<std::string>());

    auto state = named_state(model);
    const auto& tensors = manifest.at("tensors");
    if (tensors.size() != state.size())
        throw ConfigError(origin + ": manifest lists " +
                          std::to_string(tensors.size()) + " tensors, model has " +
                          std::to_string(state.size()));
    for (std::size_t i = 0; i < state.size(); ++i) {
        const auto& entry = tensors[i];
        const auto name = entry.at("name").get<std::string>();
        if (name != state[i].first)
            throw ConfigError(origin + ": tensor '" + name + "' where '" +
                              state[i].first + "' was expected");
        auto& t = state[i].second;
        const auto shape = entry.at("shape").get<std::vector<i64>>();
        if (shape != t->shape)
            throw ConfigError(origin + ": shape mismatch for '" + name + "'");
        const auto offset = entry.at("offset").get<std::size_t>();
        const auto bytes = entry.at("byte_length").get<std::size_t>();
        if (bytes != t->values.size() * sizeof(double) ||
            offset + bytes > blob.size())
            throw ConfigError(origin + ": bad blob reference for '" + name +
                              "'");
        for (std::size_t k = 0; k < t->values.size(); ++k)
            t->values[k] = read_f64_le(blob, offset + k * 8);
    }
    return model;
}

}  // namespace adaptlab
