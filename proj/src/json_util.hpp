#pragma once

#include <cmath>
#include <cstdio>
#include <limits>
#include <string>

#include <json.hpp>

#include "adaptlab/errors.hpp"
#include "adaptlab/model.hpp"

// Internal nlohmann adapters shared by serialize.cpp and experiment.cpp;
// keeps the vendored header out of the public API.
namespace adaptlab {

using json = nlohmann::json;

inline std::string fingerprint_to_hex(std::uint64_t fp) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fp));
    return buf;
}

inline std::uint64_t fingerprint_from_hex(const std::string& s) {
    return std::stoull(s, nullptr, 16);
}

inline void to_json(json& j, const BackboneConfig& c) {
    j = json{{"num_layers", c.num_layers},   {"model_dim", c.model_dim},
             {"num_heads", c.num_heads},     {"ffn_dim", c.ffn_dim},
             {"vocab_size", c.vocab_size},   {"max_seq_len", c.max_seq_len},
             {"backbone_seed", c.backbone_seed},
             {"pretrain_steps", c.pretrain_steps}};
}

inline void from_json(const json& j, BackboneConfig& c) {
    c = BackboneConfig{};
    if (j.contains("num_layers")) j.at("num_layers").get_to(c.num_layers);
    if (j.contains("model_dim")) j.at("model_dim").get_to(c.model_dim);
    if (j.contains("num_heads")) j.at("num_heads").get_to(c.num_heads);
    if (j.contains("ffn_dim")) j.at("ffn_dim").get_to(c.ffn_dim);
    if (j.contains("vocab_size")) j.at("vocab_size").get_to(c.vocab_size);
    if (j.contains("max_seq_len")) j.at("max_seq_len").get_to(c.max_seq_len);
    if (j.contains("backbone_seed"))
        j.at("backbone_seed").get_to(c.backbone_seed);
    if (j.contains("pretrain_steps"))
        j.at("pretrain_steps").get_to(c.pretrain_steps);
}

inline void to_json(json& j, const AdapterConfig& c) {
    j = json{{"reduction_factor", c.reduction_factor},
             {"activation", activation_name(c.activation)},
             {"skip_connection", c.skip_connection},
             {"straight_through", c.straight_through}};
}

inline void from_json(const json& j, AdapterConfig& c) {
    c = AdapterConfig{};
    if (j.contains("reduction_factor"))
        j.at("reduction_factor").get_to(c.reduction_factor);
    if (j.contains("activation"))
        c.activation = activation_from_name(j.at("activation").get<std::string>());
    if (j.contains("skip_connection"))
        j.at("skip_connection").get_to(c.skip_connection);
    if (j.contains("straight_through"))
        j.at("straight_through").get_to(c.straight_through);
}

inline AdapterVariant::Kind variant_kind_from_name(const std::string& name) {
    using Kind = AdapterVariant::Kind;
    for (Kind k : {Kind::Baseline, Kind::AA, Kind::AAFocused, Kind::AdapterDrop,
                   Kind::LastK, Kind::SwitchOnly, Kind::RationalOnly})
        if (name == variant_kind_name(k)) return k;
    throw ConfigError("unknown variant kind '" + name + "'");
}

inline void to_json(json& j, const AdapterVariant& v) {
    j = json{{"kind", variant_kind_name(v.kind)}};
    using Kind = AdapterVariant::Kind;
    if (v.kind == Kind::AAFocused) {
        j["layers"] = v.layers;
        j["activation"] = activation_name(v.activation);
    }
    if (v.kind == Kind::LastK) {
        j["k"] = v.k;
        j["activation"] = activation_name(v.activation);
    }
    if (v.kind == Kind::AdapterDrop) {
        j["infer_drop"] = v.infer_drop;
        j["train_drop_max"] = v.train_drop_max;
    }
    if (!v.name.empty()) j["name"] = v.name;
    if (!v.task_filter.empty()) j["task_filter"] = v.task_filter;
    if (!v.setting_filter.empty()) j["setting_filter"] = v.setting_filter;
}

inline void from_json(const json& j, AdapterVariant& v) {
    v = AdapterVariant{};
    v.kind = variant_kind_from_name(j.at("kind").get<std::string>());
    if (j.contains("layers")) j.at("layers").get_to(v.layers);
    if (j.contains("activation"))
        v.activation = activation_from_name(j.at("activation").get<std::string>());
    if (j.contains("k")) j.at("k").get_to(v.k);
    if (j.contains("infer_drop")) j.at("infer_drop").get_to(v.infer_drop);
    if (j.contains("train_drop_max"))
        j.at("train_drop_max").get_to(v.train_drop_max);
    if (j.contains("name")) j.at("name").get_to(v.name);
    if (j.contains("task_filter")) j.at("task_filter").get_to(v.task_filter);
    if (j.contains("setting_filter"))
        j.at("setting_filter").get_to(v.setting_filter);
}

inline void to_json(json& j, const ArchitectureSpec& s) {
    j = json{{"selected_layers", s.selected_layers},
             {"total_layers", s.total_layers},
             {"activation", activation_name(s.activation)},
             {"provenance",
              json{{"task", s.provenance_task},
                   {"seed", s.provenance_seed},
                   {"setting", s.provenance_setting}}},
             {"switch_probabilities", s.switch_probabilities}};
}

inline void from_json(const json& j, ArchitectureSpec& s) {
    s = ArchitectureSpec{};
    j.at("selected_layers").get_to(s.selected_layers);
    j.at("total_layers").get_to(s.total_layers);
    s.activation = activation_from_name(j.at("activation").get<std::string>());
    if (j.contains("provenance")) {
        const auto& p = j.at("provenance");
        if (p.contains("task")) p.at("task").get_to(s.provenance_task);
        if (p.contains("seed")) p.at("seed").get_to(s.provenance_seed);
        if (p.contains("setting")) p.at("setting").get_to(s.provenance_setting);
    }
    if (j.contains("switch_probabilities"))
        j.at("switch_probabilities").get_to(s.switch_probabilities);
    s.canonicalize();
}

// Non-finite doubles have no JSON representation; nlohmann would emit null.
inline json metric_to_json(double v) {
    if (std::isfinite(v)) return v;
    return nullptr;
}

inline double metric_from_json(const json& j) {
    if (j.is_null()) return std::numeric_limits<double>::quiet_NaN();
    return j.get<double>();
}

}  // namespace adaptlab
