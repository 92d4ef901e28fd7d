#ifndef SRM_CONFIG_HPP
#define SRM_CONFIG_HPP

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "srm/cost.hpp"
#include "srm/model.hpp"
#include "srm/train.hpp"

namespace srm {

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// ---------------------------------------------------------------------------
// Configuration document, schema version 1. Unknown keys are rejected so
// every effective default stays auditable.
// ---------------------------------------------------------------------------

struct TrainConfig {
    std::size_t steps = 500;
    std::size_t epochs = 0;  // used when steps == 0: steps = epochs * dataset size
    double lr_max = 1e-4;
    double lr_min = 0.0;
    double weight_decay = 1e-5;
    std::uint64_t seed = 42;
    std::array<std::size_t, 3> patch_extents{0, 0, 0};  // 0 = full volume
    bool augment = true;
    std::size_t eval_every = 50;
    bool include_background = true;
    double smooth = 1e-5;
};

struct DataConfig {
    std::size_t num_samples = 8;
    std::array<std::size_t, 3> extents{32, 32, 32};
    std::size_t channels = 0;  // 0 = model in_channels
    double noise_sigma = 0.1;
    std::uint64_t seed = 7;
};

struct EmissionsConfig {
    double hours = 0.0;
    double power_kw = 0.25;
    std::string preset;       // amazon | google | azure (optional)
    double intensity = 0.0;   // explicit intensity overrides the preset
};

struct ConfigDocument {
    int version = 1;
    ModelConfig model;
    TrainConfig train;
    DataConfig data;
    AnalyzeOptions analyze;
    EmissionsConfig emissions;
    bool has_emissions = false;
};

namespace cfgdetail {

using nlohmann::json;

inline void check_keys(const json& obj, const std::vector<std::string>& allowed, const std::string& section) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool ok = false;
        for (const std::string& k : allowed) {
            if (it.key() == k) {
                ok = true;
                break;
            }
        }
        if (!ok) throw ConfigError("unknown key \"" + it.key() + "\" in section \"" + section + "\"");
    }
}

template <class T>
void load(const json& obj, const char* key, T& out) {
    if (obj.contains(key)) {
        try {
            out = obj.at(key).get<T>();
        } catch (const json::exception& e) {
            throw ConfigError(std::string("bad value for key \"") + key + "\": " + e.what());
        }
    }
}

inline void load_extents(const json& obj, const char* key, std::array<std::size_t, 3>& out) {
    if (!obj.contains(key)) return;
    const json& a = obj.at(key);
    if (!a.is_array() || a.size() != 3) throw ConfigError(std::string("key \"") + key + "\" must be a 3-element array");
    for (std::size_t i = 0; i < 3; ++i) {
        if (!a[i].is_number_unsigned()) throw ConfigError(std::string("key \"") + key + "\" must hold non-negative integers");
        out[i] = a[i].get<std::size_t>();
    }
}

}  // namespace cfgdetail

inline ModelConfig parse_model_section(const nlohmann::json& j) {
    using cfgdetail::load;
    cfgdetail::check_keys(j,
                          {"in_channels", "num_classes", "stage_channels", "cmmb_per_stage", "d_state", "expand",
                           "dconv", "norm_kind", "norm_groups", "tom_layernorm", "interslice_order",
                           "resblock_preact", "allow_custom_bottleneck", "input_extents", "norm_eps",
                           "mlp_hidden_ratio"},
                          "model");
    ModelConfig m;
    load(j, "in_channels", m.in_channels);
    load(j, "num_classes", m.num_classes);
    if (j.contains("stage_channels")) {
        const auto& a = j.at("stage_channels");
        if (!a.is_array() || a.size() != 4) throw ConfigError("model.stage_channels must be a 4-element array");
        for (std::size_t i = 0; i < 4; ++i) m.stage_channels[i] = a[i].get<std::size_t>();
    }
    load(j, "cmmb_per_stage", m.cmmb_per_stage);
    load(j, "d_state", m.d_state);
    load(j, "expand", m.expand);
    load(j, "dconv", m.dconv);
    if (j.contains("norm_kind")) {
        const std::string k = j.at("norm_kind").get<std::string>();
        if (k == "group") {
            m.norm_kind = NormKind::Group;
        } else if (k == "instance") {
            m.norm_kind = NormKind::Instance;
        } else {
            throw ConfigError("model.norm_kind must be \"group\" or \"instance\"");
        }
    }
    load(j, "norm_groups", m.norm_groups);
    load(j, "tom_layernorm", m.tom_layernorm);
    if (j.contains("interslice_order")) {
        const std::string k = j.at("interslice_order").get<std::string>();
        if (k == "depth_fastest") {
            m.interslice_order = InterSliceOrder::DepthFastest;
        } else if (k == "height_fastest") {
            m.interslice_order = InterSliceOrder::HeightFastest;
        } else {
            throw ConfigError("model.interslice_order must be \"depth_fastest\" or \"height_fastest\"");
        }
    }
    load(j, "resblock_preact", m.resblock_preact);
    load(j, "allow_custom_bottleneck", m.allow_custom_bottleneck);
    cfgdetail::load_extents(j, "input_extents", m.input_extents);
    load(j, "norm_eps", m.norm_eps);
    load(j, "mlp_hidden_ratio", m.mlp_hidden_ratio);
    try {
        m.validate();
    } catch (const std::exception& e) {
        throw ConfigError(std::string("model section invalid: ") + e.what());
    }
    return m;
}

inline ConfigDocument parse_config(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(std::string("config parse failure: ") + e.what());
    }
    if (!j.is_object()) throw ConfigError("config root must be an object");
    cfgdetail::check_keys(j, {"version", "model", "train", "data", "analyze", "emissions"}, "root");
    ConfigDocument doc;
    if (!j.contains("version")) throw ConfigError("config missing required \"version\" key");
    doc.version = j.at("version").get<int>();
    if (doc.version != 1) throw ConfigError("unsupported config version " + std::to_string(doc.version));
    if (j.contains("model")) doc.model = parse_model_section(j.at("model"));

    using cfgdetail::load;
    if (j.contains("train")) {
        const auto& t = j.at("train");
        cfgdetail::check_keys(t,
                              {"steps", "epochs", "lr_max", "lr_min", "weight_decay", "seed", "patch_extents",
                               "augment", "eval_every", "include_background", "smooth"},
                              "train");
        load(t, "steps", doc.train.steps);
        load(t, "epochs", doc.train.epochs);
        load(t, "lr_max", doc.train.lr_max);
        load(t, "lr_min", doc.train.lr_min);
        load(t, "weight_decay", doc.train.weight_decay);
        load(t, "seed", doc.train.seed);
        cfgdetail::load_extents(t, "patch_extents", doc.train.patch_extents);
        load(t, "augment", doc.train.augment);
        load(t, "eval_every", doc.train.eval_every);
        load(t, "include_background", doc.train.include_background);
        load(t, "smooth", doc.train.smooth);
    }
    if (j.contains("data")) {
        const auto& d = j.at("data");
        cfgdetail::check_keys(d, {"num_samples", "extents", "channels", "noise_sigma", "seed"}, "data");
        load(d, "num_samples", doc.data.num_samples);
        cfgdetail::load_extents(d, "extents", doc.data.extents);
        load(d, "channels", doc.data.channels);
        load(d, "noise_sigma", doc.data.noise_sigma);
        load(d, "seed", doc.data.seed);
    }
    if (j.contains("analyze")) {
        const auto& a = j.at("analyze");
        cfgdetail::check_keys(a,
                              {"input_extents", "batch", "bytes_per_element", "reference_params_millions",
                               "reference_macs_g", "reference_memory_gb"},
                              "analyze");
        cfgdetail::load_extents(a, "input_extents", doc.analyze.input_extents);
        load(a, "batch", doc.analyze.batch);
        load(a, "bytes_per_element", doc.analyze.bytes_per_element);
        load(a, "reference_params_millions", doc.analyze.reference_params_millions);
        load(a, "reference_macs_g", doc.analyze.reference_macs_g);
        load(a, "reference_memory_gb", doc.analyze.reference_memory_gb);
    } else {
        doc.analyze.input_extents = doc.model.input_extents;
    }
    if (j.contains("emissions")) {
        doc.has_emissions = true;
        const auto& e = j.at("emissions");
        cfgdetail::check_keys(e, {"hours", "power_kw", "preset", "intensity"}, "emissions");
        load(e, "hours", doc.emissions.hours);
        load(e, "power_kw", doc.emissions.power_kw);
        load(e, "preset", doc.emissions.preset);
        load(e, "intensity", doc.emissions.intensity);
    }
    return doc;
}

inline double emissions_intensity(const EmissionsConfig& e) {
    if (e.intensity > 0.0) return e.intensity;
    if (!e.preset.empty()) return emissions_preset_intensity(e.preset);
    return 0.61;  // amazon default
}

// Canonical serialized form of the model section; nlohmann orders keys, so
// the digest is stable across writers.
inline std::string canonical_model_json(const ModelConfig& m) {
    nlohmann::json j;
    j["in_channels"] = m.in_channels;
    j["num_classes"] = m.num_classes;
    j["stage_channels"] = m.stage_channels;
    j["cmmb_per_stage"] = m.cmmb_per_stage;
    j["d_state"] = m.d_state;
    j["expand"] = m.expand;
    j["dconv"] = m.dconv;
    j["norm_kind"] = m.norm_kind == NormKind::Group ? "group" : "instance";
    j["norm_groups"] = m.norm_groups;
    j["tom_layernorm"] = m.tom_layernorm;
    j["interslice_order"] = m.interslice_order == InterSliceOrder::DepthFastest ? "depth_fastest" : "height_fastest";
    j["resblock_preact"] = m.resblock_preact;
    j["allow_custom_bottleneck"] = m.allow_custom_bottleneck;
    j["input_extents"] = m.input_extents;
    j["norm_eps"] = m.norm_eps;
    j["mlp_hidden_ratio"] = m.mlp_hidden_ratio;
    return j.dump();
}

inline std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::uint64_t config_digest(const ModelConfig& m) { return fnv1a64(canonical_model_json(m)); }

// ---------------------------------------------------------------------------
// Report JSON emission
// ---------------------------------------------------------------------------

inline nlohmann::json report_json(const CostReport& rep) {
    nlohmann::json j;
    j["input_extents"] = rep.input_extents;
    j["batch"] = rep.batch;
    j["bytes_per_element"] = rep.bytes_per_element;
    nlohmann::json rows = nlohmann::json::array();
    for (const CostRow& r : rep.rows) {
        rows.push_back({{"name", r.name},
                        {"kind", r.kind},
                        {"params", r.params},
                        {"macs", r.macs},
                        {"flops", r.flops},
                        {"activation_elems", r.activation_elems}});
    }
    j["rows"] = rows;
    j["total_params"] = rep.total_params;
    j["total_macs"] = rep.total_macs;
    j["total_flops"] = rep.total_flops;
    j["total_activation_elems"] = rep.total_activation_elems;
    j["peak_memory_bytes"] = rep.peak_memory_bytes;
    if (rep.reference_params_millions > 0.0) {
        j["reference_params_millions"] = rep.reference_params_millions;
        j["params_deviation_pct"] = rep.params_deviation_pct;
    }
    if (rep.reference_macs_g > 0.0) {
        j["reference_macs_g"] = rep.reference_macs_g;
        j["macs_deviation_pct"] = rep.macs_deviation_pct;
    }
    if (rep.reference_memory_gb > 0.0) {
        j["reference_memory_gb"] = rep.reference_memory_gb;
        j["memory_ratio"] = rep.memory_ratio;
    }
    if (!rep.co2.empty()) {
        nlohmann::json co2 = nlohmann::json::array();
        for (const Co2Row& r : rep.co2) {
            co2.push_back(
                {{"label", r.label}, {"hours", r.hours}, {"power_kw", r.power_kw}, {"intensity", r.intensity}, {"kg", r.kg}});
        }
        j["co2"] = co2;
    }
    return j;
}

inline nlohmann::json history_json(const TrainResult& r) {
    nlohmann::json rows = nlohmann::json::array();
    for (const HistoryRow& h : r.history) {
        nlohmann::json row = {{"step", h.step}, {"loss", h.loss}, {"lr", h.lr}};
        if (h.has_dice) row["mean_dice"] = h.mean_dice;
        rows.push_back(row);
    }
    nlohmann::json j;
    j["history"] = rows;
    j["final_mean_dice"] = r.final_mean_dice;
    j["final_per_class_dice"] = r.final_per_class;
    return j;
}

}  // namespace srm

#endif  // SRM_CONFIG_HPP
