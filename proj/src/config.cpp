#include "otdrnet/config.hpp"

#include <fstream>
#include <set>
#include <stdexcept>

namespace otdrnet {

namespace {

using nlohmann::json;

void reject_unknown(const json& j, const std::set<std::string>& known, const char* what) {
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!known.count(it.key()))
            throw std::invalid_argument(std::string(what) + ": unknown field '" + it.key() + "'");
}

template <typename T>
void maybe(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

} // namespace

SimConfig sim_config_from_json(const json& j) {
    static const std::set<std::string> known = {
        "pulse_width_ns",     "sample_interval_ns", "wavelength_nm",
        "atten_db_per_km",    "group_index",        "backscatter_ref_db",
        "peak_ceiling_db",    "smoothing_sigma_samples", "rng_seed"};
    reject_unknown(j, known, "SimConfig");
    SimConfig cfg;
    maybe(j, "pulse_width_ns", cfg.pulse_width_ns);
    maybe(j, "sample_interval_ns", cfg.sample_interval_ns);
    maybe(j, "wavelength_nm", cfg.wavelength_nm);
    maybe(j, "atten_db_per_km", cfg.atten_db_per_km);
    maybe(j, "group_index", cfg.group_index);
    maybe(j, "backscatter_ref_db", cfg.backscatter_ref_db);
    maybe(j, "peak_ceiling_db", cfg.peak_ceiling_db);
    maybe(j, "smoothing_sigma_samples", cfg.smoothing_sigma_samples);
    maybe(j, "rng_seed", cfg.rng_seed);
    cfg.validate();
    return cfg;
}

json sim_config_to_json(const SimConfig& cfg) {
    json j;
    j["pulse_width_ns"] = cfg.pulse_width_ns;
    j["sample_interval_ns"] = cfg.sample_interval_ns;
    j["wavelength_nm"] = cfg.wavelength_nm;
    j["atten_db_per_km"] = cfg.atten_db_per_km;
    j["group_index"] = cfg.group_index;
    j["backscatter_ref_db"] = cfg.backscatter_ref_db;
    j["peak_ceiling_db"] = cfg.peak_ceiling_db;
    j["smoothing_sigma_samples"] = cfg.smoothing_sigma_samples;
    j["rng_seed"] = cfg.rng_seed;
    return j;
}

TrainConfig train_config_from_json(const json& j) {
    static const std::set<std::string> known = {"task_weights", "lr",       "lr_decay",
                                                "batch_size",   "epochs",   "seed",
                                                "patience",     "clip_norm", "parallel"};
    reject_unknown(j, known, "TrainConfig");
    TrainConfig cfg;
    if (j.contains("task_weights")) {
        const auto& w = j.at("task_weights");
        if (!w.is_array() || w.size() != 4)
            throw std::invalid_argument("TrainConfig: task_weights must have 4 entries");
        cfg.weights.diag = w.at(0);
        cfg.weights.pos = w.at(1);
        cfg.weights.refl = w.at(2);
        cfg.weights.loss = w.at(3);
    }
    maybe(j, "lr", cfg.lr);
    maybe(j, "lr_decay", cfg.lr_decay);
    maybe(j, "batch_size", cfg.batch_size);
    maybe(j, "epochs", cfg.epochs);
    maybe(j, "seed", cfg.seed);
    maybe(j, "patience", cfg.patience);
    maybe(j, "clip_norm", cfg.clip_norm);
    maybe(j, "parallel", cfg.parallel);
    if (cfg.batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
    if (cfg.lr_decay <= 0.0 || cfg.lr_decay > 1.0)
        throw std::invalid_argument("TrainConfig: lr_decay must be in (0, 1]");
    if (cfg.weights.diag <= 0 || cfg.weights.pos <= 0 || cfg.weights.refl <= 0 ||
        cfg.weights.loss <= 0)
        throw std::invalid_argument("TrainConfig: task weights must be positive");
    return cfg;
}

json train_config_to_json(const TrainConfig& cfg) {
    json j;
    j["task_weights"] = {cfg.weights.diag, cfg.weights.pos, cfg.weights.refl, cfg.weights.loss};
    j["lr"] = cfg.lr;
    j["lr_decay"] = cfg.lr_decay;
    j["batch_size"] = cfg.batch_size;
    j["epochs"] = cfg.epochs;
    j["seed"] = cfg.seed;
    j["patience"] = cfg.patience;
    j["clip_norm"] = cfg.clip_norm;
    j["parallel"] = cfg.parallel;
    return j;
}

ThresholdConfig thresholds_from_json(const json& j) {
    static const std::set<std::string> known = {"corr_threshold", "amplitude_threshold_db"};
    reject_unknown(j, known, "ThresholdConfig");
    ThresholdConfig cfg;
    cfg.corr_threshold = j.at("corr_threshold");
    cfg.amplitude_threshold_db = j.at("amplitude_threshold_db");
    if (cfg.corr_threshold <= 0.0 || cfg.corr_threshold >= 1.0)
        throw std::invalid_argument("ThresholdConfig: corr_threshold must be in (0, 1)");
    if (cfg.amplitude_threshold_db <= 0.0)
        throw std::invalid_argument("ThresholdConfig: amplitude_threshold_db must be positive");
    return cfg;
}

json thresholds_to_json(const ThresholdConfig& cfg) {
    json j;
    j["corr_threshold"] = cfg.corr_threshold;
    j["amplitude_threshold_db"] = cfg.amplitude_threshold_db;
    return j;
}

json load_json_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open config file: " + path);
    json j;
    f >> j;
    return j;
}

void save_json_file(const json& j, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write file: " + path);
    f << j.dump(2) << '\n';
}

} // namespace otdrnet
