#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mhrs/demand.hpp"
#include "mhrs/dispatch.hpp"
#include "mhrs/engine.hpp"
#include "mhrs/errors.hpp"
#include "mhrs/grid.hpp"
#include "mhrs/version.hpp"

namespace mhrs {

using ConfigMap = std::map<std::string, std::string>;

/// Flat `key = value` file; '#' starts a comment, blank lines are ignored.
inline ConfigMap parse_config_text(std::istream& in) {
    ConfigMap out;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            const auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        const std::string t = trim(line);
        if (t.empty()) continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos)
            throw invalid_config("config line " + std::to_string(lineno) + ": expected key = value");
        const std::string key = trim(t.substr(0, eq));
        const std::string value = trim(t.substr(eq + 1));
        if (key.empty()) throw invalid_config("config line " + std::to_string(lineno) + ": empty key");
        out[key] = value;
    }
    return out;
}

inline ConfigMap load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open config file: " + path);
    return parse_config_text(in);
}

/// FNV-1a over the canonical sorted "key=value\n" rendering.
inline std::string config_hash(const ConfigMap& cfg) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto feed = [&](const std::string& s) {
        for (unsigned char c : s) {
            h ^= c;
            h *= 0x100000001b3ULL;
        }
    };
    for (const auto& [k, v] : cfg) {
        feed(k);
        feed("=");
        feed(v);
        feed("\n");
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

struct ExperimentConfig {
    ConfigMap raw;
    GridMap grid;
    SimConfig sim;
    TrainConfig train;
    int hop_spacing = 3;
    double hop_min_requests = 10.0;
    int demand_bin_minutes = 60;
    int eta_bin_minutes = 60;
    double default_speed_m_per_min = 800.0;
    std::optional<GeoBBox> bbox;
    std::string workload_kind = "synth";  // synth | csv
    std::string workload_csv;
    std::string demand_history_csv;  // optional separate history for fitting
    double synth_rate = 0.02;        // per zone per step
    int steps = 200;

    std::string hash() const { return config_hash(raw); }
};

namespace detail {

inline const std::set<std::string>& known_keys() {
    static const std::set<std::string> keys = {
        "rows", "cols", "cell_edge_m", "hop_spacing", "hop_min_requests", "hop_zones",
        "demand_bin_minutes", "eta_bin_minutes", "default_speed_m_per_min", "bbox",
        "dt_minutes", "horizon_steps", "fleet_size", "beta1", "beta2", "beta3", "beta4",
        "beta5", "discount", "warmup_steps", "rejection_radius_cells",
        "hop_wait_deadline_min", "hop_detour_factor", "hop_min_idle_vehicles",
        "vehicle_capacity", "max_hops", "mode",
        "seed", "start_min", "check_invariants", "workload", "workload_csv",
        "demand_history_csv", "synth_rate", "steps", "hidden", "learning_rate", "batch_size",
        "buffer_capacity", "eps_start", "eps_end", "eps_decay_steps", "target_alpha",
        "target_interval", "train_interval", "reward_scale", "max_grad_norm"};
    return keys;
}

inline double to_double(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const double x = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (...) {
        throw invalid_config("config key " + key + ": not a number: " + v);
    }
}

inline std::int64_t to_int(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const std::int64_t x = std::stoll(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (...) {
        throw invalid_config("config key " + key + ": not an integer: " + v);
    }
}

}  // namespace detail

inline ExperimentConfig make_experiment_config(const ConfigMap& raw) {
    for (const auto& [k, v] : raw)
        if (!detail::known_keys().count(k)) throw invalid_config("unknown config key: " + k);
    auto get = [&](const char* key) -> std::optional<std::string> {
        const auto it = raw.find(key);
        if (it == raw.end()) return std::nullopt;
        return it->second;
    };
    auto num = [&](const char* key, double dflt) {
        const auto v = get(key);
        return v ? detail::to_double(key, *v) : dflt;
    };
    auto integer = [&](const char* key, std::int64_t dflt) {
        const auto v = get(key);
        return v ? detail::to_int(key, *v) : dflt;
    };

    ExperimentConfig e;
    e.raw = raw;
    e.grid = build_grid(static_cast<int>(integer("rows", 10)), static_cast<int>(integer("cols", 10)),
                        num("cell_edge_m", 800.0));
    e.hop_spacing = static_cast<int>(integer("hop_spacing", 3));
    e.hop_min_requests = num("hop_min_requests", 10.0);
    if (const auto hz = get("hop_zones")) {
        // explicit "row:col;row:col" list, mainly for scripted scenarios
        std::stringstream ss(*hz);
        std::string item;
        while (std::getline(ss, item, ';')) {
            if (item.empty()) continue;
            const auto colon = item.find(':');
            if (colon == std::string::npos) throw invalid_config("hop_zones: expected row:col");
            const int r = static_cast<int>(detail::to_int("hop_zones", item.substr(0, colon)));
            const int c = static_cast<int>(detail::to_int("hop_zones", item.substr(colon + 1)));
            if (!e.grid.contains(r, c)) throw invalid_config("hop_zones: out of bounds");
            e.grid.hop_zones.insert(e.grid.id(r, c));
        }
    }

    e.demand_bin_minutes = static_cast<int>(integer("demand_bin_minutes", 60));
    e.eta_bin_minutes = static_cast<int>(integer("eta_bin_minutes", 60));
    e.default_speed_m_per_min = num("default_speed_m_per_min", 800.0);
    if (const auto bb = get("bbox")) {
        std::stringstream ss(*bb);
        std::string item;
        std::vector<double> vals;
        while (std::getline(ss, item, ',')) vals.push_back(detail::to_double("bbox", item));
        if (vals.size() != 4) throw invalid_config("bbox: expected minlat,minlon,maxlat,maxlon");
        e.bbox = GeoBBox{vals[0], vals[1], vals[2], vals[3]};
    }

    e.sim.dt_minutes = num("dt_minutes", 1.0);
    e.sim.horizon_steps = static_cast<int>(integer("horizon_steps", 30));
    e.sim.fleet_size = static_cast<int>(integer("fleet_size", 20));
    e.sim.weights.beta1 = num("beta1", 5.0);
    e.sim.weights.beta2 = num("beta2", 1.0);
    e.sim.weights.beta3 = num("beta3", 3.5);
    e.sim.weights.beta4 = num("beta4", 0.05);
    e.sim.weights.beta5 = num("beta5", 2.0);
    e.sim.discount = num("discount", 0.99);
    e.sim.warmup_steps = static_cast<int>(integer("warmup_steps", 20));
    e.sim.rejection_radius_cells = static_cast<int>(integer("rejection_radius_cells", 0));
    e.sim.hop_wait_deadline_min = num("hop_wait_deadline_min", 10.0);
    e.sim.hop_detour_factor = num("hop_detour_factor", 0.2);
    e.sim.hop_min_idle_vehicles = static_cast<int>(integer("hop_min_idle_vehicles", 0));
    e.sim.vehicle_capacity = static_cast<int>(integer("vehicle_capacity", 4));
    e.sim.max_hops = static_cast<int>(integer("max_hops", 3));
    e.sim.mode = parse_mode(get("mode").value_or("mhrs"));
    e.sim.seed = static_cast<std::uint64_t>(integer("seed", 1));
    e.sim.start_min = num("start_min", -1.0);
    e.sim.check_invariants = integer("check_invariants", 1) != 0;

    e.workload_kind = get("workload").value_or("synth");
    if (e.workload_kind != "synth" && e.workload_kind != "csv")
        throw invalid_config("workload: expected synth or csv");
    e.workload_csv = get("workload_csv").value_or("");
    if (e.workload_kind == "csv" && e.workload_csv.empty())
        throw invalid_config("workload=csv requires workload_csv");
    e.demand_history_csv = get("demand_history_csv").value_or("");
    e.synth_rate = num("synth_rate", 0.02);
    e.steps = static_cast<int>(integer("steps", 200));

    e.train.discount = e.sim.discount;
    e.train.target_alpha = num("target_alpha", 0.9);
    e.train.learning_rate = num("learning_rate", 1e-3);
    e.train.batch_size = static_cast<int>(integer("batch_size", 32));
    e.train.buffer_capacity = static_cast<std::size_t>(integer("buffer_capacity", 50000));
    e.train.eps_start = num("eps_start", 1.0);
    e.train.eps_end = num("eps_end", 0.05);
    e.train.eps_decay_steps = static_cast<int>(integer("eps_decay_steps", 10000));
    e.train.target_interval = static_cast<int>(integer("target_interval", 50));
    e.train.train_interval = static_cast<int>(integer("train_interval", 1));
    e.train.reward_scale = num("reward_scale", 0.01);
    e.train.max_grad_norm = num("max_grad_norm", 10.0);
    e.train.seed = e.sim.seed;
    if (e.train.discount <= 0.0 || e.train.discount >= 1.0)
        throw invalid_config("discount must lie in (0,1)");
    if (e.train.target_alpha <= 0.0 || e.train.target_alpha > 1.0)
        throw invalid_config("target_alpha must lie in (0,1]");
    if (e.train.learning_rate <= 0.0) throw invalid_config("learning_rate must be positive");
    if (e.train.batch_size < 1) throw invalid_config("batch_size must be >= 1");
    if (e.train.eps_start < 0.0 || e.train.eps_start > 1.0 || e.train.eps_end < 0.0 ||
        e.train.eps_end > 1.0)
        throw invalid_config("epsilon bounds must lie in [0,1]");
    if (const auto h = get("hidden")) {
        e.train.hidden.clear();
        std::stringstream ss(*h);
        std::string item;
        while (std::getline(ss, item, ','))
            e.train.hidden.push_back(static_cast<int>(detail::to_int("hidden", item)));
        if (e.train.hidden.empty()) throw invalid_config("hidden: expected layer sizes");
    }
    return e;
}

inline std::vector<TripRecord> build_workload(const ExperimentConfig& e, std::uint64_t seed,
                                              int steps) {
    if (e.workload_kind == "csv") {
        std::ifstream in(e.workload_csv);
        if (!in) throw io_error("cannot open workload csv: " + e.workload_csv);
        return ingest_trips(in, e.grid, e.bbox ? &*e.bbox : nullptr).trips;
    }
    const std::vector<double> rates(e.grid.zone_count(), e.synth_rate);
    return synth_workload(e.grid, rates, steps, mix_seed(seed, 1), 0,
                          static_cast<int>(std::max(1.0, e.sim.dt_minutes)));
}

inline EtaModel build_eta_model(const ExperimentConfig& e) {
    EtaModel m;
    m.speed_m_per_min = e.default_speed_m_per_min;
    m.bin_minutes = e.eta_bin_minutes;
    return m;
}

inline DemandPredictor build_demand_predictor(const ExperimentConfig& e,
                                              const std::vector<TripRecord>& workload) {
    if (!e.demand_history_csv.empty()) {
        std::ifstream in(e.demand_history_csv);
        if (!in) throw io_error("cannot open demand history csv: " + e.demand_history_csv);
        const auto hist = ingest_trips(in, e.grid, e.bbox ? &*e.bbox : nullptr).trips;
        return fit_demand(hist, e.grid, e.demand_bin_minutes);
    }
    return fit_demand(workload, e.grid, e.demand_bin_minutes);
}

inline nlohmann::json make_manifest(const ConfigMap& raw, std::uint64_t seed) {
    nlohmann::json j;
    j["config"] = raw;
    j["config_hash"] = config_hash(raw);
    j["seed"] = seed;
    j["version"] = kVersion;
    return j;
}

inline nlohmann::json eta_model_to_json(const EtaModel& m) {
    nlohmann::json j;
    j["speed_m_per_min"] = m.speed_m_per_min;
    j["bin_minutes"] = m.bin_minutes;
    nlohmann::json entries = nlohmann::json::array();
    for (const auto& [key, mean] : m.table) {
        const auto& [o, d, bin] = key;
        entries.push_back({o, d, bin, mean});
    }
    j["table"] = entries;
    return j;
}

inline EtaModel eta_model_from_json(const nlohmann::json& j) {
    EtaModel m;
    m.speed_m_per_min = j.at("speed_m_per_min").get<double>();
    m.bin_minutes = j.at("bin_minutes").get<int>();
    for (const auto& row : j.at("table"))
        m.table[{row.at(0).get<int>(), row.at(1).get<int>(), row.at(2).get<int>()}] =
            row.at(3).get<double>();
    return m;
}

}  // namespace mhrs
