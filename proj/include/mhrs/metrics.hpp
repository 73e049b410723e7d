#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "mhrs/engine.hpp"
#include "mhrs/errors.hpp"
#include "mhrs/events.hpp"

namespace mhrs {

struct RunSummary {
    double accept_rate = 0.0;
    double mean_wait_minutes = 0.0;
    double mean_idle_minutes_per_request = 0.0;
    double effective_distance_ratio = 1.0;
    std::map<int, long> hop_histogram;
    double mean_used_vehicles = 0.0;
    std::vector<double> reward_trace;
    std::string config_hash;
    std::uint64_t seed = 0;
    long admitted = 0;
    long rejected = 0;
    long completed = 0;
    bool any_shared_leg = false;

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["accept_rate"] = accept_rate;
        j["mean_wait_minutes"] = completed > 0 ? nlohmann::json(mean_wait_minutes) : nlohmann::json();
        j["mean_idle_minutes_per_request"] = mean_idle_minutes_per_request;
        j["effective_distance_ratio"] = effective_distance_ratio;
        nlohmann::json hist = nlohmann::json::object();
        for (const auto& [hops, count] : hop_histogram) hist[std::to_string(hops)] = count;
        j["hop_histogram"] = hist;
        j["mean_used_vehicles"] = mean_used_vehicles;
        j["reward_trace"] = reward_trace;
        j["config_hash"] = config_hash;
        j["seed"] = seed;
        j["admitted"] = admitted;
        j["rejected"] = rejected;
        j["completed"] = completed;
        j["any_shared_leg"] = any_shared_leg;
        return j;
    }
};

/// Summary from the engine's online accumulators.
inline RunSummary summarize(const Simulation& sim, const std::string& config_hash = "") {
    const RunAccumulators& a = sim.totals();
    RunSummary s;
    s.admitted = a.admitted;
    s.rejected = a.rejected;
    s.completed = a.completed;
    s.accept_rate = a.admitted > 0
                        ? static_cast<double>(a.admitted - a.rejected) / a.admitted
                        : 0.0;
    s.mean_wait_minutes = a.completed > 0 ? a.wait_minutes_total / a.completed : 0.0;
    s.mean_idle_minutes_per_request = a.admitted > 0 ? a.idle_vehicle_minutes / a.admitted : 0.0;
    s.effective_distance_ratio =
        a.apportioned_m_completed > 0.0 ? a.direct_leg_m_completed / a.apportioned_m_completed
                                        : 1.0;
    s.hop_histogram = a.hop_histogram;
    s.mean_used_vehicles =
        a.steps > 0 ? static_cast<double>(a.serving_vehicle_steps) / a.steps : 0.0;
    s.reward_trace = a.reward_trace;
    s.config_hash = config_hash;
    s.seed = sim.config().seed;
    s.any_shared_leg = a.any_shared_leg;
    return s;
}

/// Independent recomputation of every run metric from the raw event log.
struct LogReplay {
    long admitted = 0;
    long rejected = 0;
    long completed = 0;
    double wait_minutes_total = 0.0;
    double idle_vehicle_minutes = 0.0;
    long serving_vehicle_steps = 0;
    int steps = 0;
    std::map<int, long> hop_histogram;
    double direct_leg_m_completed = 0.0;
    double apportioned_m_completed = 0.0;
    // per-vehicle ledgers over completed passengers only
    std::map<int, double> vehicle_direct_m;
    std::map<int, double> vehicle_apportioned_m;
    bool any_shared_leg = false;

    double accept_rate() const {
        if (admitted == 0) throw undefined_metric("accept_rate: zero requests");
        return static_cast<double>(admitted - rejected) / admitted;
    }
    double mean_wait_minutes() const {
        if (completed == 0) throw undefined_metric("wait_time_stats: no completed trips");
        return wait_minutes_total / completed;
    }
    double mean_idle_minutes_per_request() const {
        if (admitted == 0) throw undefined_metric("idle_time_stats: zero requests");
        return idle_vehicle_minutes / admitted;
    }
    double effective_distance_ratio() const {
        if (apportioned_m_completed <= 0.0)
            throw undefined_metric("effective_distance: zero served distance");
        return direct_leg_m_completed / apportioned_m_completed;
    }
    double vehicle_effective_distance(int vehicle) const {
        const auto d = vehicle_direct_m.find(vehicle);
        const auto a = vehicle_apportioned_m.find(vehicle);
        if (d == vehicle_direct_m.end() || a == vehicle_apportioned_m.end() || a->second <= 0.0)
            throw undefined_metric("effective_distance: vehicle served no completed distance");
        return d->second / a->second;
    }
    double mean_used_vehicles() const {
        return steps > 0 ? static_cast<double>(serving_vehicle_steps) / steps : 0.0;
    }
};

inline LogReplay replay_log(const EventLog& log, const GridMap& grid, int fleet_size,
                            int total_steps, double dt_minutes, double start_min) {
    LogReplay r;
    r.steps = total_steps;

    struct Pax {
        double req_t = 0.0;
        std::vector<TripLeg> legs;
        int leg_cursor = 0;
        double first_pickup = -1.0;
        double hop_drop_t = -1.0;
        double hop_wait_total = 0.0;
        int hops = 0;
        double direct_m = 0.0;
        double savings_m = 0.0;
        int best_remaining_cells = -1;
        std::map<int, double> per_vehicle_direct_m;
        std::map<int, double> per_vehicle_savings_m;
        bool completed = false;
    };
    std::map<int, Pax> pax;
    std::map<int, std::set<int>> assigned;  // vehicle -> request ids
    std::map<int, std::set<int>> onboard;

    auto apply = [&](const Event& e) {
        if (e.kind == "request") {
            ++r.admitted;
            auto& p = pax[e.fields.at("request").get<int>()];
            p.req_t = e.fields.at("req_t").get<double>();
        } else if (e.kind == "plan") {
            auto& p = pax[e.fields.at("request").get<int>()];
            for (const auto& leg : e.fields.at("legs")) {
                TripLeg l;
                l.from = leg.at(0).get<int>();
                l.to = leg.at(1).get<int>();
                const std::string kind = leg.at(2).get<std::string>();
                l.kind = kind == "direct" ? LegKind::direct
                                          : (kind == "to_hop" ? LegKind::to_hop : LegKind::from_hop);
                p.legs.push_back(l);
            }
        } else if (e.kind == "assign") {
            const int vehicle = e.fields.at("vehicle").get<int>();
            for (const auto& req : e.fields.at("requests")) assigned[vehicle].insert(req.get<int>());
        } else if (e.kind == "reject") {
            ++r.rejected;
            const int req = e.fields.at("request").get<int>();
            for (auto& [v, ids] : assigned) ids.erase(req);
        } else if (e.kind == "pickup") {
            const int vehicle = e.fields.at("vehicle").get<int>();
            const int req = e.fields.at("request").get<int>();
            const int zone = e.fields.at("zone").get<int>();
            assigned[vehicle].erase(req);
            onboard[vehicle].insert(req);
            auto& p = pax[req];
            if (p.first_pickup < 0.0) p.first_pickup = e.t;
            if (p.hop_drop_t >= 0.0) {
                p.hop_wait_total += e.t - p.hop_drop_t;
                p.hop_drop_t = -1.0;
            }
            p.best_remaining_cells = zone_distance_cells(grid, zone, p.legs[p.leg_cursor].to);
        } else if (e.kind == "move") {
            const int vehicle = e.fields.at("vehicle").get<int>();
            const int to = e.fields.at("zone").get<int>();
            auto& ids = onboard[vehicle];
            const int k = static_cast<int>(ids.size());
            const double saving = grid.cell_edge_m * (1.0 - 1.0 / std::max(k, 1));
            for (int req : ids) {
                auto& p = pax[req];
                const int target = p.legs[p.leg_cursor].to;
                const int rem = zone_distance_cells(grid, to, target);
                if (rem < p.best_remaining_cells) {
                    p.best_remaining_cells = rem;
                    if (k >= 2) {
                        p.savings_m += saving;
                        p.per_vehicle_savings_m[vehicle] += saving;
                    }
                }
            }
        } else if (e.kind == "hop_drop" || e.kind == "dropoff") {
            const int vehicle = e.fields.at("vehicle").get<int>();
            const int req = e.fields.at("request").get<int>();
            auto& p = pax[req];
            if (vehicle >= 0) {
                onboard[vehicle].erase(req);
                const TripLeg& leg = p.legs[p.leg_cursor];
                const double d = zone_distance_m(grid, leg.from, leg.to);
                p.direct_m += d;
                p.per_vehicle_direct_m[vehicle] += d;
                ++p.leg_cursor;
            }
            if (e.kind == "hop_drop") {
                ++p.hops;
                p.hop_drop_t = e.t;
            } else {
                p.completed = true;
                ++r.completed;
                r.wait_minutes_total +=
                    (p.first_pickup < 0.0 ? 0.0 : p.first_pickup - p.req_t) + p.hop_wait_total;
                r.hop_histogram[p.hops] += 1;
                r.direct_leg_m_completed += p.direct_m;
                r.apportioned_m_completed += p.direct_m - p.savings_m;
                if (p.savings_m > 0.0) r.any_shared_leg = true;
                for (const auto& [v, m] : p.per_vehicle_direct_m) {
                    r.vehicle_direct_m[v] += m;
                    r.vehicle_apportioned_m[v] += m;
                }
                for (const auto& [v, m] : p.per_vehicle_savings_m)
                    r.vehicle_apportioned_m[v] -= m;
            }
        }
        // dispatch events carry no replayed metric state
    };

    const auto& events = log.events();
    std::size_t next = 0;
    for (int k = 0; k < total_steps; ++k) {
        const double t_next = start_min + (k + 1) * dt_minutes;
        while (next < events.size() && events[next].t < t_next - 1e-9) apply(events[next++]);
        // end-of-step vehicle status
        int serving = 0;
        for (int v = 0; v < fleet_size; ++v) {
            const bool active = !assigned[v].empty() || !onboard[v].empty();
            if (active) ++serving;
        }
        r.serving_vehicle_steps += serving;
        r.idle_vehicle_minutes += dt_minutes * (fleet_size - serving);
    }
    while (next < events.size()) apply(events[next++]);
    return r;
}

// metric entry points over a replayed log
inline double accept_rate(const LogReplay& r) { return r.accept_rate(); }
inline double wait_time_stats(const LogReplay& r) { return r.mean_wait_minutes(); }
inline double idle_time_stats(const LogReplay& r) { return r.mean_idle_minutes_per_request(); }
inline double effective_distance(const LogReplay& r) { return r.effective_distance_ratio(); }

inline std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

inline void write_metrics_csv(std::ostream& out, const std::vector<StepMetrics>& rows) {
    out << "step,t,admitted,rejected,completed,pending,assigned,riding,hop_waiting,"
           "idle_vehicles,serving_vehicles,dispatches,gap,dispatch_minutes,delta_minutes,"
           "newly_active,hops,reward\n";
    for (const auto& m : rows) {
        out << m.step << ',' << format_double(m.t) << ',' << m.admitted << ',' << m.rejected << ','
            << m.completed << ',' << m.pending << ',' << m.assigned << ',' << m.riding << ','
            << m.hop_waiting << ',' << m.idle_vehicles << ',' << m.serving_vehicles << ','
            << m.dispatches << ',' << format_double(m.global.gap) << ','
            << format_double(m.global.dispatch_minutes) << ','
            << format_double(m.global.delta_minutes) << ',' << m.global.newly_active_count << ','
            << m.global.hops << ',' << format_double(m.global.reward) << "\n";
    }
}

inline void save_metrics_csv(const std::string& path, const std::vector<StepMetrics>& rows) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("save_metrics_csv: cannot open " + path);
    write_metrics_csv(out, rows);
}

/// Per-mode, per-seed summaries over a shared workload set.
struct Comparison {
    std::vector<Mode> modes;
    std::vector<std::uint64_t> seeds;
    // metric -> mode -> per-seed values
    std::map<std::string, std::map<std::string, std::vector<double>>> series;

    void add(Mode mode, const RunSummary& s) {
        const std::string m = to_string(mode);
        series["accept_rate"][m].push_back(s.accept_rate);
        series["mean_wait_minutes"][m].push_back(s.mean_wait_minutes);
        series["mean_idle_minutes_per_request"][m].push_back(s.mean_idle_minutes_per_request);
        series["effective_distance_ratio"][m].push_back(s.effective_distance_ratio);
        series["mean_used_vehicles"][m].push_back(s.mean_used_vehicles);
        double with_hops = 0.0;
        long total = 0;
        for (const auto& [hops, count] : s.hop_histogram) {
            total += count;
            if (hops > 0) with_hops += static_cast<double>(count);
        }
        series["share_of_trips_with_hops"][m].push_back(total > 0 ? with_hops / total : 0.0);
    }

    static std::pair<double, double> mean_std(const std::vector<double>& xs) {
        if (xs.empty()) return {0.0, 0.0};
        double mean = 0.0;
        for (double x : xs) mean += x;
        mean /= xs.size();
        double var = 0.0;
        for (double x : xs) var += (x - mean) * (x - mean);
        var /= xs.size();
        return {mean, std::sqrt(var)};
    }

    double mean_of(const std::string& metric, Mode mode) const {
        return mean_std(series.at(metric).at(to_string(mode))).first;
    }

    void write_csv(std::ostream& out) const {
        out << "mode,metric,mean,std\n";
        for (const auto& [metric, by_mode] : series)
            for (const auto& [mode, values] : by_mode) {
                const auto [mean, sd] = mean_std(values);
                out << mode << ',' << metric << ',' << format_double(mean) << ','
                    << format_double(sd) << "\n";
            }
    }

    nlohmann::json to_json() const {
        nlohmann::json j;
        nlohmann::json mode_names = nlohmann::json::array();
        for (Mode m : modes) mode_names.push_back(to_string(m));
        j["modes"] = mode_names;
        j["seeds"] = seeds;
        j["metrics"] = series;
        return j;
    }
};

struct ComparisonRun {
    SimConfig config;
    std::vector<TripRecord> workload;
    const DenseNet* policy = nullptr;
    double epsilon = 0.0;
};

/// Run the same seeded workloads under each mode and tabulate the metrics.
/// Workloads must be identical across modes for a given seed.
inline Comparison compare_modes(const GridMap& grid, const EtaModel& eta,
                                const DemandPredictor& demand,
                                const std::map<Mode, std::vector<ComparisonRun>>& runs_by_mode,
                                int run_steps) {
    if (runs_by_mode.empty()) throw invalid_comparison("compare_modes: no modes");
    const auto& first = runs_by_mode.begin()->second;
    for (const auto& [mode, runs] : runs_by_mode) {
        if (runs.size() != first.size())
            throw invalid_comparison("compare_modes: seed counts differ across modes");
        for (std::size_t i = 0; i < runs.size(); ++i) {
            if (runs[i].config.seed != first[i].config.seed)
                throw invalid_comparison("compare_modes: seeds differ across modes");
            if (runs[i].workload.size() != first[i].workload.size())
                throw invalid_comparison("compare_modes: workloads differ across modes");
            for (std::size_t k = 0; k < runs[i].workload.size(); ++k) {
                const TripRecord& a = runs[i].workload[k];
                const TripRecord& b = first[i].workload[k];
                if (a.request_time != b.request_time || a.origin != b.origin ||
                    a.destination != b.destination)
                    throw invalid_comparison("compare_modes: workloads differ across modes");
            }
        }
    }
    Comparison cmp;
    for (const auto& run : first) cmp.seeds.push_back(run.config.seed);
    for (const auto& [mode, runs] : runs_by_mode) {
        cmp.modes.push_back(mode);
        for (const auto& run : runs) {
            SimConfig cfg = run.config;
            cfg.mode = mode;
            Simulation sim(cfg, grid, run.workload, eta, demand);
            if (run.policy != nullptr) sim.attach_policy(run.policy, run.epsilon, false);
            sim.run(run_steps);
            cmp.add(mode, summarize(sim));
        }
    }
    return cmp;
}

}  // namespace mhrs
