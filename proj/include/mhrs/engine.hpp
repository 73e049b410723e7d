#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "mhrs/demand.hpp"
#include "mhrs/dispatch.hpp"
#include "mhrs/errors.hpp"
#include "mhrs/events.hpp"
#include "mhrs/fleet.hpp"
#include "mhrs/grid.hpp"
#include "mhrs/matching.hpp"
#include "mhrs/replay.hpp"
#include "mhrs/rewards.hpp"
#include "mhrs/rng.hpp"

namespace mhrs {

enum class Mode { mhrs, rs, nors };

inline const char* to_string(Mode m) {
    switch (m) {
        case Mode::mhrs: return "mhrs";
        case Mode::rs: return "rs";
        case Mode::nors: return "nors";
    }
    return "?";
}

inline Mode parse_mode(const std::string& s) {
    if (s == "mhrs") return Mode::mhrs;
    if (s == "rs") return Mode::rs;
    if (s == "nors") return Mode::nors;
    throw invalid_config("unknown mode: " + s + " (expected mhrs|rs|nors)");
}

struct SimConfig {
    double dt_minutes = 1.0;
    int horizon_steps = 30;  // T
    int fleet_size = 20;     // N
    RewardWeights weights;
    double discount = 0.99;  // eta, used by the trainer
    int warmup_steps = 20;
    int rejection_radius_cells = 0;  // <=0 derives ceil(5000m / cell edge)
    double hop_wait_deadline_min = 10.0;
    double hop_detour_factor = 0.2;
    int hop_min_idle_vehicles = 0;  // fleet slack required before planning hops
    int vehicle_capacity = 4;       // C_v
    int max_hops = 3;          // P
    Mode mode = Mode::mhrs;
    std::uint64_t seed = 1;
    double start_min = -1.0;  // <0: start at the first request's minute
    bool check_invariants = true;
};

enum class PaxState { pending, assigned, riding, hop_waiting, completed, rejected };

inline const char* to_string(PaxState s) {
    switch (s) {
        case PaxState::pending: return "pending";
        case PaxState::assigned: return "assigned";
        case PaxState::riding: return "riding";
        case PaxState::hop_waiting: return "hop_waiting";
        case PaxState::completed: return "completed";
        case PaxState::rejected: return "rejected";
    }
    return "?";
}

struct PassengerRecord {
    int id = 0;
    int origin = 0;
    int destination = 0;
    double request_time = 0.0;
    TripPlan plan;
    PaxState state = PaxState::pending;
    int vehicle = -1;  // serving vehicle while assigned/riding
    double first_pickup_time = -1.0;
    double hop_wait_since = -1.0;
    double hop_wait_total = 0.0;
    double direct_minutes = 0.0;      // t(m): solo direct baseline
    double remaining_estimate = 0.0;  // t(a): refreshed every step
    // distance ledgers, filled as legs complete / while riding. A rider's
    // served (apportioned) distance is the direct distance of their legs
    // minus the savings earned whenever a cell of progress was shared:
    // cell * (1 - 1/k) with k riders onboard.
    double direct_leg_distance_m = 0.0;
    double shared_savings_m = 0.0;
    double apportioned_distance_m = 0.0;  // filled on completion
    int best_remaining_cells = -1;        // closest approach on the current leg
    std::map<int, double> per_vehicle_direct_m;
    std::map<int, double> per_vehicle_savings_m;

    int hops() const { return plan.hops_done; }
};

/// Predicted per-zone availability for steps 0..T: vehicles with a vacant
/// seat count at their current zone throughout; unavailable vehicles count at
/// their final drop zone from the step they are predicted to finish.
inline AvailabilityForecast forecast_availability(const std::vector<VehicleState>& fleet,
                                                  const GridMap& grid, int horizon_steps,
                                                  double dt_minutes) {
    AvailabilityForecast f;
    f.horizon = horizon_steps;
    f.zones = grid.zone_count();
    f.values.assign(static_cast<std::size_t>(horizon_steps + 1) * f.zones, 0.0);
    for (const auto& v : fleet) {
        if (v.has_vacant_seat()) {
            for (int k = 0; k <= horizon_steps; ++k) f.at(k, v.zone) += 1.0;
        } else if (!v.route.empty()) {
            const auto arrivals = route_arrival_minutes(grid, v, dt_minutes);
            const int free_step =
                static_cast<int>(std::ceil(arrivals.back() / dt_minutes - 1e-9));
            const int zone = v.route.back().zone;
            for (int k = std::max(free_step, 0); k <= horizon_steps; ++k) f.at(k, zone) += 1.0;
        }
    }
    return f;
}

struct StepMetrics {
    int step = 0;
    double t = 0.0;
    int admitted = 0;   // this step
    int rejected = 0;
    int completed = 0;
    int pending = 0;    // state counts at end of step
    int assigned = 0;
    int riding = 0;
    int hop_waiting = 0;
    int completed_total = 0;
    int rejected_total = 0;
    int idle_vehicles = 0;
    int serving_vehicles = 0;
    int dispatches = 0;
    GlobalRewardBreakdown global;
};

struct StepResult {
    GlobalRewardBreakdown global;
    StepEvents events;
    std::vector<double> vehicle_rewards;   // per vehicle index
    std::vector<Transition> transitions;   // completed decisions (training)
    int decisions = 0;
};

struct RunAccumulators {
    long admitted = 0;
    long rejected = 0;
    long completed = 0;
    double wait_minutes_total = 0.0;  // over completed trips
    double idle_vehicle_minutes = 0.0;
    double direct_leg_m_completed = 0.0;
    double apportioned_m_completed = 0.0;
    std::map<int, long> hop_histogram;  // hops -> completed trips
    long serving_vehicle_steps = 0;
    int steps = 0;
    std::vector<double> reward_trace;
    bool any_shared_leg = false;
};

/// Discrete-time fleet simulator. Single-threaded; owns all mutable state.
/// Identical (config, workload, seed) produce identical event logs.
class Simulation {
public:
    Simulation(SimConfig cfg, GridMap grid, std::vector<TripRecord> workload, EtaModel eta,
               DemandPredictor demand)
        : cfg_(cfg),
          grid_(std::move(grid)),
          workload_(std::move(workload)),
          eta_(std::move(eta)),
          demand_(std::move(demand)),
          policy_rng_(mix_seed(cfg.seed, 2)) {
        if (cfg_.dt_minutes <= 0.0) throw invalid_config("SimConfig: dt must be positive");
        if (cfg_.fleet_size < 1) throw invalid_config("SimConfig: fleet size must be >= 1");
        if (cfg_.horizon_steps < 1) throw invalid_config("SimConfig: horizon must be >= 1");
        if (cfg_.vehicle_capacity < 1) throw invalid_config("SimConfig: capacity must be >= 1");
        const RewardWeights& w = cfg_.weights;
        if (w.beta1 < 0 || w.beta2 < 0 || w.beta3 < 0 || w.beta4 < 0 || w.beta5 < 0)
            throw invalid_config("SimConfig: reward weights must be >= 0");
        if (cfg_.rejection_radius_cells <= 0)
            cfg_.rejection_radius_cells =
                static_cast<int>(std::ceil(5000.0 / grid_.cell_edge_m));
        std::stable_sort(workload_.begin(), workload_.end(),
                         [](const TripRecord& a, const TripRecord& b) {
                             return a.request_time < b.request_time;
                         });
        if (static_cast<int>(workload_.size()) < cfg_.fleet_size)
            throw invalid_config("init_sim: fewer requests than vehicles");
        const int capacity = cfg_.mode == Mode::nors ? 1 : cfg_.vehicle_capacity;
        for (int i = 0; i < cfg_.fleet_size; ++i) {
            VehicleState v;
            v.id = i;
            v.zone = workload_[i].origin;
            v.capacity = capacity;
            fleet_.push_back(std::move(v));
        }
        pending_decisions_.resize(fleet_.size());
        now_ = cfg_.start_min >= 0.0 ? cfg_.start_min
                                     : static_cast<double>(workload_.front().request_time);
    }

    const SimConfig& config() const { return cfg_; }
    const GridMap& grid() const { return grid_; }
    const std::vector<VehicleState>& fleet() const { return fleet_; }
    const std::vector<PassengerRecord>& passengers() const { return passengers_; }
    const EventLog& log() const { return log_; }
    const std::vector<StepMetrics>& step_metrics() const { return metrics_; }
    const RunAccumulators& totals() const { return acc_; }
    double now() const { return now_; }
    int step_index() const { return step_index_; }

    void attach_policy(const DenseNet* net, double epsilon, bool collect_transitions) {
        policy_net_ = net;
        epsilon_ = epsilon;
        collect_transitions_ = collect_transitions;
    }
    void set_epsilon(double epsilon) { epsilon_ = epsilon; }

    StepResult step() {
        StepResult res;
        const double t = now_;
        const double t_end = t + cfg_.dt_minutes;

        forecast_ = predict_demand(demand_, llround_minute(t), cfg_.horizon_steps,
                                   static_cast<int>(std::max(1.0, cfg_.dt_minutes)));
        std::vector<double> supply = available_supply();
        std::vector<double> demand_row(grid_.zone_count(), 0.0);
        for (int z = 0; z < grid_.zone_count(); ++z) demand_row[z] = forecast_.at(0, z);
        std::vector<std::uint8_t> prev_occupied = occupied_flags();
        std::vector<VehicleStepFacts> facts(fleet_.size());
        std::vector<DispatchRecord> dispatches;

        // (1) admit new requests and plan their trips
        int admitted_now = 0;
        while (next_request_ < workload_.size() &&
               static_cast<double>(workload_[next_request_].request_time) < t_end) {
            admit(workload_[next_request_], t);
            ++next_request_;
            ++admitted_now;
        }

        // (2)+(3) group pending legs and match vehicles
        run_matching(t);

        // (4) sequential policy decisions for available vehicles
        if (policy_net_ != nullptr && step_index_ >= cfg_.warmup_steps)
            res.decisions = run_policy(t, dispatches, res.transitions);

        // (5) move vehicles, board/drop/hop at waypoints
        for (auto& v : fleet_) advance_vehicle(v, t, demand_row, supply, facts[v.id]);

        // (6) expire hop-waiting passengers past the deadline
        for (auto& p : passengers_) {
            if (p.state != PaxState::hop_waiting) continue;
            if (t_end - p.hop_wait_since > cfg_.hop_wait_deadline_min + 1e-9) {
                p.state = PaxState::rejected;
                ++acc_.rejected;
                log_.add(t, "reject", {{"request", p.id}, {"reason", "hop_timeout"}});
            }
        }

        // (7) rewards, metrics, invariants
        res.events.predicted_demand = std::move(demand_row);
        res.events.available_supply = std::move(supply);
        res.events.dispatches = std::move(dispatches);
        res.events.prev_occupied = std::move(prev_occupied);
        res.events.cur_occupied = occupied_flags();
        for (auto& p : passengers_) {
            if (p.state == PaxState::assigned || p.state == PaxState::riding) {
                p.remaining_estimate = estimate_remaining(p);
                const double delta = extra_travel_delta(t_end - p.request_time,
                                                        p.remaining_estimate, p.direct_minutes);
                res.events.extra_travel_deltas.push_back(delta);
                facts[p.vehicle].sum_delta += delta;
            }
            if (p.state == PaxState::assigned || p.state == PaxState::riding ||
                p.state == PaxState::hop_waiting)
                res.events.active_passenger_hops.push_back(p.hops());
        }
        for (const auto& v : fleet_) {
            int max_h = 0;
            for (const auto& ids : {v.onboard, v.assigned})
                for (int req : ids) max_h = std::max(max_h, passengers_[req].hops());
            facts[v.id].max_hops_assigned = max_h;
            facts[v.id].newly_active_flag =
                std::max(static_cast<int>(res.events.cur_occupied[v.id]) -
                             static_cast<int>(res.events.prev_occupied[v.id]),
                         0);
        }
        res.global = global_reward(res.events, cfg_.weights);
        res.vehicle_rewards.resize(fleet_.size());
        for (const auto& v : fleet_) {
            res.vehicle_rewards[v.id] = vehicle_reward(facts[v.id], cfg_.weights).reward;
            if (pending_decisions_[v.id].active)
                pending_decisions_[v.id].reward_accum += res.vehicle_rewards[v.id];
        }

        StepMetrics m;
        m.step = step_index_;
        m.t = t;
        m.admitted = admitted_now;
        m.global = res.global;
        m.dispatches = static_cast<int>(res.events.dispatches.size());
        finalize_step_metrics(m);
        metrics_.push_back(m);

        acc_.steps += 1;
        acc_.reward_trace.push_back(res.global.reward);
        acc_.serving_vehicle_steps += m.serving_vehicles;
        acc_.idle_vehicle_minutes += cfg_.dt_minutes * m.idle_vehicles;

        if (cfg_.check_invariants) check_invariants();
        now_ = t_end;
        step_index_ += 1;
        return res;
    }

    void run(int steps) {
        for (int i = 0; i < steps; ++i) step();
    }

    /// Flush open decisions as terminal transitions (episode end).
    std::vector<Transition> finish_episode() {
        std::vector<Transition> out;
        for (auto& pd : pending_decisions_) {
            if (!pd.active) continue;
            Transition tr;
            tr.state = pd.state;
            tr.action = pd.action;
            tr.reward = pd.reward_accum;
            tr.next_state = pd.state;  // unused for terminal targets
            tr.terminal = true;
            out.push_back(std::move(tr));
            pd.active = false;
        }
        return out;
    }

    EnvSnapshot make_env_snapshot() const {
        EnvSnapshot env;
        for (const auto& v : fleet_) {
            VehicleSnapshot s;
            s.id = v.id;
            s.zone = v.zone;
            s.vacant_seats = v.free_seats();
            for (int req : v.onboard) {
                const auto& p = passengers_[req];
                s.passengers.push_back(
                    PassengerSnapshot{p.first_pickup_time, p.plan.final_destination()});
            }
            env.vehicles.push_back(std::move(s));
        }
        env.availability = forecast_availability(fleet_, grid_, cfg_.horizon_steps, cfg_.dt_minutes);
        env.demand = forecast_;
        return env;
    }

private:
    struct PendingDecision {
        bool active = false;
        std::vector<float> state;
        int action = 0;
        double reward_accum = 0.0;
    };

    static std::int64_t llround_minute(double t) { return static_cast<std::int64_t>(std::llround(t)); }

    std::vector<double> available_supply() const {
        std::vector<double> s(grid_.zone_count(), 0.0);
        for (const auto& v : fleet_)
            if (v.has_vacant_seat()) s[v.zone] += 1.0;
        return s;
    }

    std::vector<std::uint8_t> occupied_flags() const {
        std::vector<std::uint8_t> f(fleet_.size(), 0);
        for (const auto& v : fleet_) f[v.id] = v.occupied_flag ? 1 : 0;
        return f;
    }

    void admit(const TripRecord& r, double t) {
        PassengerRecord p;
        p.id = static_cast<int>(passengers_.size());
        p.origin = r.origin;
        p.destination = r.destination;
        p.request_time = static_cast<double>(r.request_time);
        ++acc_.admitted;
        log_.add(t, "request",
                 {{"request", p.id}, {"origin", r.origin}, {"dest", r.destination},
                  {"req_t", p.request_time}});
        if (r.origin == r.destination) {
            // degenerate trip: zero-leg plan, complete on admission
            p.state = PaxState::completed;
            p.first_pickup_time = p.request_time;
            ++acc_.completed;
            acc_.hop_histogram[0] += 1;
            log_.add(t, "dropoff", {{"request", p.id}, {"vehicle", -1}, {"zone", r.origin}});
            passengers_.push_back(std::move(p));
            return;
        }
        p.plan = cfg_.mode == Mode::mhrs
                     ? plan_with_coflow(r.origin, r.destination)
                     : plan_trip(r.origin, r.destination, grid_, PlanMode::direct_only,
                                 cfg_.hop_detour_factor);
        p.direct_minutes = eta_minutes(eta_, grid_, r.origin, r.destination, r.request_time);
        p.remaining_estimate = plan_eta(p.plan);
        nlohmann::json legs = nlohmann::json::array();
        for (const auto& leg : p.plan.legs)
            legs.push_back({leg.from, leg.to, std::string(to_string(leg.kind))});
        log_.add(t, "plan", {{"request", p.id}, {"legs", legs}});
        passengers_.push_back(std::move(p));
    }

    /// Hops exist to pool: a hop zone qualifies only when a rider with the
    /// same destination is already committed to a vehicle (assigned or
    /// riding) and flows through it, i.e. the zone sits on a zero-detour path
    /// of one of that rider's remaining legs. Pending riders do not count;
    /// they may never be served.
    bool hop_has_coflow(int hop, int destination) const {
        for (const auto& p : passengers_) {
            if (p.destination != destination) continue;
            if (p.state != PaxState::assigned && p.state != PaxState::riding) continue;
            for (int i = p.plan.cursor; i < static_cast<int>(p.plan.legs.size()); ++i) {
                const TripLeg& leg = p.plan.legs[i];
                if (zone_distance_cells(grid_, leg.from, hop) +
                        zone_distance_cells(grid_, hop, leg.to) ==
                    zone_distance_cells(grid_, leg.from, leg.to))
                    return true;
            }
        }
        return false;
    }

    TripPlan plan_with_coflow(int origin, int destination) const {
        if (cfg_.hop_min_idle_vehicles > 0) {
            int idle = 0;
            for (const auto& v : fleet_)
                if (v.idle()) ++idle;
            if (idle < cfg_.hop_min_idle_vehicles)
                return plan_trip(origin, destination, grid_, PlanMode::direct_only,
                                 cfg_.hop_detour_factor);
        }
        const double direct = zone_distance_m(grid_, origin, destination);
        const double bound = (1.0 + cfg_.hop_detour_factor) * direct;
        int best_hop = -1;
        double best_total = 0.0;
        for (int h : grid_.hop_zones) {
            if (h == origin || h == destination) continue;
            const double total =
                zone_distance_m(grid_, origin, h) + zone_distance_m(grid_, h, destination);
            if (total > bound) continue;
            if (!hop_has_coflow(h, destination)) continue;
            if (best_hop < 0 || total < best_total) {
                best_hop = h;
                best_total = total;
            }
        }
        if (best_hop < 0)
            return plan_trip(origin, destination, grid_, PlanMode::direct_only,
                             cfg_.hop_detour_factor);
        TripPlan plan;
        plan.legs.push_back(TripLeg{origin, best_hop, LegKind::to_hop});
        plan.legs.push_back(TripLeg{best_hop, destination, LegKind::from_hop});
        return plan;
    }

    double plan_eta(const TripPlan& plan) const {
        double total = 0.0;
        for (int i = plan.cursor; i < static_cast<int>(plan.legs.size()); ++i)
            total += eta_minutes(eta_, grid_, plan.legs[i].from, plan.legs[i].to,
                                 llround_minute(now_));
        return total;
    }

    void run_matching(double t) {
        std::vector<MatchUnit> units;
        for (const auto& p : passengers_) {
            if (p.plan.complete()) continue;
            if (p.state == PaxState::pending)
                units.push_back(MatchUnit{p.id, p.plan.current_leg(), false});
            else if (p.state == PaxState::hop_waiting)
                units.push_back(MatchUnit{p.id, p.plan.current_leg(), true});
        }
        if (units.empty()) return;
        for (const auto& group : group_requests(std::move(units))) {
            const auto result = match_vehicle(group, fleet_, eta_, grid_, t,
                                              cfg_.rejection_radius_cells, cfg_.dt_minutes);
            if (!result.has_value()) {
                // fresh requests are rejected outright; hop-waiting passengers
                // keep waiting until the deadline
                if (!group.hop_waiting) {
                    for (const auto& m : group.members) {
                        auto& p = passengers_[m.request_id];
                        p.state = PaxState::rejected;
                        ++acc_.rejected;
                        log_.add(t, "reject", {{"request", p.id}, {"reason", "no_vehicle"}});
                    }
                }
                continue;
            }
            nlohmann::json ids = nlohmann::json::array();
            for (int req : result->assigned_requests) {
                auto& p = passengers_[req];
                p.state = PaxState::assigned;
                p.vehicle = result->vehicle_id;
                ids.push_back(req);
            }
            log_.add(t, "assign",
                     {{"vehicle", result->vehicle_id}, {"requests", ids},
                      {"leg", std::string(to_string(group.members.front().leg.kind))},
                      {"pickup", group.pickup_zone}});
        }
    }

    int run_policy(double t, std::vector<DispatchRecord>& dispatches,
                   std::vector<Transition>& transitions) {
        int decisions = 0;
        for (auto& v : fleet_) {
            if (!v.has_vacant_seat()) continue;  // full vehicles are never queried
            const EnvSnapshot env = make_env_snapshot();
            const auto features = encode_state(env, v.id, grid_, encoder_);
            const auto q = policy_net_->forward(features);
            const auto mask = valid_actions(grid_, v.zone);
            const int action = select_action(q, mask, epsilon_, policy_rng_);
            ++decisions;

            if (collect_transitions_) {
                auto& pd = pending_decisions_[v.id];
                if (pd.active) {
                    Transition tr;
                    tr.state = pd.state;
                    tr.action = pd.action;
                    tr.reward = pd.reward_accum;
                    tr.next_state.assign(features.begin(), features.end());
                    tr.terminal = false;
                    transitions.push_back(std::move(tr));
                }
                pd.active = true;
                pd.state.assign(features.begin(), features.end());
                pd.action = action;
                pd.reward_accum = 0.0;
            }

            if (action == kStayAction) continue;
            const auto [dr, dc] = action_offset(action);
            const int target = grid_.id(grid_.row_of(v.zone) + dr, grid_.col_of(v.zone) + dc);
            v.clear_reposition();
            v.route.push_back(Waypoint{target, StopPurpose::reposition, {}});
            const double eta = eta_minutes(eta_, grid_, v.zone, target, llround_minute(t));
            dispatches.push_back(DispatchRecord{v.id, target, eta});
            log_.add(t, "dispatch",
                     {{"vehicle", v.id}, {"from", v.zone}, {"target", target}, {"eta", eta}});
        }
        return decisions;
    }

    void advance_vehicle(VehicleState& v, double t, const std::vector<double>& demand_row,
                         const std::vector<double>& supply, VehicleStepFacts& facts) {
        process_arrivals(v, t, demand_row, supply, facts);
        if (v.route.empty()) return;
        const auto& target = v.route.front();
        if (target.purpose == StopPurpose::pickup && !v.onboard.empty())
            facts.detour_minutes += cfg_.dt_minutes;
        else if (target.purpose == StopPurpose::hop_drop)
            facts.detour_minutes += cfg_.dt_minutes;
        const int from = v.zone;
        const int to = step_toward(grid_, from, target.zone);
        if (to == from) return;
        const int onboard = static_cast<int>(v.onboard.size());
        if (onboard > 0) {
            const double cell = grid_.cell_edge_m;
            v.occupied_distance_m += cell;
            v.loaded_passenger_distance_m += cell * onboard;
            for (int req : v.onboard) {
                auto& p = passengers_[req];
                // savings accrue only on net-new progress toward the rider's
                // leg target, so a leg's savings never exceed its distance
                const int t_zone = p.plan.current_leg().to;
                const int rem = zone_distance_cells(grid_, to, t_zone);
                if (rem < p.best_remaining_cells) {
                    p.best_remaining_cells = rem;
                    if (onboard >= 2) {
                        const double saving = cell * (1.0 - 1.0 / onboard);
                        p.shared_savings_m += saving;
                        p.per_vehicle_savings_m[v.id] += saving;
                    }
                }
            }
        }
        v.zone = to;
        log_.add(t, "move", {{"vehicle", v.id}, {"from", from}, {"zone", to}, {"onboard", onboard}});
        process_arrivals(v, t, demand_row, supply, facts);
    }

    void process_arrivals(VehicleState& v, double t, const std::vector<double>& demand_row,
                          const std::vector<double>& supply, VehicleStepFacts& facts) {
        while (!v.route.empty() && v.route.front().zone == v.zone) {
            const Waypoint wp = v.route.front();
            v.route.pop_front();
            switch (wp.purpose) {
                case StopPurpose::pickup:
                    for (int req : wp.requests) board(v, req, t, demand_row, supply, facts);
                    break;
                case StopPurpose::drop:
                    for (int req : wp.requests) drop_final(v, req, t);
                    break;
                case StopPurpose::hop_drop:
                    for (int req : wp.requests) drop_at_hop(v, req, t);
                    break;
                case StopPurpose::reposition:
                    break;
            }
        }
    }

    void board(VehicleState& v, int req, double t, const std::vector<double>& demand_row,
               const std::vector<double>& supply, VehicleStepFacts& facts) {
        auto& p = passengers_[req];
        if (p.state != PaxState::assigned || p.vehicle != v.id) return;
        auto it = std::find(v.assigned.begin(), v.assigned.end(), req);
        if (it == v.assigned.end()) return;
        v.assigned.erase(it);
        v.onboard.push_back(req);
        p.plan = update_plan_progress(p.plan, PlanEvent::picked_up);
        p.state = PaxState::riding;
        p.best_remaining_cells = zone_distance_cells(grid_, v.zone, p.plan.current_leg().to);
        const bool first = p.first_pickup_time < 0.0;
        if (first) p.first_pickup_time = t;
        if (p.hop_wait_since >= 0.0) {
            p.hop_wait_total += t - p.hop_wait_since;
            p.hop_wait_since = -1.0;
        }
        if (demand_row[v.zone] > supply[v.zone]) facts.boardings_credited += 1;
        if (!v.occupied_flag) v.occupied_flag = true;
        log_.add(t, "pickup",
                 {{"vehicle", v.id}, {"request", req}, {"zone", v.zone}, {"first", first}});
    }

    void credit_leg(VehicleState& v, PassengerRecord& p) {
        const TripLeg& leg = p.plan.current_leg();
        const double d = zone_distance_m(grid_, leg.from, leg.to);
        p.direct_leg_distance_m += d;
        p.per_vehicle_direct_m[v.id] += d;
    }

    void drop_final(VehicleState& v, int req, double t) {
        auto& p = passengers_[req];
        auto it = std::find(v.onboard.begin(), v.onboard.end(), req);
        if (it == v.onboard.end()) return;
        credit_leg(v, p);
        v.onboard.erase(it);
        p.plan = update_plan_progress(p.plan, PlanEvent::dropped_final);
        p.state = PaxState::completed;
        p.vehicle = -1;
        p.remaining_estimate = 0.0;
        p.apportioned_distance_m = p.direct_leg_distance_m - p.shared_savings_m;
        ++acc_.completed;
        acc_.wait_minutes_total += (p.first_pickup_time - p.request_time) + p.hop_wait_total;
        acc_.hop_histogram[p.hops()] += 1;
        acc_.direct_leg_m_completed += p.direct_leg_distance_m;
        acc_.apportioned_m_completed += p.apportioned_distance_m;
        if (p.shared_savings_m > 0.0) acc_.any_shared_leg = true;
        if (v.onboard.empty()) v.occupied_flag = false;
        log_.add(t, "dropoff", {{"vehicle", v.id}, {"request", req}, {"zone", v.zone}});
    }

    void drop_at_hop(VehicleState& v, int req, double t) {
        auto& p = passengers_[req];
        auto it = std::find(v.onboard.begin(), v.onboard.end(), req);
        if (it == v.onboard.end()) return;
        credit_leg(v, p);
        v.onboard.erase(it);
        p.plan = update_plan_progress(p.plan, PlanEvent::dropped_at_hop);
        if (p.hops() > cfg_.max_hops)
            throw simulation_halt(dump_state("hop cap exceeded for request " +
                                             std::to_string(req)));
        p.state = PaxState::hop_waiting;
        p.vehicle = -1;
        p.hop_wait_since = t;
        if (v.onboard.empty()) v.occupied_flag = false;
        log_.add(t, "hop_drop", {{"vehicle", v.id}, {"request", req}, {"zone", v.zone}});
    }

    /// Minutes until this passenger reaches their final destination, given
    /// the serving vehicle's current route; future legs use the ETA model.
    double estimate_remaining(const PassengerRecord& p) const {
        if (p.state == PaxState::pending || p.state == PaxState::hop_waiting) return plan_eta(p.plan);
        const VehicleState& v = fleet_[p.vehicle];
        double minutes = 0.0;
        int pos = v.zone;
        bool found = false;
        for (const auto& wp : v.route) {
            minutes += zone_distance_cells(grid_, pos, wp.zone) * cfg_.dt_minutes;
            pos = wp.zone;
            if ((wp.purpose == StopPurpose::drop || wp.purpose == StopPurpose::hop_drop) &&
                std::find(wp.requests.begin(), wp.requests.end(), p.id) != wp.requests.end()) {
                found = true;
                break;
            }
        }
        if (!found) throw simulation_halt(dump_state("passenger " + std::to_string(p.id) +
                                                     " missing from vehicle route"));
        double future = 0.0;
        for (int i = p.plan.cursor + 1; i < static_cast<int>(p.plan.legs.size()); ++i)
            future += eta_minutes(eta_, grid_, p.plan.legs[i].from, p.plan.legs[i].to,
                                  llround_minute(now_));
        return minutes + future;
    }

    void finalize_step_metrics(StepMetrics& m) {
        for (const auto& p : passengers_) {
            switch (p.state) {
                case PaxState::pending: ++m.pending; break;
                case PaxState::assigned: ++m.assigned; break;
                case PaxState::riding: ++m.riding; break;
                case PaxState::hop_waiting: ++m.hop_waiting; break;
                case PaxState::completed: break;
                case PaxState::rejected: break;
            }
        }
        m.completed_total = static_cast<int>(acc_.completed);
        m.rejected_total = static_cast<int>(acc_.rejected);
        if (!metrics_.empty()) {
            m.rejected = m.rejected_total - metrics_.back().rejected_total;
            m.completed = m.completed_total - metrics_.back().completed_total;
        } else {
            m.rejected = m.rejected_total;
            m.completed = m.completed_total;
        }
        for (const auto& v : fleet_) {
            if (v.active_passengers() > 0)
                ++m.serving_vehicles;
            else
                ++m.idle_vehicles;
        }
    }

    void check_invariants() const {
        long pending = 0, assigned = 0, riding = 0, waiting = 0, completed = 0, rejected = 0;
        for (const auto& p : passengers_) {
            switch (p.state) {
                case PaxState::pending: ++pending; break;
                case PaxState::assigned: ++assigned; break;
                case PaxState::riding: ++riding; break;
                case PaxState::hop_waiting: ++waiting; break;
                case PaxState::completed: ++completed; break;
                case PaxState::rejected: ++rejected; break;
            }
        }
        if (pending + assigned + riding + waiting + completed + rejected != acc_.admitted)
            throw simulation_halt(dump_state("request conservation violated"));
        std::vector<int> seen(passengers_.size(), 0);
        for (const auto& v : fleet_) {
            if (static_cast<int>(v.onboard.size()) > v.capacity)
                throw simulation_halt(dump_state("capacity exceeded on vehicle " +
                                                 std::to_string(v.id)));
            if (v.active_passengers() > v.capacity)
                throw simulation_halt(dump_state("overcommitted vehicle " + std::to_string(v.id)));
            for (int req : v.onboard)
                if (++seen[req] > 1)
                    throw simulation_halt(dump_state("passenger on two vehicles: " +
                                                     std::to_string(req)));
        }
    }

    std::string dump_state(const std::string& why) const {
        std::ostringstream os;
        os << "simulation halt at step " << step_index_ << " (t=" << now_ << "): " << why
           << "; admitted=" << acc_.admitted << " completed=" << acc_.completed
           << " rejected=" << acc_.rejected;
        return os.str();
    }

    SimConfig cfg_;
    GridMap grid_;
    std::vector<TripRecord> workload_;
    EtaModel eta_;
    DemandPredictor demand_;
    DemandForecast forecast_;
    std::vector<VehicleState> fleet_;
    std::vector<PassengerRecord> passengers_;
    std::size_t next_request_ = 0;
    double now_ = 0.0;
    int step_index_ = 0;
    EventLog log_;
    std::vector<StepMetrics> metrics_;
    RunAccumulators acc_;

    const DenseNet* policy_net_ = nullptr;
    double epsilon_ = 0.0;
    bool collect_transitions_ = false;
    EncoderConfig encoder_;
    Rng policy_rng_;
    std::vector<PendingDecision> pending_decisions_;
};

}  // namespace mhrs
