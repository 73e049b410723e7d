#pragma once

#include <algorithm>
#include <cstdint>
#include <set>
#include <vector>

#include "mhrs/errors.hpp"

namespace mhrs {

struct RewardWeights {
    double beta1 = 5.0;   // supply-demand gap / service credit
    double beta2 = 1.0;   // dispatch or detour time
    double beta3 = 3.5;   // extra travel time
    double beta4 = 0.05;  // newly occupied vehicles
    double beta5 = 2.0;   // hops
};

/// Sum of positive parts of (predicted demand - available supply) per zone.
inline double supply_demand_gap(const std::vector<double>& demand,
                                const std::vector<double>& supply) {
    if (demand.size() != supply.size())
        throw contract_violation("supply_demand_gap: length mismatch");
    double gap = 0.0;
    for (std::size_t i = 0; i < demand.size(); ++i) gap += std::max(demand[i] - supply[i], 0.0);
    return gap;
}

struct DispatchRecord {
    int vehicle = 0;
    int target_zone = 0;
    double eta_minutes = 0.0;
};

/// Total repositioning time of the step's dispatch decisions. Each vehicle
/// may hold at most one target.
inline double dispatch_time_total(const std::vector<DispatchRecord>& dispatches) {
    std::set<int> seen;
    double total = 0.0;
    for (const auto& d : dispatches) {
        if (!seen.insert(d.vehicle).second)
            throw contract_violation("dispatch_time_total: vehicle with two targets");
        total += d.eta_minutes;
    }
    return total;
}

/// delta = t' + t(a) - t(m), floored at zero for reporting.
inline double extra_travel_delta(double elapsed_since_request, double remaining_estimate,
                                 double direct_baseline) {
    return std::max(0.0, elapsed_since_request + remaining_estimate - direct_baseline);
}

struct HopsTotals {
    std::vector<int> per_passenger;
    int total = 0;
};

inline HopsTotals hops_total(const std::vector<int>& passenger_hops) {
    HopsTotals h;
    h.per_passenger = passenger_hops;
    for (int v : passenger_hops) h.total += v;
    return h;
}

/// Count of vehicles switching empty -> occupied this step.
inline int newly_active(const std::vector<std::uint8_t>& prev_flags,
                        const std::vector<std::uint8_t>& cur_flags) {
    if (prev_flags.size() != cur_flags.size())
        throw contract_violation("newly_active: flag vectors misaligned");
    int n = 0;
    for (std::size_t i = 0; i < cur_flags.size(); ++i)
        n += std::max(static_cast<int>(cur_flags[i]) - static_cast<int>(prev_flags[i]), 0);
    return n;
}

/// Per-vehicle per-step reward inputs.
struct VehicleStepFacts {
    int boardings_credited = 0;    // b: new customers served into under-supplied zones
    double detour_minutes = 0.0;   // c: hop travel / detours to extra pickups
    double sum_delta = 0.0;        // sum of extra travel time over this vehicle's riders
    int newly_active_flag = 0;     // max(e_t - e_{t-1}, 0)
    int max_hops_assigned = 0;     // max H over the vehicle's assigned riders
};

struct VehicleRewardResult {
    double reward = 0.0;
    VehicleStepFacts facts;
};

inline VehicleRewardResult vehicle_reward(const VehicleStepFacts& f, const RewardWeights& w) {
    VehicleRewardResult r;
    r.facts = f;
    r.reward = w.beta1 * f.boardings_credited - w.beta2 * f.detour_minutes -
               w.beta3 * f.sum_delta - w.beta4 * std::max(f.newly_active_flag, 0) -
               w.beta5 * f.max_hops_assigned;
    return r;
}

/// Raw inputs of one step's global reward; the engine fills this and the
/// metrics CSV carries the resulting breakdown.
struct StepEvents {
    std::vector<double> predicted_demand;   // per zone
    std::vector<double> available_supply;   // per zone
    std::vector<DispatchRecord> dispatches;
    std::vector<double> extra_travel_deltas;  // per rider on a vehicle
    std::vector<std::uint8_t> prev_occupied;  // per vehicle
    std::vector<std::uint8_t> cur_occupied;
    std::vector<int> active_passenger_hops;   // H per active passenger
};

struct GlobalRewardBreakdown {
    double gap = 0.0;
    double dispatch_minutes = 0.0;
    double delta_minutes = 0.0;
    int newly_active_count = 0;
    int hops = 0;
    double reward = 0.0;
};

inline GlobalRewardBreakdown global_reward(const StepEvents& ev, const RewardWeights& w) {
    GlobalRewardBreakdown b;
    b.gap = supply_demand_gap(ev.predicted_demand, ev.available_supply);
    b.dispatch_minutes = dispatch_time_total(ev.dispatches);
    for (double d : ev.extra_travel_deltas) b.delta_minutes += d;
    b.newly_active_count = newly_active(ev.prev_occupied, ev.cur_occupied);
    b.hops = hops_total(ev.active_passenger_hops).total;
    b.reward = -(w.beta1 * b.gap + w.beta2 * b.dispatch_minutes + w.beta3 * b.delta_minutes +
                 w.beta4 * b.newly_active_count + w.beta5 * b.hops);
    return b;
}

}  // namespace mhrs
