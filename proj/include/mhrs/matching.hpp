#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <tuple>
#include <vector>

#include "mhrs/demand.hpp"
#include "mhrs/errors.hpp"
#include "mhrs/fleet.hpp"
#include "mhrs/grid.hpp"

namespace mhrs {

enum class LegKind { direct, to_hop, from_hop };

inline const char* to_string(LegKind k) {
    switch (k) {
        case LegKind::direct: return "direct";
        case LegKind::to_hop: return "to_hop";
        case LegKind::from_hop: return "from_hop";
    }
    return "?";
}

struct TripLeg {
    int from = 0;
    int to = 0;
    LegKind kind = LegKind::direct;
};

enum class PlanEvent { picked_up, dropped_at_hop, dropped_final };

/// A passenger itinerary: zero legs (degenerate), one direct leg, or a
/// to-hop leg followed by a from-hop leg through a designated hop zone.
struct TripPlan {
    std::vector<TripLeg> legs;
    int cursor = 0;        // index of the current leg
    bool on_leg = false;   // picked up for the current leg
    int hops_done = 0;

    bool complete() const { return cursor >= static_cast<int>(legs.size()); }
    const TripLeg& current_leg() const { return legs[cursor]; }
    int final_destination() const { return legs.empty() ? -1 : legs.back().to; }
};

enum class PlanMode { multi_hop, direct_only };

/// Build the itinerary for one request. In multi-hop mode the hop zone
/// minimizing d(o,h)+d(h,d) is used when it stays within the detour bound
/// (1+gamma) x direct and differs from both endpoints; ties break to the
/// lowest zone id. At most one hop is planned.
inline TripPlan plan_trip(int origin, int destination, const GridMap& grid, PlanMode mode,
                          double detour_factor = 0.2) {
    check_zone(grid, origin, "plan_trip");
    check_zone(grid, destination, "plan_trip");
    TripPlan plan;
    if (origin == destination) return plan;  // zero-leg plan
    if (mode == PlanMode::multi_hop && !grid.hop_zones.empty()) {
        const double direct = zone_distance_m(grid, origin, destination);
        const double bound = (1.0 + detour_factor) * direct;
        int best_hop = -1;
        double best_total = 0.0;
        for (int h : grid.hop_zones) {
            if (h == origin || h == destination) continue;
            const double total = zone_distance_m(grid, origin, h) + zone_distance_m(grid, h, destination);
            if (total > bound) continue;
            if (best_hop < 0 || total < best_total) {
                best_hop = h;
                best_total = total;
            }
        }
        if (best_hop >= 0) {
            plan.legs.push_back(TripLeg{origin, best_hop, LegKind::to_hop});
            plan.legs.push_back(TripLeg{best_hop, destination, LegKind::from_hop});
            return plan;
        }
    }
    plan.legs.push_back(TripLeg{origin, destination, LegKind::direct});
    return plan;
}

/// Advance the leg cursor on a pickup/drop event. Illegal orderings throw.
inline TripPlan update_plan_progress(TripPlan plan, PlanEvent event) {
    if (plan.complete()) throw contract_violation("update_plan_progress: plan already complete");
    const TripLeg& leg = plan.current_leg();
    switch (event) {
        case PlanEvent::picked_up:
            if (plan.on_leg) throw contract_violation("update_plan_progress: already picked up");
            plan.on_leg = true;
            return plan;
        case PlanEvent::dropped_at_hop:
            if (!plan.on_leg) throw contract_violation("update_plan_progress: drop before pickup");
            if (leg.kind != LegKind::to_hop)
                throw contract_violation("update_plan_progress: hop drop on a non-hop leg");
            plan.on_leg = false;
            plan.cursor += 1;
            plan.hops_done += 1;
            return plan;
        case PlanEvent::dropped_final:
            if (!plan.on_leg) throw contract_violation("update_plan_progress: drop before pickup");
            if (leg.kind == LegKind::to_hop)
                throw contract_violation("update_plan_progress: final drop on a to-hop leg");
            plan.on_leg = false;
            plan.cursor += 1;
            if (!plan.complete())
                throw contract_violation("update_plan_progress: final drop with legs remaining");
            return plan;
    }
    throw contract_violation("update_plan_progress: unknown event");
}

/// Grouping key: hop legs pool by hop zone, direct legs by (origin, dest).
struct GroupKey {
    int kind = 0;  // 0 direct, 1 to-hop, 2 from-hop
    int a = 0;     // direct: origin; to-hop: hop; from-hop: hop
    int b = 0;     // direct: dest;   to-hop: unused; from-hop: dest

    auto tie() const { return std::tie(kind, a, b); }
    bool operator<(const GroupKey& o) const { return tie() < o.tie(); }
    bool operator==(const GroupKey& o) const { return tie() == o.tie(); }
};

inline GroupKey leg_group_key(const TripLeg& leg) {
    switch (leg.kind) {
        case LegKind::direct: return GroupKey{0, leg.from, leg.to};
        case LegKind::to_hop: return GroupKey{1, leg.to, 0};
        case LegKind::from_hop: return GroupKey{2, leg.from, leg.to};
    }
    return GroupKey{};
}

struct MatchUnit {
    int request_id = 0;
    TripLeg leg;               // the leg awaiting a vehicle
    bool hop_waiting = false;  // waiting at a hop zone (not a fresh request)
};

struct Group {
    GroupKey key;
    std::vector<MatchUnit> members;  // ordered by request id
    int pickup_zone = 0;             // first member's leg origin
    bool hop_waiting = false;
};

/// Partition pending legs into groups, deterministically ordered by key and
/// member id.
inline std::vector<Group> group_requests(std::vector<MatchUnit> units) {
    std::sort(units.begin(), units.end(),
              [](const MatchUnit& x, const MatchUnit& y) { return x.request_id < y.request_id; });
    std::map<GroupKey, Group> by_key;
    for (const auto& u : units) {
        const GroupKey key = leg_group_key(u.leg);
        auto [it, fresh] = by_key.try_emplace(key);
        if (fresh) {
            it->second.key = key;
            it->second.pickup_zone = u.leg.from;
            it->second.hop_waiting = u.hop_waiting;
        }
        it->second.members.push_back(u);
    }
    std::vector<Group> out;
    out.reserve(by_key.size());
    for (auto& [key, g] : by_key) out.push_back(std::move(g));
    return out;
}

struct Assignment {
    int vehicle_id = -1;
    std::vector<int> assigned_requests;          // group members taken, in order
    std::vector<double> estimated_pickup_minutes;  // aligned with assigned_requests
};

namespace detail {

/// Added route distance (in cells) from visiting `zone` between position
/// `index-1` and `index` of the route (index == route.size() appends).
inline int insertion_cost(const VehicleState& v, const GridMap& grid, int zone,
                          std::size_t index) {
    const int before = index == 0 ? v.zone : v.route[index - 1].zone;
    if (index == v.route.size()) return zone_distance_cells(grid, before, zone);
    const int after = v.route[index].zone;
    return zone_distance_cells(grid, before, zone) + zone_distance_cells(grid, zone, after) -
           zone_distance_cells(grid, before, after);
}

/// Best position for a new stop in [min_index, route.size()]; ties take the
/// earliest slot.
inline std::size_t best_insertion(const VehicleState& v, const GridMap& grid, int zone,
                                  std::size_t min_index) {
    std::size_t best = min_index;
    int best_cost = insertion_cost(v, grid, zone, min_index);
    for (std::size_t i = min_index + 1; i <= v.route.size(); ++i) {
        const int cost = insertion_cost(v, grid, zone, i);
        if (cost < best_cost) {
            best_cost = cost;
            best = i;
        }
    }
    return best;
}

}  // namespace detail

/// Cheapest-insertion routing: the member's pickup and drop are inserted at
/// the positions adding the least distance, with the drop after the pickup.
/// Stops sharing (zone, purpose) merge when the ordering allows it.
inline void insert_member_stops(VehicleState& v, const GridMap& grid, int request,
                                const TripLeg& leg) {
    v.clear_reposition();
    const StopPurpose drop_purpose =
        leg.kind == LegKind::to_hop ? StopPurpose::hop_drop : StopPurpose::drop;

    std::size_t pickup_index = v.route.size();
    bool merged_pickup = false;
    for (std::size_t i = 0; i < v.route.size(); ++i)
        if (v.route[i].purpose == StopPurpose::pickup && v.route[i].zone == leg.from) {
            v.route[i].requests.push_back(request);
            std::sort(v.route[i].requests.begin(), v.route[i].requests.end());
            pickup_index = i;
            merged_pickup = true;
            break;
        }
    if (!merged_pickup) {
        pickup_index = detail::best_insertion(v, grid, leg.from, 0);
        v.route.insert(v.route.begin() + pickup_index,
                       Waypoint{leg.from, StopPurpose::pickup, {request}});
    }

    for (std::size_t i = pickup_index + 1; i < v.route.size(); ++i)
        if (v.route[i].purpose == drop_purpose && v.route[i].zone == leg.to) {
            v.route[i].requests.push_back(request);
            std::sort(v.route[i].requests.begin(), v.route[i].requests.end());
            return;
        }
    const std::size_t drop_index = detail::best_insertion(v, grid, leg.to, pickup_index + 1);
    v.route.insert(v.route.begin() + drop_index, Waypoint{leg.to, drop_purpose, {request}});
}

/// Route cells a member's stops would add to the vehicle's current plan.
inline int added_route_cells(const VehicleState& v, const GridMap& grid, const TripLeg& leg) {
    auto chain_cells = [&](const VehicleState& s) {
        int cells = 0;
        int pos = s.zone;
        for (const auto& wp : s.route) {
            cells += zone_distance_cells(grid, pos, wp.zone);
            pos = wp.zone;
        }
        return cells;
    };
    VehicleState scratch = v;
    insert_member_stops(scratch, grid, -1, leg);
    return chain_cells(scratch) - chain_cells(v);
}

/// Pick the vehicle serving a group: vacant seats, within the rejection
/// radius of the group's pickup zone, minimum ETA (ties to the lowest id).
/// Members are assigned in order while seats remain, their stops inserted
/// into the vehicle's route at cheapest cost. Returns nullopt when no
/// candidate is in range.
///
/// Hop-waiting groups ride free capacity: their candidates are vehicles that
/// pass the hop zone toward the destination at zero added route distance, or
/// idle vehicles. A transfer leg never diverts a committed vehicle.
inline std::optional<Assignment> match_vehicle(const Group& group,
                                               std::vector<VehicleState>& fleet,
                                               const EtaModel& eta, const GridMap& grid,
                                               double now_min, int radius_cells,
                                               double step_minutes) {
    if (group.members.empty()) throw contract_violation("match_vehicle: empty group");

    VehicleState* best = nullptr;
    double best_eta = 0.0;
    for (auto& v : fleet) {
        if (!v.has_vacant_seat()) continue;
        if (zone_distance_cells(grid, v.zone, group.pickup_zone) > radius_cells) continue;
        if (group.hop_waiting && !v.idle() &&
            added_route_cells(v, grid, group.members.front().leg) > 0)
            continue;
        const double e = eta_minutes(eta, grid, v.zone, group.pickup_zone,
                                     static_cast<std::int64_t>(now_min));
        if (best == nullptr || e < best_eta || (e == best_eta && v.id < best->id)) {
            best = &v;
            best_eta = e;
        }
    }
    if (best == nullptr) return std::nullopt;

    Assignment a;
    a.vehicle_id = best->id;
    for (const auto& m : group.members) {
        if (!best->has_vacant_seat()) break;  // overflow members stay pending
        best->assigned.push_back(m.request_id);
        a.assigned_requests.push_back(m.request_id);
        insert_member_stops(*best, grid, m.request_id, m.leg);
    }
    if (a.assigned_requests.empty()) return std::nullopt;

    // estimated pickup time per assigned member, from the rebuilt route
    const auto arrivals = route_arrival_minutes(grid, *best, step_minutes);
    for (int req : a.assigned_requests) {
        double at = 0.0;
        for (std::size_t i = 0; i < best->route.size(); ++i) {
            const auto& wp = best->route[i];
            if (wp.purpose == StopPurpose::pickup &&
                std::find(wp.requests.begin(), wp.requests.end(), req) != wp.requests.end()) {
                at = now_min + arrivals[i];
                break;
            }
        }
        a.estimated_pickup_minutes.push_back(at);
    }
    return a;
}

}  // namespace mhrs
