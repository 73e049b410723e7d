#pragma once

#include <algorithm>
#include <deque>
#include <vector>

#include "mhrs/grid.hpp"

namespace mhrs {

enum class StopPurpose { pickup, drop, hop_drop, reposition };

inline const char* to_string(StopPurpose p) {
    switch (p) {
        case StopPurpose::pickup: return "pickup";
        case StopPurpose::drop: return "drop";
        case StopPurpose::hop_drop: return "hop_drop";
        case StopPurpose::reposition: return "reposition";
    }
    return "?";
}

struct Waypoint {
    int zone = 0;
    StopPurpose purpose = StopPurpose::pickup;
    std::vector<int> requests;  // passengers boarded/dropped at this stop
};

struct VehicleState {
    int id = 0;
    int zone = 0;
    int capacity = 4;  // effective C_v for the active mode
    std::vector<int> onboard;   // request ids riding now
    std::vector<int> assigned;  // request ids accepted, not yet aboard
    std::deque<Waypoint> route;
    bool occupied_flag = false;  // e_{t,n}: 1 while >=1 passenger aboard
    double occupied_distance_m = 0.0;      // driven with >=1 aboard
    double loaded_passenger_distance_m = 0.0;  // sum of onboard-count x cell over moves

    int active_passengers() const {
        return static_cast<int>(onboard.size() + assigned.size());
    }
    int free_seats() const { return capacity - active_passengers(); }
    bool has_vacant_seat() const { return free_seats() > 0; }
    bool idle() const { return active_passengers() == 0; }

    bool repositioning() const {
        return !route.empty() && route.front().purpose == StopPurpose::reposition;
    }

    void clear_reposition() {
        route.erase(std::remove_if(route.begin(), route.end(),
                                   [](const Waypoint& w) {
                                       return w.purpose == StopPurpose::reposition;
                                   }),
                    route.end());
    }
};

/// Minutes until each waypoint is reached, assuming one cell per step of
/// `step_minutes`. Entry i corresponds to route[i].
inline std::vector<double> route_arrival_minutes(const GridMap& grid, const VehicleState& v,
                                                 double step_minutes) {
    std::vector<double> out;
    out.reserve(v.route.size());
    int pos = v.zone;
    double t = 0.0;
    for (const auto& w : v.route) {
        t += zone_distance_cells(grid, pos, w.zone) * step_minutes;
        out.push_back(t);
        pos = w.zone;
    }
    return out;
}

}  // namespace mhrs
