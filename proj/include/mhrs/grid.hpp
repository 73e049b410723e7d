#pragma once

#include <cstdlib>
#include <set>
#include <string>
#include <vector>

#include "mhrs/errors.hpp"

namespace mhrs {

/// Zone lattice with row-major linear ids and a set of designated hop zones.
/// Immutable after construction/selection; safe for concurrent reads.
struct GridMap {
    int rows = 0;
    int cols = 0;
    double cell_edge_m = 0.0;
    std::set<int> hop_zones;

    int zone_count() const { return rows * cols; }
    bool contains(int row, int col) const {
        return row >= 0 && row < rows && col >= 0 && col < cols;
    }
    bool contains(int zone) const { return zone >= 0 && zone < zone_count(); }
    int id(int row, int col) const { return row * cols + col; }
    int row_of(int zone) const { return zone / cols; }
    int col_of(int zone) const { return zone % cols; }
};

struct Route {
    std::vector<int> zones;  // origin first, destination last, 4-adjacent steps
    double total_distance_m = 0.0;
};

inline GridMap build_grid(int rows, int cols, double cell_edge_m) {
    if (rows < 1 || cols < 1) throw invalid_config("build_grid: rows and cols must be >= 1");
    if (cell_edge_m <= 0.0) throw invalid_config("build_grid: cell edge must be positive");
    GridMap g;
    g.rows = rows;
    g.cols = cols;
    g.cell_edge_m = cell_edge_m;
    return g;
}

inline void check_zone(const GridMap& grid, int zone, const char* who) {
    if (!grid.contains(zone)) throw invalid_input(std::string(who) + ": zone out of bounds");
}

/// Manhattan cell distance scaled by the cell edge.
inline double zone_distance_m(const GridMap& grid, int a, int b) {
    check_zone(grid, a, "zone_distance_m");
    check_zone(grid, b, "zone_distance_m");
    const int dr = std::abs(grid.row_of(a) - grid.row_of(b));
    const int dc = std::abs(grid.col_of(a) - grid.col_of(b));
    return (dr + dc) * grid.cell_edge_m;
}

inline int zone_distance_cells(const GridMap& grid, int a, int b) {
    check_zone(grid, a, "zone_distance_cells");
    check_zone(grid, b, "zone_distance_cells");
    return std::abs(grid.row_of(a) - grid.row_of(b)) + std::abs(grid.col_of(a) - grid.col_of(b));
}

/// One lattice step from `from` toward `to`, rows first. Returns `from` when
/// already there. This is the single movement rule shared by routes and the
/// per-step vehicle motion, so replays stay consistent.
inline int step_toward(const GridMap& grid, int from, int to) {
    const int fr = grid.row_of(from), fc = grid.col_of(from);
    const int tr = grid.row_of(to), tc = grid.col_of(to);
    if (fr < tr) return grid.id(fr + 1, fc);
    if (fr > tr) return grid.id(fr - 1, fc);
    if (fc < tc) return grid.id(fr, fc + 1);
    if (fc > tc) return grid.id(fr, fc - 1);
    return from;
}

/// Minimal 4-neighbor path with the deterministic rows-first tie-break.
inline Route shortest_route(const GridMap& grid, int from, int to) {
    check_zone(grid, from, "shortest_route");
    check_zone(grid, to, "shortest_route");
    Route r;
    r.zones.push_back(from);
    int cur = from;
    while (cur != to) {
        cur = step_toward(grid, cur, to);
        r.zones.push_back(cur);
    }
    r.total_distance_m = (static_cast<double>(r.zones.size()) - 1.0) * grid.cell_edge_m;
    return r;
}

/// Hop zones: lattice intersections at the given spacing whose daily request
/// count reaches the threshold. The result is also stored into grid.hop_zones.
inline std::set<int> select_hop_zones(GridMap& grid, const std::vector<double>& daily_requests,
                                      int spacing, double min_requests) {
    if (spacing < 1) throw invalid_config("select_hop_zones: spacing must be >= 1");
    if (static_cast<int>(daily_requests.size()) != grid.zone_count())
        throw invalid_input("select_hop_zones: one count per zone required");
    std::set<int> out;
    for (int z = 0; z < grid.zone_count(); ++z) {
        const int r = grid.row_of(z), c = grid.col_of(z);
        if (r % spacing == 0 && c % spacing == 0 && daily_requests[z] >= min_requests)
            out.insert(z);
    }
    grid.hop_zones = out;
    return out;
}

}  // namespace mhrs
