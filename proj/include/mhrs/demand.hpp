#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "mhrs/errors.hpp"
#include "mhrs/grid.hpp"
#include "mhrs/rng.hpp"

namespace mhrs {

constexpr int kMinutesPerDay = 1440;
constexpr int kMinutesPerWeek = 7 * kMinutesPerDay;

struct TripRecord {
    std::int64_t request_time = 0;  // minutes since epoch; minute 0 = Monday 00:00
    int origin = 0;
    int destination = 0;
    bool degenerate = false;  // origin == destination
};

struct IngestResult {
    std::vector<TripRecord> trips;
    std::size_t malformed = 0;
    std::size_t out_of_bounds = 0;  // bbox misses and off-grid zones
};

/// Affine lat/lon -> zone mapping for geo-coded inputs.
struct GeoBBox {
    double min_lat = 0, min_lon = 0, max_lat = 0, max_lon = 0;

    std::optional<int> to_zone(const GridMap& grid, double lat, double lon) const {
        if (lat < min_lat || lat > max_lat || lon < min_lon || lon > max_lon) return std::nullopt;
        int row = static_cast<int>((lat - min_lat) / (max_lat - min_lat) * grid.rows);
        int col = static_cast<int>((lon - min_lon) / (max_lon - min_lon) * grid.cols);
        row = std::min(row, grid.rows - 1);
        col = std::min(col, grid.cols - 1);
        return grid.id(row, col);
    }
};

namespace detail {

inline std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::stringstream ss(line);
    while (std::getline(ss, field, ',')) out.push_back(field);
    return out;
}

inline bool parse_ll(const std::string& s, std::int64_t& v) {
    try {
        std::size_t pos = 0;
        v = std::stoll(s, &pos);
        return pos == s.size();
    } catch (...) {
        return false;
    }
}

inline bool parse_double(const std::string& s, double& v) {
    try {
        std::size_t pos = 0;
        v = std::stod(s, &pos);
        return pos == s.size();
    } catch (...) {
        return false;
    }
}

}  // namespace detail

/// Trip CSV ingestion. Two headers are accepted:
///   time_min,origin_row,origin_col,dest_row,dest_col        (zone-coded)
///   time_min,origin_lat,origin_lon,dest_lat,dest_lon        (geo-coded, bbox required)
/// Malformed lines are counted and skipped; more than half malformed is a
/// format error. Output is sorted by request time (stable).
inline IngestResult ingest_trips(std::istream& in, const GridMap& grid,
                                 const GeoBBox* bbox = nullptr) {
    if (!in.good()) throw io_error("ingest_trips: unreadable source");
    IngestResult res;
    std::string line;
    if (!std::getline(in, line)) return res;  // empty source -> empty list
    if (!line.empty() && line.back() == '\r') line.pop_back();

    bool geo = false;
    if (line == "time_min,origin_row,origin_col,dest_row,dest_col") {
        geo = false;
    } else if (line == "time_min,origin_lat,origin_lon,dest_lat,dest_lon") {
        geo = true;
        if (bbox == nullptr) throw invalid_config("ingest_trips: geo-coded input needs a bbox");
    } else {
        throw format_error("ingest_trips: unrecognized header: " + line);
    }

    std::size_t data_lines = 0;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        ++data_lines;
        const auto f = detail::split_csv(line);
        if (f.size() != 5) {
            ++res.malformed;
            continue;
        }
        std::int64_t t;
        if (!detail::parse_ll(f[0], t) || t < 0) {
            ++res.malformed;
            continue;
        }
        int oz = -1, dz = -1;
        if (geo) {
            double olat, olon, dlat, dlon;
            if (!detail::parse_double(f[1], olat) || !detail::parse_double(f[2], olon) ||
                !detail::parse_double(f[3], dlat) || !detail::parse_double(f[4], dlon)) {
                ++res.malformed;
                continue;
            }
            auto o = bbox->to_zone(grid, olat, olon);
            auto d = bbox->to_zone(grid, dlat, dlon);
            if (!o || !d) {
                ++res.out_of_bounds;
                continue;
            }
            oz = *o;
            dz = *d;
        } else {
            std::int64_t orow, ocol, drow, dcol;
            if (!detail::parse_ll(f[1], orow) || !detail::parse_ll(f[2], ocol) ||
                !detail::parse_ll(f[3], drow) || !detail::parse_ll(f[4], dcol)) {
                ++res.malformed;
                continue;
            }
            if (!grid.contains(static_cast<int>(orow), static_cast<int>(ocol)) ||
                !grid.contains(static_cast<int>(drow), static_cast<int>(dcol))) {
                ++res.out_of_bounds;
                continue;
            }
            oz = grid.id(static_cast<int>(orow), static_cast<int>(ocol));
            dz = grid.id(static_cast<int>(drow), static_cast<int>(dcol));
        }
        res.trips.push_back(TripRecord{t, oz, dz, oz == dz});
    }
    if (data_lines > 0 && res.malformed * 2 > data_lines)
        throw format_error("ingest_trips: more than half of the lines are malformed");
    std::stable_sort(res.trips.begin(), res.trips.end(),
                     [](const TripRecord& a, const TripRecord& b) {
                         return a.request_time < b.request_time;
                     });
    return res;
}

/// Poisson workload: independent arrivals per zone per step, destinations
/// uniform over the other zones. Identical (inputs, seed) -> identical output.
inline std::vector<TripRecord> synth_workload(const GridMap& grid,
                                              const std::vector<double>& rate_per_zone,
                                              int duration_steps, std::uint64_t seed,
                                              std::int64_t start_min = 0,
                                              int step_minutes = 1) {
    if (static_cast<int>(rate_per_zone.size()) != grid.zone_count())
        throw invalid_config("synth_workload: one rate per zone required");
    for (double r : rate_per_zone)
        if (r < 0.0) throw invalid_config("synth_workload: negative intensity");
    std::vector<TripRecord> out;
    Rng rng(seed);
    const int m = grid.zone_count();
    for (int k = 0; k < duration_steps; ++k) {
        for (int z = 0; z < m; ++z) {
            if (rate_per_zone[z] == 0.0) continue;
            const int n = rng.poisson(rate_per_zone[z]);
            for (int i = 0; i < n; ++i) {
                int dest = z;
                if (m > 1) {
                    dest = static_cast<int>(rng.uniform_int(m - 1));
                    if (dest >= z) ++dest;
                }
                out.push_back(TripRecord{start_min + static_cast<std::int64_t>(k) * step_minutes,
                                         z, dest, dest == z});
            }
        }
    }
    return out;
}

struct DemandForecast {
    int horizon = 0;  // T steps
    int zones = 0;
    std::vector<double> values;  // horizon x zones, row-major

    double at(int step, int zone) const { return values[static_cast<std::size_t>(step) * zones + zone]; }
    double& at(int step, int zone) { return values[static_cast<std::size_t>(step) * zones + zone]; }
};

/// Historical-mean demand predictor: per zone, per (day-of-week, time-of-day
/// bin) average request count. No smoothing; bins never observed predict 0.
class DemandPredictor {
public:
    DemandPredictor() = default;
    DemandPredictor(int zones, int bin_minutes)
        : zones_(zones),
          bin_minutes_(bin_minutes),
          bins_per_day_(kMinutesPerDay / bin_minutes),
          mean_(static_cast<std::size_t>(7) * bins_per_day_ * zones, 0.0) {
        if (bin_minutes < 1 || kMinutesPerDay % bin_minutes != 0)
            throw invalid_config("DemandPredictor: bin_minutes must divide a day");
    }

    int zones() const { return zones_; }
    int bin_minutes() const { return bin_minutes_; }
    bool fitted_empty() const { return fitted_empty_; }

    double mean_at(std::int64_t minute, int zone) const {
        if (mean_.empty()) return 0.0;
        const std::int64_t week_min = ((minute % kMinutesPerWeek) + kMinutesPerWeek) % kMinutesPerWeek;
        const int dow = static_cast<int>(week_min / kMinutesPerDay);
        const int bin = static_cast<int>((week_min % kMinutesPerDay) / bin_minutes_);
        return mean_[(static_cast<std::size_t>(dow) * bins_per_day_ + bin) * zones_ + zone];
    }

    static DemandPredictor fit(const std::vector<TripRecord>& history, const GridMap& grid,
                               int bin_minutes) {
        DemandPredictor p(grid.zone_count(), bin_minutes);
        if (history.empty()) {
            p.fitted_empty_ = true;
            return p;
        }
        std::int64_t lo = history.front().request_time, hi = history.front().request_time;
        for (const auto& t : history) {
            lo = std::min(lo, t.request_time);
            hi = std::max(hi, t.request_time);
        }
        // occurrences of each (dow, bin) across the observed span, counting
        // zero-request bins, so training-window predictions reproduce the
        // training means exactly
        const std::int64_t first_bin = lo / bin_minutes;
        const std::int64_t last_bin = hi / bin_minutes;
        std::vector<std::int64_t> occurrences(static_cast<std::size_t>(7) * p.bins_per_day_, 0);
        for (std::int64_t b = first_bin; b <= last_bin; ++b) {
            const std::int64_t minute = b * bin_minutes;
            const std::int64_t week_min = minute % kMinutesPerWeek;
            const int dow = static_cast<int>(week_min / kMinutesPerDay);
            const int bin = static_cast<int>((week_min % kMinutesPerDay) / bin_minutes);
            ++occurrences[static_cast<std::size_t>(dow) * p.bins_per_day_ + bin];
        }
        std::vector<double> counts(p.mean_.size(), 0.0);
        for (const auto& t : history) {
            const std::int64_t week_min = t.request_time % kMinutesPerWeek;
            const int dow = static_cast<int>(week_min / kMinutesPerDay);
            const int bin = static_cast<int>((week_min % kMinutesPerDay) / bin_minutes);
            counts[(static_cast<std::size_t>(dow) * p.bins_per_day_ + bin) * p.zones_ + t.origin] += 1.0;
        }
        for (int dow = 0; dow < 7; ++dow)
            for (int bin = 0; bin < p.bins_per_day_; ++bin) {
                const std::int64_t occ = occurrences[static_cast<std::size_t>(dow) * p.bins_per_day_ + bin];
                if (occ == 0) continue;
                for (int z = 0; z < p.zones_; ++z)
                    p.mean_[(static_cast<std::size_t>(dow) * p.bins_per_day_ + bin) * p.zones_ + z] =
                        counts[(static_cast<std::size_t>(dow) * p.bins_per_day_ + bin) * p.zones_ + z] /
                        static_cast<double>(occ);
            }
        return p;
    }

private:
    int zones_ = 0;
    int bin_minutes_ = 60;
    int bins_per_day_ = 24;
    std::vector<double> mean_;
    bool fitted_empty_ = false;
};

inline DemandPredictor fit_demand(const std::vector<TripRecord>& history, const GridMap& grid,
                                  int bin_minutes) {
    return DemandPredictor::fit(history, grid, bin_minutes);
}

inline DemandForecast predict_demand(const DemandPredictor& p, std::int64_t now_min, int horizon_steps,
                                     int step_minutes = 1) {
    if (horizon_steps < 1) throw invalid_input("predict_demand: horizon must be >= 1");
    DemandForecast f;
    f.horizon = horizon_steps;
    f.zones = p.zones();
    f.values.assign(static_cast<std::size_t>(horizon_steps) * p.zones(), 0.0);
    for (int k = 0; k < horizon_steps; ++k) {
        const std::int64_t minute = now_min + static_cast<std::int64_t>(k) * step_minutes;
        for (int z = 0; z < p.zones(); ++z) f.at(k, z) = p.mean_at(minute, z);
    }
    return f;
}

struct EtaSample {
    int origin = 0;
    int destination = 0;
    std::int64_t depart_min = 0;
    double observed_minutes = 0.0;
};

/// Travel-time estimator: empirical mean per (origin, destination,
/// time-of-day bin) with a distance/speed fallback.
struct EtaModel {
    double speed_m_per_min = 800.0;
    int bin_minutes = 60;
    std::map<std::tuple<int, int, int>, double> table;  // (o, d, bin) -> mean minutes

    int bin_of(std::int64_t minute) const {
        const std::int64_t day_min = ((minute % kMinutesPerDay) + kMinutesPerDay) % kMinutesPerDay;
        return static_cast<int>(day_min / bin_minutes);
    }
};

inline EtaModel fit_eta(const std::vector<EtaSample>& samples, const GridMap& grid,
                        int bin_minutes = 60, double default_speed_m_per_min = 800.0) {
    EtaModel m;
    m.bin_minutes = bin_minutes;
    m.speed_m_per_min = default_speed_m_per_min;
    if (samples.empty()) return m;  // pure-distance model
    std::map<std::tuple<int, int, int>, std::pair<double, int>> acc;
    double total_dist = 0.0, total_min = 0.0;
    for (const auto& s : samples) {
        if (s.observed_minutes <= 0.0) throw invalid_input("fit_eta: observed minutes must be positive");
        auto& slot = acc[{s.origin, s.destination, m.bin_of(s.depart_min)}];
        slot.first += s.observed_minutes;
        slot.second += 1;
        total_dist += zone_distance_m(grid, s.origin, s.destination);
        total_min += s.observed_minutes;
    }
    if (total_min > 0.0 && total_dist > 0.0) m.speed_m_per_min = total_dist / total_min;
    for (const auto& [key, slot] : acc) m.table[key] = slot.first / slot.second;
    return m;
}

inline double eta_minutes(const EtaModel& m, const GridMap& grid, int from, int to,
                          std::int64_t depart_min) {
    check_zone(grid, from, "eta_minutes");
    check_zone(grid, to, "eta_minutes");
    if (from == to) return 0.0;
    const auto it = m.table.find({from, to, m.bin_of(depart_min)});
    if (it != m.table.end()) return it->second;
    return zone_distance_m(grid, from, to) / m.speed_m_per_min;
}

}  // namespace mhrs
