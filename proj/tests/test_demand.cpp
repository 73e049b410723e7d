#include <doctest.h>

#include <cmath>
#include <map>
#include <sstream>

#include "mhrs/demand.hpp"

using namespace mhrs;

namespace {
const GridMap kGrid = build_grid(3, 3, 800.0);
}

TEST_CASE("ingest_trips parses, sorts, and flags degenerates") {
    std::stringstream empty("time_min,origin_row,origin_col,dest_row,dest_col\n");
    CHECK(ingest_trips(empty, kGrid).trips.empty());

    std::stringstream unsorted(
        "time_min,origin_row,origin_col,dest_row,dest_col\n"
        "30,0,0,1,1\n"
        "10,1,0,2,2\n"
        "20,0,1,0,2\n");
    const auto res = ingest_trips(unsorted, kGrid);
    REQUIRE(res.trips.size() == 3);
    CHECK(res.trips[0].request_time == 10);
    CHECK(res.trips[1].request_time == 20);
    CHECK(res.trips[2].request_time == 30);
    CHECK(res.malformed == 0);

    std::stringstream degenerate(
        "time_min,origin_row,origin_col,dest_row,dest_col\n"
        "5,1,1,1,1\n");
    const auto deg = ingest_trips(degenerate, kGrid);
    REQUIRE(deg.trips.size() == 1);
    CHECK(deg.trips[0].degenerate);

    std::stringstream bad(
        "time_min,origin_row,origin_col,dest_row,dest_col\n"
        "nonsense\n"
        "also,bad,line,here,x\n"
        "5,0,0,1,1\n");
    CHECK_THROWS_AS(ingest_trips(bad, kGrid), format_error);

    std::stringstream tolerable(
        "time_min,origin_row,origin_col,dest_row,dest_col\n"
        "oops\n"
        "5,0,0,1,1\n"
        "6,0,0,1,1\n");
    const auto ok = ingest_trips(tolerable, kGrid);
    CHECK(ok.trips.size() == 2);
    CHECK(ok.malformed == 1);
}

TEST_CASE("ingest_trips geo-coded variant maps through the bbox") {
    const GeoBBox bbox{40.0, -74.0, 41.0, -73.0};
    std::stringstream geo(
        "time_min,origin_lat,origin_lon,dest_lat,dest_lon\n"
        "5,40.1,-73.9,40.9,-73.1\n"
        "6,39.0,-73.9,40.9,-73.1\n");  // origin outside the box
    const auto res = ingest_trips(geo, kGrid, &bbox);
    REQUIRE(res.trips.size() == 1);
    CHECK(res.out_of_bounds == 1);
    CHECK(res.trips[0].origin == kGrid.id(0, 0));
    CHECK(res.trips[0].destination == kGrid.id(2, 2));

    std::stringstream nobox(
        "time_min,origin_lat,origin_lon,dest_lat,dest_lon\n"
        "5,40.1,-73.9,40.9,-73.1\n");
    CHECK_THROWS_AS(ingest_trips(nobox, kGrid), invalid_config);
}

TEST_CASE("synth_workload determinism and Poisson concentration") {
    std::vector<double> rates(kGrid.zone_count(), 0.0);
    CHECK(synth_workload(kGrid, rates, 100, 42).empty());

    rates[4] = 2.0;
    const auto a = synth_workload(kGrid, rates, 1000, 42);
    const auto b = synth_workload(kGrid, rates, 1000, 42);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].request_time == b[i].request_time);
        CHECK(a[i].origin == b[i].origin);
        CHECK(a[i].destination == b[i].destination);
    }
    // lambda=2 over 1000 steps: total within 3 sigma of 2000
    const double sigma = std::sqrt(2000.0);
    CHECK(std::abs(static_cast<double>(a.size()) - 2000.0) <= 3.0 * sigma);
    for (const auto& t : a) CHECK(t.origin == 4);
    for (const auto& t : a) CHECK(t.destination != 4);

    std::vector<double> negative(kGrid.zone_count(), -1.0);
    CHECK_THROWS_AS(synth_workload(kGrid, negative, 10, 1), invalid_config);
}

TEST_CASE("fit_demand reproduces per-bin means") {
    // exactly 5 requests in zone 4 every Monday 09:00 bin, five weeks running
    std::vector<TripRecord> history;
    for (int week = 0; week < 5; ++week)
        for (int i = 0; i < 5; ++i)
            history.push_back(TripRecord{week * kMinutesPerWeek + 9 * 60 + i, 4, 5, false});
    const auto p = fit_demand(history, kGrid, 60);
    CHECK(p.mean_at(9 * 60, 4) == doctest::Approx(5.0));
    CHECK(p.mean_at(9 * 60, 3) == 0.0);   // never observed
    CHECK(p.mean_at(15 * 60, 4) == 0.0);  // different bin

    const auto empty = fit_demand({}, kGrid, 60);
    CHECK(empty.fitted_empty());
    CHECK(empty.mean_at(0, 0) == 0.0);
}

TEST_CASE("fit_demand matches a brute-force histogram on a 3-zone toy set") {
    // two weeks of data over three zones with assorted times
    std::vector<TripRecord> history;
    const std::vector<std::pair<int, int>> raw = {
        {0, 0},    {30, 0},   {70, 1},     {1440, 0},  {1500, 2},
        {2880, 0}, {2900, 1}, {10080, 0},  {10110, 0}, {10150, 1},
        {11520, 2}, {11580, 2}, {12960, 1}, {20160 - 1, 0}};
    for (const auto& [t, z] : raw) history.push_back(TripRecord{t, z, (z + 1) % 3, false});
    const int bin_minutes = 60;
    const auto p = fit_demand(history, kGrid, bin_minutes);

    // independent counting oracle
    std::map<std::tuple<int, int, int>, double> counts;  // (dow, bin, zone)
    std::map<std::pair<int, int>, int> occurrences;
    std::int64_t lo = history.front().request_time, hi = lo;
    for (const auto& t : history) {
        lo = std::min(lo, t.request_time);
        hi = std::max(hi, t.request_time);
    }
    for (std::int64_t b = lo / bin_minutes; b <= hi / bin_minutes; ++b) {
        const std::int64_t minute = b * bin_minutes;
        occurrences[{static_cast<int>((minute % kMinutesPerWeek) / kMinutesPerDay),
                     static_cast<int>((minute % kMinutesPerDay) / bin_minutes)}] += 1;
    }
    for (const auto& t : history) {
        const int dow = static_cast<int>((t.request_time % kMinutesPerWeek) / kMinutesPerDay);
        const int bin = static_cast<int>((t.request_time % kMinutesPerDay) / bin_minutes);
        counts[{dow, bin, t.origin}] += 1.0;
    }
    for (int dow = 0; dow < 7; ++dow)
        for (int bin = 0; bin < 24; ++bin)
            for (int z = 0; z < 3; ++z) {
                const auto occ = occurrences.find({dow, bin});
                const double expect =
                    occ == occurrences.end()
                        ? 0.0
                        : counts[{dow, bin, z}] / static_cast<double>(occ->second);
                const std::int64_t minute =
                    static_cast<std::int64_t>(dow) * kMinutesPerDay + bin * bin_minutes;
                CHECK(p.mean_at(minute, z) == doctest::Approx(expect));
            }
}

TEST_CASE("predict_demand fills the horizon from fitted means") {
    const auto zero = fit_demand({}, kGrid, 60);
    const auto f0 = predict_demand(zero, 0, 5);
    CHECK(f0.horizon == 5);
    CHECK(f0.zones == kGrid.zone_count());
    for (double v : f0.values) CHECK(v == 0.0);

    // stationary toy history: 2 requests per zone per hour bin over one week
    std::vector<TripRecord> history;
    for (int h = 0; h < 7 * 24; ++h)
        for (int z = 0; z < kGrid.zone_count(); ++z)
            for (int i = 0; i < 2; ++i) history.push_back(TripRecord{h * 60 + i, z, (z + 1) % 9, false});
    const auto p = fit_demand(history, kGrid, 60);
    const auto f = predict_demand(p, 0, 10);
    for (double v : f.values) CHECK(v == doctest::Approx(2.0));

    // periodic 2-bin history reproduces the period
    std::vector<TripRecord> periodic;
    for (int day = 0; day < 7; ++day)
        for (int rep = 0; rep < 3; ++rep)
            periodic.push_back(TripRecord{day * kMinutesPerDay + 0 * 60 + rep, 0, 1, false});
    // bin 1 left empty; span padded to whole days with one last-day marker
    periodic.push_back(TripRecord{6 * kMinutesPerDay + 23 * 60, 1, 2, false});
    const auto pp = fit_demand(periodic, kGrid, 60);
    const auto fp = predict_demand(pp, 0, 120, 1);  // two hours, minute steps
    for (int k = 0; k < 60; ++k) CHECK(fp.at(k, 0) == doctest::Approx(3.0));
    for (int k = 60; k < 120; ++k) CHECK(fp.at(k, 0) == doctest::Approx(0.0));

    CHECK_THROWS_AS(predict_demand(p, 0, 0), invalid_input);
}

TEST_CASE("fit_demand then predict reproduces training-window bins exactly") {
    std::vector<TripRecord> history;
    Rng rng(5);
    for (int m = 0; m < 2 * kMinutesPerDay; m += 7)
        history.push_back(TripRecord{m, static_cast<int>(rng.uniform_int(9)), 1, false});
    const auto p = fit_demand(history, kGrid, 60);
    // training-window means: count per (bin, zone) / occurrences of that bin
    std::map<std::pair<std::int64_t, int>, double> bin_counts;
    for (const auto& t : history) bin_counts[{t.request_time / 60, t.origin}] += 1.0;
    for (std::int64_t b = 0; b < 48; ++b)
        for (int z = 0; z < 9; ++z) {
            // each (dow, tod) bin occurs exactly once inside the two-day span
            const auto f = predict_demand(p, b * 60, 1);
            CHECK(f.at(0, z) == doctest::Approx(bin_counts[{b, z}]));
        }
}

TEST_CASE("eta model: table precedence, fallback, and degenerate pairs") {
    const GridMap g = build_grid(4, 4, 800.0);
    const auto empty_model = fit_eta({}, g, 60, 800.0);
    CHECK(empty_model.table.empty());
    CHECK(eta_minutes(empty_model, g, g.id(0, 0), g.id(0, 3), 0) == doctest::Approx(3.0));
    CHECK(eta_minutes(empty_model, g, 5, 5, 123) == 0.0);

    const std::vector<EtaSample> one = {{g.id(0, 0), g.id(1, 1), 10 * 60, 7.0}};
    const auto m = fit_eta(one, g, 60, 800.0);
    CHECK(eta_minutes(m, g, g.id(0, 0), g.id(1, 1), 10 * 60) == doctest::Approx(7.0));
    // same pair, different bin: falls back to distance / fitted speed
    const double fitted_speed = 1600.0 / 7.0;
    CHECK(eta_minutes(m, g, g.id(0, 0), g.id(1, 1), 20 * 60) ==
          doctest::Approx(1600.0 / fitted_speed));

    CHECK_THROWS_AS(fit_eta({{0, 1, 0, 0.0}}, g, 60, 800.0), invalid_input);
}

TEST_CASE("eta fallback is symmetric; table entries may break symmetry") {
    const GridMap g = build_grid(6, 6, 800.0);
    const EtaModel fallback{640.0, 60, {}};
    Rng rng(23);
    for (int i = 0; i < 50; ++i) {
        const int a = static_cast<int>(rng.uniform_int(36));
        const int b = static_cast<int>(rng.uniform_int(36));
        CHECK(eta_minutes(fallback, g, a, b, 0) == eta_minutes(fallback, g, b, a, 0));
    }
    EtaModel asym = fallback;
    asym.table[{0, 5, 0}] = 9.0;  // one direction observed slower
    CHECK(eta_minutes(asym, g, 0, 5, 0) == 9.0);
    CHECK(eta_minutes(asym, g, 5, 0, 0) != 9.0);
}

TEST_CASE("fitted eta beats the global-mean predictor on held-out data") {
    const GridMap g = build_grid(5, 5, 800.0);
    // synthetic truth: per-od noisy time around distance/speed with a rush-hour slowdown
    Rng rng(17);
    std::vector<EtaSample> all;
    for (int i = 0; i < 2000; ++i) {
        const int o = static_cast<int>(rng.uniform_int(25));
        int d = static_cast<int>(rng.uniform_int(24));
        if (d >= o) ++d;
        const std::int64_t depart = rng.uniform_int(kMinutesPerDay);
        const bool rush = (depart % kMinutesPerDay) >= 8 * 60 && (depart % kMinutesPerDay) < 10 * 60;
        const double base = zone_distance_m(g, o, d) / (rush ? 400.0 : 800.0);
        const double noisy = std::max(0.1, base + rng.normal(0.0, 0.3));
        all.push_back(EtaSample{o, d, depart, noisy});
    }
    const std::size_t split = all.size() * 7 / 10;
    const std::vector<EtaSample> train(all.begin(), all.begin() + split);
    const std::vector<EtaSample> test(all.begin() + split, all.end());
    const auto model = fit_eta(train, g, 60, 800.0);

    double global_mean = 0.0;
    for (const auto& s : train) global_mean += s.observed_minutes;
    global_mean /= static_cast<double>(train.size());

    double se_model = 0.0, se_naive = 0.0;
    for (const auto& s : test) {
        const double pred = eta_minutes(model, g, s.origin, s.destination, s.depart_min);
        se_model += (pred - s.observed_minutes) * (pred - s.observed_minutes);
        se_naive += (global_mean - s.observed_minutes) * (global_mean - s.observed_minutes);
    }
    CHECK(std::sqrt(se_model / test.size()) <= std::sqrt(se_naive / test.size()));
}
