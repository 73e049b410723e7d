#include <doctest.h>

#include <cmath>

#include "mhrs/dispatch.hpp"

using namespace mhrs;

namespace {

EnvSnapshot toy_env(const GridMap& grid, int horizon) {
    EnvSnapshot env;
    env.demand.horizon = horizon;
    env.demand.zones = grid.zone_count();
    env.demand.values.assign(static_cast<std::size_t>(horizon) * grid.zone_count(), 0.0);
    env.availability.horizon = horizon;
    env.availability.zones = grid.zone_count();
    env.availability.values.assign(static_cast<std::size_t>(horizon + 1) * grid.zone_count(), 0.0);
    return env;
}

}  // namespace

TEST_CASE("action indexing round-trips and stay is the center") {
    CHECK(action_index(0, 0) == kStayAction);
    CHECK(kStayAction == 112);
    CHECK(action_index(-7, -7) == 0);
    CHECK(action_index(7, 7) == 224);
    for (int dr = -7; dr <= 7; ++dr)
        for (int dc = -7; dc <= 7; ++dc) {
            const auto [r, c] = action_offset(action_index(dr, dc));
            CHECK(r == dr);
            CHECK(c == dc);
        }
    CHECK_THROWS_AS(action_index(8, 0), contract_violation);
    CHECK_THROWS_AS(action_offset(225), contract_violation);
}

TEST_CASE("encode_state: empty city gives an all-zero demand crop") {
    const GridMap grid = build_grid(5, 5, 800.0);
    EnvSnapshot env = toy_env(grid, 30);
    env.vehicles.push_back(VehicleSnapshot{0, grid.id(2, 2), 4, {}});
    const auto f = encode_state(env, 0, grid);
    REQUIRE(f.size() == kFeatureLength);
    for (int i = 0; i < kActionCount; ++i) CHECK(f[i] == 0.0);
    CHECK(f[4 * kActionCount + 0] == 4.0);           // vacant seats
    CHECK(f[4 * kActionCount + 1] == doctest::Approx(0.5));  // normalized row
    CHECK(f[4 * kActionCount + 2] == doctest::Approx(0.5));
}

TEST_CASE("encode_state zero-fills exactly the out-of-grid quadrant at a corner") {
    const GridMap grid = build_grid(5, 5, 800.0);
    EnvSnapshot env = toy_env(grid, 30);
    // make every real zone's demand nonzero so zeros can only mean out-of-grid
    for (int k = 0; k < env.demand.horizon; ++k)
        for (int z = 0; z < grid.zone_count(); ++z) env.demand.at(k, z) = 1.0 + z;
    env.vehicles.push_back(VehicleSnapshot{3, grid.id(0, 0), 2, {}});
    const auto f = encode_state(env, 3, grid);
    for (int dr = -7; dr <= 7; ++dr)
        for (int dc = -7; dc <= 7; ++dc) {
            const double v = f[(dr + 7) * 15 + (dc + 7)];
            const bool inside = dr >= 0 && dr < 5 && dc >= 0 && dc < 5;
            if (inside)
                CHECK(v > 0.0);
            else
                CHECK(v == 0.0);
        }
}

TEST_CASE("encode_state equals a hand-enumerated crop on a 5x5 toy env") {
    const GridMap grid = build_grid(5, 5, 800.0);
    EnvSnapshot env = toy_env(grid, 30);
    for (int k = 0; k < 30; ++k)
        for (int z = 0; z < 25; ++z) env.demand.at(k, z) = 0.01 * (k + 1) + z;
    for (int k = 0; k <= 30; ++k)
        for (int z = 0; z < 25; ++z) env.availability.at(k, z) = 100.0 * k + z;
    env.vehicles.push_back(VehicleSnapshot{1, grid.id(2, 1), 3, {}});
    const auto f = encode_state(env, 1, grid);

    for (int dr = -7; dr <= 7; ++dr)
        for (int dc = -7; dc <= 7; ++dc) {
            const int r = 2 + dr, c = 1 + dc;
            const int slot = (dr + 7) * 15 + (dc + 7);
            double demand15 = 0.0, avail0 = 0.0, avail15 = 0.0, avail30 = 0.0;
            if (r >= 0 && r < 5 && c >= 0 && c < 5) {
                const int z = r * 5 + c;
                for (int k = 0; k < 15; ++k) demand15 += 0.01 * (k + 1) + z;
                avail0 = z;
                avail15 = 100.0 * 15 + z;
                avail30 = 100.0 * 30 + z;
            }
            CHECK(f[slot] == doctest::Approx(demand15));
            CHECK(f[kActionCount + slot] == doctest::Approx(avail0));
            CHECK(f[2 * kActionCount + slot] == doctest::Approx(avail15));
            CHECK(f[3 * kActionCount + slot] == doctest::Approx(avail30));
        }
    CHECK(f[4 * kActionCount] == 3.0);
    CHECK(f[4 * kActionCount + 1] == doctest::Approx(2.0 / 4.0));
    CHECK(f[4 * kActionCount + 2] == doctest::Approx(1.0 / 4.0));
}

TEST_CASE("encode_state rejects unavailable vehicles and ignores identity") {
    const GridMap grid = build_grid(5, 5, 800.0);
    EnvSnapshot env = toy_env(grid, 30);
    env.vehicles.push_back(VehicleSnapshot{0, grid.id(1, 1), 0, {}});
    env.vehicles.push_back(VehicleSnapshot{1, grid.id(3, 3), 2, {}});
    env.vehicles.push_back(VehicleSnapshot{2, grid.id(3, 3), 2, {}});
    CHECK_THROWS_AS(encode_state(env, 0, grid), contract_violation);
    CHECK_THROWS_AS(encode_state(env, 9, grid), contract_violation);
    // same zone, same occupancy: identical features regardless of id
    CHECK(encode_state(env, 1, grid) == encode_state(env, 2, grid));
}

TEST_CASE("valid_actions masks offsets that leave the grid") {
    const GridMap grid = build_grid(5, 5, 800.0);
    const auto corner = valid_actions(grid, grid.id(0, 0));
    CHECK(corner.size() == 25);  // dr,dc in [0,4]x[0,4]
    for (int a : corner) {
        const auto [dr, dc] = action_offset(a);
        CHECK(dr >= 0);
        CHECK(dc >= 0);
    }
    const auto stay = valid_actions(grid, grid.id(2, 2), true);
    REQUIRE(stay.size() == 1);
    CHECK(stay[0] == kStayAction);
}

TEST_CASE("select_action: greedy, masking, exploration, affine invariance") {
    Rng rng(21);
    std::vector<double> q(10, 0.0);
    q[7] = 3.0;
    std::vector<int> full_mask;
    for (int i = 0; i < 10; ++i) full_mask.push_back(i);
    CHECK(select_action(q, full_mask, 0.0, rng) == 7);

    // greedy ties break to the lowest index
    std::vector<double> flat(6, 1.0);
    CHECK(select_action(flat, {2, 4, 5}, 0.0, rng) == 2);

    // masked argmax when the global max is excluded
    CHECK(select_action(q, {0, 1, 2}, 0.0, rng) == 0);

    CHECK_THROWS_AS(select_action(q, {}, 0.0, rng), contract_violation);
    CHECK_THROWS_AS(select_action(q, {42}, 0.0, rng), contract_violation);

    // epsilon = 1: uniform over the mask within 3 sigma over 1e4 draws
    std::vector<long> counts(10, 0);
    const int draws = 10000;
    for (int i = 0; i < draws; ++i) counts[select_action(q, full_mask, 1.0, rng)] += 1;
    const double sigma = std::sqrt(draws * 0.1 * 0.9);
    for (long c : counts) CHECK(std::abs(c - 1000.0) <= 3.0 * sigma);

    // epsilon = 0 selection is invariant under positive affine maps of Q
    Rng check_rng(5);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> qs(15);
        for (auto& v : qs) v = check_rng.normal();
        std::vector<int> mask;
        for (int i = 0; i < 15; ++i)
            if (check_rng.bernoulli(0.6)) mask.push_back(i);
        if (mask.empty()) mask.push_back(3);
        const double a = 0.1 + check_rng.uniform() * 5.0;
        const double b = check_rng.normal(0.0, 10.0);
        std::vector<double> affine(qs);
        for (auto& v : affine) v = a * v + b;
        Rng r1(99), r2(99);
        CHECK(select_action(qs, mask, 0.0, r1) == select_action(affine, mask, 0.0, r2));
    }
}

TEST_CASE("epsilon schedule interpolates and clamps") {
    TrainConfig cfg;
    cfg.eps_start = 1.0;
    cfg.eps_end = 0.05;
    cfg.eps_decay_steps = 1000;
    CHECK(cfg.epsilon_at(0) == doctest::Approx(1.0));
    CHECK(cfg.epsilon_at(500) == doctest::Approx(0.525));
    CHECK(cfg.epsilon_at(1000) == doctest::Approx(0.05));
    CHECK(cfg.epsilon_at(5000) == doctest::Approx(0.05));
}
