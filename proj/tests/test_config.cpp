#include <doctest.h>

#include <sstream>

#include "mhrs/config.hpp"

using namespace mhrs;

TEST_CASE("config text parses key = value with comments") {
    std::stringstream in(
        "# experiment\n"
        "rows = 8\n"
        "cols=9   # trailing comment\n"
        "mode = rs\n"
        "\n"
        "seed = 42\n");
    const ConfigMap m = parse_config_text(in);
    CHECK(m.at("rows") == "8");
    CHECK(m.at("cols") == "9");
    CHECK(m.at("mode") == "rs");
    CHECK(m.at("seed") == "42");

    std::stringstream bad("rows 8\n");
    CHECK_THROWS_AS(parse_config_text(bad), invalid_config);
}

TEST_CASE("experiment config applies defaults and rejects unknown keys") {
    ConfigMap raw{{"rows", "8"}, {"cols", "9"}, {"mode", "nors"}, {"seed", "5"},
                  {"hop_zones", "0:0;3:3"}, {"hidden", "32,16"}};
    const ExperimentConfig e = make_experiment_config(raw);
    CHECK(e.grid.rows == 8);
    CHECK(e.grid.cols == 9);
    CHECK(e.grid.cell_edge_m == 800.0);
    CHECK(e.grid.hop_zones == std::set<int>{0, 3 * 9 + 3});
    CHECK(e.sim.mode == Mode::nors);
    CHECK(e.sim.seed == 5);
    CHECK(e.sim.weights.beta1 == 5.0);
    CHECK(e.sim.weights.beta3 == 3.5);
    CHECK(e.sim.weights.beta4 == 0.05);
    CHECK(e.train.hidden == std::vector<int>{32, 16});
    CHECK(e.train.target_alpha == 0.9);

    CHECK_THROWS_AS(make_experiment_config(ConfigMap{{"rowz", "8"}}), invalid_config);
    CHECK_THROWS_AS(make_experiment_config(ConfigMap{{"mode", "taxi"}}), invalid_config);
    CHECK_THROWS_AS(make_experiment_config(ConfigMap{{"rows", "abc"}}), invalid_config);
}

TEST_CASE("config hash is stable and order-independent") {
    const ConfigMap a{{"rows", "8"}, {"mode", "rs"}};
    const ConfigMap b{{"mode", "rs"}, {"rows", "8"}};
    CHECK(config_hash(a) == config_hash(b));
    CHECK(config_hash(a).size() == 16);
    const ConfigMap c{{"rows", "9"}, {"mode", "rs"}};
    CHECK(config_hash(a) != config_hash(c));
}

TEST_CASE("manifest carries config, hash, seed, and version") {
    const ConfigMap raw{{"rows", "4"}};
    const auto j = make_manifest(raw, 17);
    CHECK(j.at("seed") == 17);
    CHECK(j.at("version") == std::string(kVersion));
    CHECK(j.at("config").at("rows") == "4");
    CHECK(j.at("config_hash") == config_hash(raw));
}

TEST_CASE("eta model json round-trips") {
    EtaModel m;
    m.speed_m_per_min = 640.0;
    m.bin_minutes = 30;
    m.table[{0, 5, 3}] = 7.25;
    m.table[{2, 1, 0}] = 4.0;
    const EtaModel back = eta_model_from_json(eta_model_to_json(m));
    CHECK(back.speed_m_per_min == 640.0);
    CHECK(back.bin_minutes == 30);
    CHECK(back.table == m.table);
}

TEST_CASE("synthetic workloads are derived from the seed, not the mode") {
    const ExperimentConfig e = make_experiment_config(ConfigMap{{"rows", "5"}, {"cols", "5"},
                                                                {"synth_rate", "0.1"}});
    const auto w1 = build_workload(e, 9, 30);
    const auto w2 = build_workload(e, 9, 30);
    REQUIRE(w1.size() == w2.size());
    for (std::size_t i = 0; i < w1.size(); ++i) {
        CHECK(w1[i].request_time == w2[i].request_time);
        CHECK(w1[i].origin == w2[i].origin);
        CHECK(w1[i].destination == w2[i].destination);
    }
    const auto w3 = build_workload(e, 10, 30);
    bool differs = w3.size() != w1.size();
    for (std::size_t i = 0; !differs && i < w1.size(); ++i)
        differs = w1[i].request_time != w3[i].request_time || w1[i].origin != w3[i].origin ||
                  w1[i].destination != w3[i].destination;
    CHECK(differs);  // a different seed draws a different workload
}
