// mhrs: multi-hop ride-sharing fleet simulator and experiment runner.
//
// Subcommands: simulate, train, compare, hopzones, fit-demand, fit-eta.
// Exit codes: 0 success, 2 invalid configuration or input, 3 invariant breach.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mhrs/config.hpp"
#include "mhrs/engine.hpp"
#include "mhrs/errors.hpp"
#include "mhrs/metrics.hpp"
#include "mhrs/trainer.hpp"
#include "mhrs/version.hpp"

namespace fs = std::filesystem;
using namespace mhrs;

namespace {

struct CommonOpts {
    std::string config_path;
    std::string out_dir = "out";
    std::optional<std::string> mode;
    std::optional<int> steps;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> workload_csv;
};

void add_common(CLI::App* cmd, CommonOpts& o, bool with_mode = true) {
    cmd->add_option("--config", o.config_path, "experiment config file (key = value lines)");
    cmd->add_option("--out", o.out_dir, "output directory")->capture_default_str();
    if (with_mode) cmd->add_option("--mode", o.mode, "operating mode: mhrs|rs|nors");
    cmd->add_option("--steps", o.steps, "simulation steps");
    cmd->add_option("--seed", o.seed, "random seed");
    cmd->add_option("--workload", o.workload_csv, "trip CSV overriding the configured workload");
}

ConfigMap effective_config(const CommonOpts& o) {
    ConfigMap raw;
    if (!o.config_path.empty()) raw = load_config_file(o.config_path);
    if (o.mode) raw["mode"] = *o.mode;
    if (o.steps) raw["steps"] = std::to_string(*o.steps);
    if (o.seed) raw["seed"] = std::to_string(*o.seed);
    if (o.workload_csv) {
        raw["workload"] = "csv";
        raw["workload_csv"] = *o.workload_csv;
    }
    return raw;
}

void write_json(const fs::path& path, const nlohmann::json& j) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot open " + path.string());
    out << j.dump(2) << "\n";
}

void write_outputs(const fs::path& dir, const ConfigMap& raw, const ExperimentConfig& exp,
                   const EventLog& log, const std::vector<StepMetrics>& metrics,
                   const RunSummary& summary) {
    fs::create_directories(dir);
    log.save((dir / "events.jsonl").string());
    save_metrics_csv((dir / "metrics.csv").string(), metrics);
    write_json(dir / "summary.json", summary.to_json());
    write_json(dir / "manifest.json", make_manifest(raw, exp.sim.seed));
}

int cmd_simulate(const CommonOpts& o, const std::string& checkpoint_in, double epsilon) {
    const ConfigMap raw = effective_config(o);
    const ExperimentConfig exp = make_experiment_config(raw);
    const auto workload = build_workload(exp, exp.sim.seed, exp.steps);
    const DemandPredictor demand = build_demand_predictor(exp, workload);
    Simulation sim(exp.sim, exp.grid, workload, build_eta_model(exp), demand);

    DenseNet net;
    if (!checkpoint_in.empty()) {
        net = load_checkpoint(checkpoint_in).net;
        if (net.input_size() != kFeatureLength || net.output_size() != kActionCount)
            throw invalid_input("checkpoint does not match the dispatch feature/action layout");
        sim.attach_policy(&net, epsilon, false);
    }
    sim.run(exp.steps);
    const RunSummary summary = summarize(sim, exp.hash());
    write_outputs(o.out_dir, raw, exp, sim.log(), sim.step_metrics(), summary);
    std::cout << "simulate: mode=" << to_string(exp.sim.mode) << " steps=" << exp.steps
              << " admitted=" << summary.admitted << " completed=" << summary.completed
              << " rejected=" << summary.rejected << " accept_rate=" << summary.accept_rate
              << "\n";
    return 0;
}

int cmd_train(const CommonOpts& o, const std::string& checkpoint_in,
              const std::string& checkpoint_out, std::int64_t decisions) {
    const ConfigMap raw = effective_config(o);
    const ExperimentConfig exp = make_experiment_config(raw);
    std::optional<DenseNet> warm;
    if (!checkpoint_in.empty()) warm = load_checkpoint(checkpoint_in).net;
    const TrainResult result =
        train_policy(exp, exp.sim.mode, decisions, exp.steps, warm ? &*warm : nullptr);
    fs::create_directories(o.out_dir);
    const std::string ckpt =
        checkpoint_out.empty() ? (fs::path(o.out_dir) / "checkpoint.json").string() : checkpoint_out;
    save_checkpoint(result.net, ckpt, result.train_steps, exp.hash());
    write_json(fs::path(o.out_dir) / "manifest.json", make_manifest(raw, exp.sim.seed));

    const EvalRun eval = evaluate_policy(exp, exp.sim.mode, &result.net, 0.0, exp.sim.seed,
                                         exp.steps);
    write_json(fs::path(o.out_dir) / "summary.json", eval.summary.to_json());
    std::cout << "train: mode=" << to_string(exp.sim.mode) << " decisions=" << result.decisions
              << " train_steps=" << result.train_steps << " episodes=" << result.episodes
              << " eval_accept_rate=" << eval.summary.accept_rate << " checkpoint=" << ckpt
              << "\n";
    return 0;
}

int cmd_compare(const CommonOpts& o, const std::string& modes_csv, const std::string& seeds_csv,
                const std::string& checkpoint_in) {
    const ConfigMap raw = effective_config(o);
    const ExperimentConfig exp = make_experiment_config(raw);

    std::vector<Mode> modes;
    std::stringstream ms(modes_csv);
    std::string item;
    while (std::getline(ms, item, ',')) modes.push_back(parse_mode(item));
    if (modes.empty()) throw invalid_config("compare: no modes given");

    std::vector<std::uint64_t> seeds;
    std::stringstream ss(seeds_csv);
    while (std::getline(ss, item, ','))
        seeds.push_back(static_cast<std::uint64_t>(std::stoull(item)));
    if (seeds.empty()) throw invalid_config("compare: no seeds given");

    std::optional<DenseNet> net;
    if (!checkpoint_in.empty()) net = load_checkpoint(checkpoint_in).net;

    std::map<Mode, std::vector<ComparisonRun>> by_mode;
    for (Mode m : modes)
        for (std::uint64_t seed : seeds) {
            ComparisonRun run;
            run.config = exp.sim;
            run.config.seed = seed;
            run.workload = build_workload(exp, seed, exp.steps);
            if (net) {
                run.policy = &*net;
                run.epsilon = 0.0;
            }
            by_mode[m].push_back(std::move(run));
        }
    const auto first_workload = by_mode.begin()->second.front().workload;
    const DemandPredictor demand = build_demand_predictor(exp, first_workload);
    const Comparison cmp = compare_modes(exp.grid, build_eta_model(exp), demand, by_mode,
                                         exp.steps);
    fs::create_directories(o.out_dir);
    std::ofstream csv(fs::path(o.out_dir) / "comparison.csv", std::ios::binary);
    cmp.write_csv(csv);
    write_json(fs::path(o.out_dir) / "series.json", cmp.to_json());
    write_json(fs::path(o.out_dir) / "manifest.json", make_manifest(raw, exp.sim.seed));
    std::cout << "compare: modes=" << modes_csv << " seeds=" << seeds_csv << " steps=" << exp.steps
              << " -> " << (fs::path(o.out_dir) / "comparison.csv").string() << "\n";
    return 0;
}

int cmd_hopzones(const CommonOpts& o, const std::string& trips_csv) {
    const ConfigMap raw = effective_config(o);
    ExperimentConfig exp = make_experiment_config(raw);
    std::vector<TripRecord> trips;
    if (!trips_csv.empty()) {
        std::ifstream in(trips_csv);
        if (!in) throw io_error("cannot open trips csv: " + trips_csv);
        trips = ingest_trips(in, exp.grid, exp.bbox ? &*exp.bbox : nullptr).trips;
    } else {
        trips = build_workload(exp, exp.sim.seed, exp.steps);
    }
    // mean requests per zone per day across the observed span
    std::vector<double> daily(exp.grid.zone_count(), 0.0);
    if (!trips.empty()) {
        std::int64_t lo = trips.front().request_time, hi = lo;
        for (const auto& t : trips) {
            lo = std::min(lo, t.request_time);
            hi = std::max(hi, t.request_time);
        }
        const double days = std::max(1.0, std::ceil((hi - lo + 1) / 1440.0));
        for (const auto& t : trips) daily[t.origin] += 1.0 / days;
    }
    const auto zones = select_hop_zones(exp.grid, daily, exp.hop_spacing, exp.hop_min_requests);
    nlohmann::json arr = nlohmann::json::array();
    for (int z : zones) arr.push_back({exp.grid.row_of(z), exp.grid.col_of(z)});
    fs::create_directories(o.out_dir);
    write_json(fs::path(o.out_dir) / "hopzones.json", arr);
    write_json(fs::path(o.out_dir) / "manifest.json", make_manifest(raw, exp.sim.seed));
    std::cout << "hopzones: " << zones.size() << " zones -> "
              << (fs::path(o.out_dir) / "hopzones.json").string() << "\n";
    return 0;
}

int cmd_fit_demand(const CommonOpts& o, const std::string& trips_csv, std::int64_t now_min,
                   int horizon) {
    const ConfigMap raw = effective_config(o);
    const ExperimentConfig exp = make_experiment_config(raw);
    std::ifstream in(trips_csv);
    if (!in) throw io_error("cannot open trips csv: " + trips_csv);
    const auto ingest = ingest_trips(in, exp.grid, exp.bbox ? &*exp.bbox : nullptr);
    const DemandPredictor p = fit_demand(ingest.trips, exp.grid, exp.demand_bin_minutes);
    if (p.fitted_empty()) std::cerr << "warning: empty history, predictor returns zeros\n";
    const DemandForecast f = predict_demand(p, now_min, horizon,
                                            static_cast<int>(std::max(1.0, exp.sim.dt_minutes)));
    nlohmann::json j;
    j["now_min"] = now_min;
    j["horizon"] = f.horizon;
    j["zones"] = f.zones;
    nlohmann::json rows = nlohmann::json::array();
    for (int k = 0; k < f.horizon; ++k) {
        nlohmann::json row = nlohmann::json::array();
        for (int z = 0; z < f.zones; ++z) row.push_back(f.at(k, z));
        rows.push_back(std::move(row));
    }
    j["matrix"] = std::move(rows);
    fs::create_directories(o.out_dir);
    write_json(fs::path(o.out_dir) / "forecast.json", j);
    write_json(fs::path(o.out_dir) / "manifest.json", make_manifest(raw, exp.sim.seed));
    std::cout << "fit-demand: " << ingest.trips.size() << " trips (" << ingest.malformed
              << " malformed) -> " << (fs::path(o.out_dir) / "forecast.json").string() << "\n";
    return 0;
}

int cmd_fit_eta(const CommonOpts& o, const std::string& samples_csv) {
    const ConfigMap raw = effective_config(o);
    const ExperimentConfig exp = make_experiment_config(raw);
    std::ifstream in(samples_csv);
    if (!in) throw io_error("cannot open eta samples csv: " + samples_csv);
    // header: time_min,origin_row,origin_col,dest_row,dest_col,minutes
    std::string line;
    if (!std::getline(in, line)) throw format_error("fit-eta: empty file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "time_min,origin_row,origin_col,dest_row,dest_col,minutes")
        throw format_error("fit-eta: unrecognized header: " + line);
    std::vector<EtaSample> samples;
    std::size_t malformed = 0;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::stringstream ls(line);
        std::string f;
        std::vector<std::string> fields;
        while (std::getline(ls, f, ',')) fields.push_back(f);
        if (fields.size() != 6) {
            ++malformed;
            continue;
        }
        try {
            const std::int64_t t = std::stoll(fields[0]);
            const int orow = std::stoi(fields[1]), ocol = std::stoi(fields[2]);
            const int drow = std::stoi(fields[3]), dcol = std::stoi(fields[4]);
            const double minutes = std::stod(fields[5]);
            if (!exp.grid.contains(orow, ocol) || !exp.grid.contains(drow, dcol)) {
                ++malformed;
                continue;
            }
            samples.push_back(EtaSample{exp.grid.id(orow, ocol), exp.grid.id(drow, dcol), t,
                                        minutes});
        } catch (...) {
            ++malformed;
        }
    }
    const EtaModel model = fit_eta(samples, exp.grid, exp.eta_bin_minutes,
                                   exp.default_speed_m_per_min);
    fs::create_directories(o.out_dir);
    write_json(fs::path(o.out_dir) / "eta.json", eta_model_to_json(model));
    write_json(fs::path(o.out_dir) / "manifest.json", make_manifest(raw, exp.sim.seed));
    std::cout << "fit-eta: " << samples.size() << " samples (" << malformed << " malformed), "
              << model.table.size() << " table cells, fallback speed " << model.speed_m_per_min
              << " m/min -> " << (fs::path(o.out_dir) / "eta.json").string() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"multi-hop ride-sharing fleet simulator"};
    app.set_version_flag("--version", std::string(kVersion));
    app.require_subcommand(1);

    CommonOpts sim_opts;
    std::string sim_ckpt_in;
    double sim_epsilon = 0.0;
    auto* simulate = app.add_subcommand("simulate", "run one seeded simulation");
    add_common(simulate, sim_opts);
    simulate->add_option("--checkpoint-in", sim_ckpt_in, "policy checkpoint to drive dispatch");
    simulate->add_option("--epsilon", sim_epsilon, "exploration rate during the run")
        ->capture_default_str();

    CommonOpts train_opts;
    std::string train_ckpt_in, train_ckpt_out;
    std::int64_t train_decisions = 20000;
    auto* train = app.add_subcommand("train", "train the dispatch policy");
    add_common(train, train_opts);
    train->add_option("--checkpoint-in", train_ckpt_in, "warm-start checkpoint");
    train->add_option("--checkpoint-out", train_ckpt_out, "where to write the trained checkpoint");
    train->add_option("--decisions", train_decisions, "dispatch decisions to train over")
        ->capture_default_str();

    CommonOpts cmp_opts;
    std::string cmp_modes = "mhrs,rs,nors";
    std::string cmp_seeds = "1,2,3,4,5";
    std::string cmp_ckpt_in;
    auto* compare = app.add_subcommand("compare", "run the mode comparison benchmark");
    add_common(compare, cmp_opts, false);
    compare->add_option("--modes", cmp_modes, "comma-separated modes")->capture_default_str();
    compare->add_option("--seeds", cmp_seeds, "comma-separated seeds")->capture_default_str();
    compare->add_option("--checkpoint-in", cmp_ckpt_in, "policy checkpoint used in every mode");

    CommonOpts hop_opts;
    std::string hop_trips;
    auto* hopzones = app.add_subcommand("hopzones", "select hop zones from daily request counts");
    add_common(hopzones, hop_opts, false);
    hopzones->add_option("--trips", hop_trips, "trip CSV with the daily demand history");

    CommonOpts fd_opts;
    std::string fd_trips;
    std::int64_t fd_now = 0;
    int fd_horizon = 30;
    auto* fit_demand_cmd = app.add_subcommand("fit-demand", "fit the demand table and export a forecast");
    add_common(fit_demand_cmd, fd_opts, false);
    fit_demand_cmd->add_option("--trips", fd_trips, "trip CSV history")->required();
    fit_demand_cmd->add_option("--now", fd_now, "forecast start minute")->capture_default_str();
    fit_demand_cmd->add_option("--horizon", fd_horizon, "forecast steps")->capture_default_str();

    CommonOpts fe_opts;
    std::string fe_samples;
    auto* fit_eta_cmd = app.add_subcommand("fit-eta", "fit the travel-time table");
    add_common(fit_eta_cmd, fe_opts, false);
    fit_eta_cmd->add_option("--samples", fe_samples, "eta samples CSV")->required();

    try {
        app.parse(argc, argv);
        if (simulate->parsed()) return cmd_simulate(sim_opts, sim_ckpt_in, sim_epsilon);
        if (train->parsed()) return cmd_train(train_opts, train_ckpt_in, train_ckpt_out,
                                              train_decisions);
        if (compare->parsed()) return cmd_compare(cmp_opts, cmp_modes, cmp_seeds, cmp_ckpt_in);
        if (hopzones->parsed()) return cmd_hopzones(hop_opts, hop_trips);
        if (fit_demand_cmd->parsed()) return cmd_fit_demand(fd_opts, fd_trips, fd_now, fd_horizon);
        if (fit_eta_cmd->parsed()) return cmd_fit_eta(fe_opts, fe_samples);
        return 2;
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    } catch (const contract_violation& e) {
        std::cerr << "contract violation: " << e.what() << "\n";
        return 3;
    } catch (const simulation_halt& e) {
        std::cerr << "invariant breach: " << e.what() << "\n";
        return 3;
    } catch (const training_diverged& e) {
        std::cerr << "training diverged: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
