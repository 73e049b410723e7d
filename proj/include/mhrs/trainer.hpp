#pragma once

#include <cstdint>
#include <vector>

#include "mhrs/config.hpp"
#include "mhrs/dispatch.hpp"
#include "mhrs/engine.hpp"
#include "mhrs/metrics.hpp"
#include "mhrs/replay.hpp"

namespace mhrs {

struct TrainResult {
    DenseNet net;
    std::int64_t decisions = 0;
    std::int64_t train_steps = 0;
    int episodes = 0;
    double last_loss = 0.0;
};

/// Episode-looped DDQN training: run the simulator with an exploring policy,
/// push transitions into the replay buffer, take a gradient step every
/// train_interval decisions and soft-update the target every target_interval.
/// Stops at the end of the episode that reaches `target_decisions`.
inline TrainResult train_policy(const ExperimentConfig& exp, Mode mode,
                                std::int64_t target_decisions, int episode_steps,
                                const DenseNet* warm_start = nullptr) {
    const TrainConfig& tc = exp.train;
    TrainResult out;
    out.net = warm_start != nullptr ? *warm_start
                                    : make_qnetwork(kFeatureLength, tc.hidden, mix_seed(tc.seed, 10));
    DenseNet target = out.net;
    ReplayBuffer buffer(tc.buffer_capacity, mix_seed(tc.seed, 11));

    std::int64_t next_train = tc.train_interval;
    std::int64_t next_sync = tc.target_interval;
    while (out.decisions < target_decisions) {
        SimConfig cfg = exp.sim;
        cfg.mode = mode;
        cfg.seed = mix_seed(tc.seed, 200 + out.episodes);
        const auto workload = build_workload(exp, mix_seed(tc.seed, 100 + out.episodes),
                                             episode_steps);
        const DemandPredictor demand = build_demand_predictor(exp, workload);
        Simulation sim(cfg, exp.grid, workload, build_eta_model(exp), demand);
        sim.attach_policy(&out.net, tc.epsilon_at(out.decisions), true);
        for (int k = 0; k < episode_steps; ++k) {
            sim.set_epsilon(tc.epsilon_at(out.decisions));
            StepResult res = sim.step();
            out.decisions += res.decisions;
            for (auto& tr : res.transitions) {
                tr.reward *= tc.reward_scale;
                buffer.push(std::move(tr));
            }
            while (out.decisions >= next_train &&
                   buffer.size() >= static_cast<std::size_t>(tc.batch_size)) {
                out.last_loss = train_step(out.net, target, buffer.sample(tc.batch_size), tc);
                ++out.train_steps;
                next_train += tc.train_interval;
            }
            while (out.decisions >= next_sync) {
                sync_target(out.net, target, tc.target_alpha);
                next_sync += tc.target_interval;
            }
        }
        for (auto& tr : sim.finish_episode()) {
            tr.reward *= tc.reward_scale;
            buffer.push(std::move(tr));
        }
        ++out.episodes;
    }
    return out;
}

struct EvalRun {
    RunSummary summary;
    EventLog log;
    std::vector<StepMetrics> metrics;
    SimConfig config;
    int steps = 0;
};

/// One evaluation run with a fixed greedy (or epsilon-soft) policy.
inline EvalRun evaluate_policy(const ExperimentConfig& exp, Mode mode, const DenseNet* net,
                               double epsilon, std::uint64_t seed, int steps) {
    SimConfig cfg = exp.sim;
    cfg.mode = mode;
    cfg.seed = seed;
    const auto workload = build_workload(exp, seed, steps);
    const DemandPredictor demand = build_demand_predictor(exp, workload);
    Simulation sim(cfg, exp.grid, workload, build_eta_model(exp), demand);
    if (net != nullptr) sim.attach_policy(net, epsilon, false);
    sim.run(steps);
    EvalRun run;
    run.summary = summarize(sim, exp.hash());
    run.log = sim.log();
    run.metrics = sim.step_metrics();
    run.config = sim.config();
    run.steps = steps;
    return run;
}

}  // namespace mhrs
