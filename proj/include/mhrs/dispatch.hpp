#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "mhrs/demand.hpp"
#include "mhrs/errors.hpp"
#include "mhrs/grid.hpp"
#include "mhrs/net.hpp"
#include "mhrs/replay.hpp"
#include "mhrs/rng.hpp"

namespace mhrs {

// Relocation neighborhood: 15x15 offsets around the vehicle, (0,0) = stay.
constexpr int kActionGrid = 15;
constexpr int kActionRadius = 7;
constexpr int kActionCount = kActionGrid * kActionGrid;  // 225
constexpr int kStayAction = (0 + kActionRadius) * kActionGrid + (0 + kActionRadius);

inline int action_index(int dr, int dc) {
    if (dr < -kActionRadius || dr > kActionRadius || dc < -kActionRadius || dc > kActionRadius)
        throw contract_violation("action_index: offset out of the 15x15 neighborhood");
    return (dr + kActionRadius) * kActionGrid + (dc + kActionRadius);
}

inline std::pair<int, int> action_offset(int index) {
    if (index < 0 || index >= kActionCount)
        throw contract_violation("action_offset: index out of range");
    return {index / kActionGrid - kActionRadius, index % kActionGrid - kActionRadius};
}

struct PassengerSnapshot {
    double pickup_time = 0.0;
    int destination = 0;
};

struct VehicleSnapshot {
    int id = 0;
    int zone = 0;
    int vacant_seats = 0;
    std::vector<PassengerSnapshot> passengers;
};

/// Per-zone predicted available-vehicle counts for steps 0..horizon
/// (cumulative: a vehicle predicted to free up by step k counts from k on).
struct AvailabilityForecast {
    int horizon = 0;  // rows = horizon + 1
    int zones = 0;
    std::vector<double> values;

    double at(int step, int zone) const { return values[static_cast<std::size_t>(step) * zones + zone]; }
    double& at(int step, int zone) { return values[static_cast<std::size_t>(step) * zones + zone]; }
};

/// (X_t, V, D): the state the policy sees.
struct EnvSnapshot {
    std::vector<VehicleSnapshot> vehicles;
    AvailabilityForecast availability;
    DemandForecast demand;
};

struct EncoderConfig {
    int steps_15 = 15;  // forecast steps covering 15 minutes
    int steps_30 = 30;
};

constexpr int kFeatureLength = 4 * kActionCount + 3;

/// Feature vector for one vehicle: 15x15 crops (out-of-grid cells zero) of
/// summed next-15-min demand, current availability, availability by +15 min
/// and by +30 min, then vacant seats and normalized position.
inline std::vector<double> encode_state(const EnvSnapshot& env, int vehicle_id,
                                        const GridMap& grid, const EncoderConfig& enc = {}) {
    const VehicleSnapshot* veh = nullptr;
    for (const auto& v : env.vehicles)
        if (v.id == vehicle_id) veh = &v;
    if (veh == nullptr) throw contract_violation("encode_state: unknown vehicle");
    if (veh->vacant_seats <= 0)
        throw contract_violation("encode_state: vehicle is not available (no vacant seat)");

    const int vr = grid.row_of(veh->zone);
    const int vc = grid.col_of(veh->zone);
    const int demand_steps = std::min(enc.steps_15, env.demand.horizon);
    const int avail15 = std::min(enc.steps_15, env.availability.horizon);
    const int avail30 = std::min(enc.steps_30, env.availability.horizon);

    std::vector<double> f;
    f.reserve(kFeatureLength);
    auto crop = [&](auto&& cell_value) {
        for (int dr = -kActionRadius; dr <= kActionRadius; ++dr)
            for (int dc = -kActionRadius; dc <= kActionRadius; ++dc) {
                const int r = vr + dr, c = vc + dc;
                f.push_back(grid.contains(r, c) ? cell_value(grid.id(r, c)) : 0.0);
            }
    };
    crop([&](int z) {
        double s = 0.0;
        for (int k = 0; k < demand_steps; ++k) s += env.demand.at(k, z);
        return s;
    });
    crop([&](int z) { return env.availability.at(0, z); });
    crop([&](int z) { return env.availability.at(avail15, z); });
    crop([&](int z) { return env.availability.at(avail30, z); });
    f.push_back(static_cast<double>(veh->vacant_seats));
    f.push_back(grid.rows > 1 ? static_cast<double>(vr) / (grid.rows - 1) : 0.0);
    f.push_back(grid.cols > 1 ? static_cast<double>(vc) / (grid.cols - 1) : 0.0);
    return f;
}

/// Valid actions for a vehicle at `zone`: offsets that stay on the grid.
/// `stay_only` restricts a committed vehicle to continuing its plan.
inline std::vector<int> valid_actions(const GridMap& grid, int zone, bool stay_only = false) {
    if (stay_only) return {kStayAction};
    std::vector<int> mask;
    mask.reserve(kActionCount);
    const int r = grid.row_of(zone), c = grid.col_of(zone);
    for (int dr = -kActionRadius; dr <= kActionRadius; ++dr)
        for (int dc = -kActionRadius; dc <= kActionRadius; ++dc)
            if (grid.contains(r + dr, c + dc)) mask.push_back(action_index(dr, dc));
    return mask;
}

/// Epsilon-greedy over the masked Q vector; greedy ties break to the lowest
/// index.
inline int select_action(std::span<const double> q, const std::vector<int>& mask, double epsilon,
                         Rng& rng) {
    if (mask.empty()) throw contract_violation("select_action: empty action mask");
    for (int a : mask)
        if (a < 0 || a >= static_cast<int>(q.size()))
            throw contract_violation("select_action: mask index out of range");
    if (rng.bernoulli(epsilon)) return mask[rng.uniform_int(mask.size())];
    int best = mask.front();
    for (int a : mask)
        if (q[a] > q[best]) best = a;
    return best;
}

struct TrainConfig {
    double discount = 0.99;       // eta
    double target_alpha = 0.9;    // target <- alpha*target + (1-alpha)*online
    double learning_rate = 1e-3;
    int batch_size = 32;
    double eps_start = 1.0;
    double eps_end = 0.05;
    int eps_decay_steps = 10000;
    std::size_t buffer_capacity = 50000;
    int target_interval = 50;      // decisions between soft updates
    int train_interval = 1;        // decisions between gradient steps
    double reward_scale = 0.01;    // applied to rewards entering the buffer
    double max_grad_norm = 10.0;   // global-norm clip; 0 disables
    std::vector<int> hidden = {256, 256};
    std::uint64_t seed = 0;

    double epsilon_at(std::int64_t decisions) const {
        if (eps_decay_steps <= 0) return eps_end;
        const double frac = std::min(1.0, static_cast<double>(decisions) / eps_decay_steps);
        return eps_start + (eps_end - eps_start) * frac;
    }
};

inline DenseNet make_qnetwork(int input_size, const std::vector<int>& hidden, std::uint64_t seed) {
    std::vector<int> sizes;
    sizes.push_back(input_size);
    for (int h : hidden) sizes.push_back(h);
    sizes.push_back(kActionCount);
    return DenseNet(sizes, seed);
}

inline std::vector<double> q_forward(const DenseNet& net, std::span<const double> features) {
    return net.forward(features);
}

/// Double-Q target: the online net picks the argmax, the target net scores it.
inline double double_q_target(const DenseNet& online, const DenseNet& target,
                              std::span<const double> next_state, double reward, bool terminal,
                              double discount) {
    if (terminal) return reward;
    const auto q_online = online.forward(next_state);
    int best = 0;
    for (int a = 1; a < static_cast<int>(q_online.size()); ++a)
        if (q_online[a] > q_online[best]) best = a;
    const auto q_target = target.forward(next_state);
    return reward + discount * q_target[best];
}

/// One SGD step on the mean squared TD error of the batch. Returns the loss
/// before the update.
inline double train_step(DenseNet& net, const DenseNet& target,
                         const std::vector<const Transition*>& batch, const TrainConfig& cfg) {
    if (batch.empty()) throw contract_violation("train_step: empty batch");
    if (!net.same_shape(target)) throw contract_violation("train_step: online/target shape mismatch");

    DenseNet::Gradients grads(net);
    double loss = 0.0;
    std::vector<double> state, next_state, out_grad(net.output_size(), 0.0);
    for (const Transition* t : batch) {
        state.assign(t->state.begin(), t->state.end());
        next_state.assign(t->next_state.begin(), t->next_state.end());
        const double y = double_q_target(net, target, next_state, t->reward, t->terminal,
                                         cfg.discount);
        if (t->action < 0 || t->action >= net.output_size())
            throw contract_violation("train_step: action index out of range");
        // forward once to get the TD error, then backprop d/dq of (q-y)^2 / B
        const auto q = net.forward(state);
        const double err = q[t->action] - y;
        loss += err * err;
        std::fill(out_grad.begin(), out_grad.end(), 0.0);
        out_grad[t->action] = 2.0 * err / static_cast<double>(batch.size());
        net.forward_backward(state, out_grad, grads);
    }
    loss /= static_cast<double>(batch.size());
    if (!std::isfinite(loss)) throw training_diverged("train_step: non-finite loss");
    if (cfg.max_grad_norm > 0.0) {
        double sq = 0.0;
        for (std::size_t li = 0; li < grads.w.size(); ++li) {
            for (double g : grads.w[li]) sq += g * g;
            for (double g : grads.b[li]) sq += g * g;
        }
        const double norm = std::sqrt(sq);
        if (norm > cfg.max_grad_norm) {
            const double scale = cfg.max_grad_norm / norm;
            for (std::size_t li = 0; li < grads.w.size(); ++li) {
                for (double& g : grads.w[li]) g *= scale;
                for (double& g : grads.b[li]) g *= scale;
            }
        }
    }
    net.apply_sgd(grads, cfg.learning_rate);
    if (!net.finite()) throw training_diverged("train_step: non-finite parameters after update");
    return loss;
}

/// target <- alpha*target + (1-alpha)*online, elementwise.
inline void sync_target(const DenseNet& net, DenseNet& target, double alpha) {
    if (!net.same_shape(target)) throw contract_violation("sync_target: shape mismatch");
    for (std::size_t li = 0; li < net.layers().size(); ++li) {
        const auto& src = net.layers()[li];
        auto& dst = target.layers()[li];
        for (std::size_t i = 0; i < src.w.size(); ++i)
            dst.w[i] = alpha * dst.w[i] + (1.0 - alpha) * src.w[i];
        for (std::size_t i = 0; i < src.b.size(); ++i)
            dst.b[i] = alpha * dst.b[i] + (1.0 - alpha) * src.b[i];
    }
}

struct Checkpoint {
    DenseNet net;
    std::int64_t train_steps = 0;
    std::string config_hash;
};

inline void save_checkpoint(const DenseNet& net, const std::string& path, std::int64_t train_steps,
                            const std::string& config_hash) {
    nlohmann::json j;
    j["kind"] = "mhrs-qnet";
    j["train_steps"] = train_steps;
    j["config_hash"] = config_hash;
    auto& layers = j["layers"] = nlohmann::json::array();
    for (const auto& l : net.layers()) {
        nlohmann::json lj;
        lj["in"] = l.in;
        lj["out"] = l.out;
        lj["relu"] = l.relu;
        lj["w"] = l.w;
        lj["b"] = l.b;
        layers.push_back(std::move(lj));
    }
    std::ofstream out(path);
    if (!out) throw io_error("save_checkpoint: cannot open " + path);
    out << j.dump() << "\n";
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("load_checkpoint: cannot open " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw format_error(std::string("load_checkpoint: bad json: ") + e.what());
    }
    if (j.value("kind", "") != "mhrs-qnet") throw format_error("load_checkpoint: wrong container kind");
    Checkpoint c;
    c.train_steps = j.value("train_steps", std::int64_t{0});
    c.config_hash = j.value("config_hash", "");
    int prev_out = -1;
    for (const auto& lj : j.at("layers")) {
        DenseNet::Layer l;
        l.in = lj.at("in").get<int>();
        l.out = lj.at("out").get<int>();
        l.relu = lj.at("relu").get<bool>();
        l.w = lj.at("w").get<std::vector<double>>();
        l.b = lj.at("b").get<std::vector<double>>();
        if (l.in <= 0 || l.out <= 0 || l.w.size() != static_cast<std::size_t>(l.in) * l.out ||
            l.b.size() != static_cast<std::size_t>(l.out))
            throw invalid_input("load_checkpoint: layer shape mismatch");
        if (prev_out >= 0 && l.in != prev_out)
            throw invalid_input("load_checkpoint: layer chain mismatch");
        prev_out = l.out;
        c.net.layers().push_back(std::move(l));
    }
    if (c.net.layers().empty()) throw invalid_input("load_checkpoint: no layers");
    return c;
}

}  // namespace mhrs
