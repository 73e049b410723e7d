#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "mhrs/errors.hpp"
#include "mhrs/rng.hpp"

namespace mhrs {

/// Fully connected network: rectifier hidden layers, linear output.
/// Plain loops, no threading; identical inputs give identical outputs.
class DenseNet {
public:
    struct Layer {
        int in = 0;
        int out = 0;
        bool relu = false;
        std::vector<double> w;  // row-major, out x in
        std::vector<double> b;  // out
    };

    DenseNet() = default;

    /// sizes = {input, hidden..., output}; hidden layers are rectified.
    DenseNet(const std::vector<int>& sizes, std::uint64_t seed) {
        if (sizes.size() < 2) throw invalid_config("DenseNet: need at least input and output sizes");
        Rng rng(seed);
        for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
            Layer l;
            l.in = sizes[i];
            l.out = sizes[i + 1];
            l.relu = (i + 2 < sizes.size());
            const double scale = std::sqrt(6.0 / (l.in + l.out));
            l.w.resize(static_cast<std::size_t>(l.in) * l.out);
            for (auto& v : l.w) v = (rng.uniform() * 2.0 - 1.0) * scale;
            l.b.assign(l.out, 0.0);
            layers_.push_back(std::move(l));
        }
    }

    std::vector<Layer>& layers() { return layers_; }
    const std::vector<Layer>& layers() const { return layers_; }
    int input_size() const { return layers_.front().in; }
    int output_size() const { return layers_.back().out; }

    std::vector<double> forward(std::span<const double> x) const {
        if (static_cast<int>(x.size()) != input_size())
            throw contract_violation("DenseNet::forward: input size mismatch");
        std::vector<double> cur(x.begin(), x.end());
        std::vector<double> next;
        for (const auto& l : layers_) {
            next.assign(l.out, 0.0);
            for (int o = 0; o < l.out; ++o) {
                double acc = l.b[o];
                const double* wrow = &l.w[static_cast<std::size_t>(o) * l.in];
                for (int i = 0; i < l.in; ++i) acc += wrow[i] * cur[i];
                next[o] = (l.relu && acc < 0.0) ? 0.0 : acc;
            }
            cur.swap(next);
        }
        return cur;
    }

    /// Parameter gradients, same shapes as the layers.
    struct Gradients {
        std::vector<std::vector<double>> w;
        std::vector<std::vector<double>> b;

        explicit Gradients(const DenseNet& net) {
            for (const auto& l : net.layers_) {
                w.emplace_back(l.w.size(), 0.0);
                b.emplace_back(l.b.size(), 0.0);
            }
        }
    };

    /// Forward with activations kept, then backprop of `out_grad` (dLoss/dy).
    /// Accumulates into `g` so batches can share one gradient buffer.
    /// Returns the network output.
    std::vector<double> forward_backward(std::span<const double> x,
                                         std::span<const double> out_grad,
                                         Gradients& g) const {
        if (static_cast<int>(x.size()) != input_size())
            throw contract_violation("DenseNet::forward_backward: input size mismatch");
        std::vector<std::vector<double>> acts;  // post-activation, acts[0] = input
        acts.emplace_back(x.begin(), x.end());
        for (const auto& l : layers_) {
            std::vector<double> next(l.out, 0.0);
            const auto& cur = acts.back();
            for (int o = 0; o < l.out; ++o) {
                double acc = l.b[o];
                const double* wrow = &l.w[static_cast<std::size_t>(o) * l.in];
                for (int i = 0; i < l.in; ++i) acc += wrow[i] * cur[i];
                next[o] = (l.relu && acc < 0.0) ? 0.0 : acc;
            }
            acts.push_back(std::move(next));
        }
        if (out_grad.size() != acts.back().size())
            throw contract_violation("DenseNet::forward_backward: output grad size mismatch");

        std::vector<double> delta(out_grad.begin(), out_grad.end());
        for (int li = static_cast<int>(layers_.size()) - 1; li >= 0; --li) {
            const auto& l = layers_[li];
            const auto& below = acts[li];
            const auto& above = acts[li + 1];
            // relu: zero where the unit was clipped (post-activation == 0)
            if (l.relu)
                for (int o = 0; o < l.out; ++o)
                    if (above[o] <= 0.0) delta[o] = 0.0;
            auto& gw = g.w[li];
            auto& gb = g.b[li];
            std::vector<double> prev_delta(l.in, 0.0);
            for (int o = 0; o < l.out; ++o) {
                const double d = delta[o];
                gb[o] += d;
                double* gwrow = &gw[static_cast<std::size_t>(o) * l.in];
                const double* wrow = &l.w[static_cast<std::size_t>(o) * l.in];
                for (int i = 0; i < l.in; ++i) {
                    gwrow[i] += d * below[i];
                    prev_delta[i] += d * wrow[i];
                }
            }
            delta.swap(prev_delta);
        }
        return acts.back();
    }

    void apply_sgd(const Gradients& g, double lr) {
        for (std::size_t li = 0; li < layers_.size(); ++li) {
            auto& l = layers_[li];
            for (std::size_t i = 0; i < l.w.size(); ++i) l.w[i] -= lr * g.w[li][i];
            for (std::size_t i = 0; i < l.b.size(); ++i) l.b[i] -= lr * g.b[li][i];
        }
    }

    bool finite() const {
        for (const auto& l : layers_) {
            for (double v : l.w)
                if (!std::isfinite(v)) return false;
            for (double v : l.b)
                if (!std::isfinite(v)) return false;
        }
        return true;
    }

    bool same_shape(const DenseNet& other) const {
        if (layers_.size() != other.layers_.size()) return false;
        for (std::size_t i = 0; i < layers_.size(); ++i)
            if (layers_[i].in != other.layers_[i].in || layers_[i].out != other.layers_[i].out ||
                layers_[i].relu != other.layers_[i].relu)
                return false;
        return true;
    }

private:
    std::vector<Layer> layers_;
};

}  // namespace mhrs
