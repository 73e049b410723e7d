#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "mhrs/errors.hpp"
#include "mhrs/rng.hpp"

namespace mhrs {

struct Transition {
    std::vector<float> state;
    int action = 0;
    double reward = 0.0;
    std::vector<float> next_state;
    bool terminal = false;
};

/// Ring buffer with FIFO eviction and uniform seeded sampling.
class ReplayBuffer {
public:
    explicit ReplayBuffer(std::size_t capacity, std::uint64_t seed = 0)
        : capacity_(capacity), rng_(seed) {
        if (capacity == 0) throw invalid_config("ReplayBuffer: capacity must be positive");
    }

    std::size_t size() const { return items_.size(); }
    std::size_t capacity() const { return capacity_; }

    void push(Transition t) {
        if (items_.size() < capacity_) {
            items_.push_back(std::move(t));
        } else {
            items_[write_] = std::move(t);
        }
        write_ = (write_ + 1) % capacity_;
    }

    const Transition& at(std::size_t i) const { return items_[i]; }

    std::vector<const Transition*> sample(std::size_t batch) {
        if (batch == 0 || items_.size() < batch)
            throw contract_violation("ReplayBuffer::sample: batch larger than buffer");
        std::vector<const Transition*> out;
        out.reserve(batch);
        for (std::size_t i = 0; i < batch; ++i)
            out.push_back(&items_[rng_.uniform_int(items_.size())]);
        return out;
    }

private:
    std::size_t capacity_;
    std::size_t write_ = 0;
    std::vector<Transition> items_;
    Rng rng_;
};

inline void push_transition(ReplayBuffer& buf, Transition t) { buf.push(std::move(t)); }

}  // namespace mhrs
