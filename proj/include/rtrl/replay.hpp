#pragma once

#include "rtrl/common.hpp"

#include <vector>

namespace rtrl {

// One stored environment transition.
struct ReplayRecord {
    VectorXd obs;       // x_t (augmented obs in real-time envs)
    VectorXd action;    // emitted action
    double reward = 0;  // reward as stored (training scale applied by the caller)
    VectorXd next_obs;  // x_{t+1}
    bool terminal = false;
};

// Bounded circular store with uniform sampling.
class ReplayMemory {
  public:
    explicit ReplayMemory(std::size_t capacity) : capacity_(capacity) {
        if (capacity == 0) throw SpecError("ReplayMemory: zero capacity");
    }

    void push(ReplayRecord record) {
        if (records_.size() < capacity_) {
            records_.push_back(std::move(record));
        } else {
            records_[next_] = std::move(record);
        }
        next_ = (next_ + 1) % capacity_;
    }

    std::size_t size() const { return records_.size(); }
    const ReplayRecord& operator[](std::size_t i) const { return records_[i]; }

    const ReplayRecord& sample(Rng& rng) const {
        if (records_.empty()) throw SpecError("ReplayMemory: sampling from empty memory");
        std::uniform_int_distribution<std::size_t> dist(0, records_.size() - 1);
        return records_[dist(rng)];
    }

    std::vector<const ReplayRecord*> sample_batch(std::size_t n, Rng& rng) const {
        std::vector<const ReplayRecord*> batch(n);
        for (std::size_t i = 0; i < n; ++i) batch[i] = &sample(rng);
        return batch;
    }

  private:
    std::size_t capacity_;
    std::size_t next_ = 0;
    std::vector<ReplayRecord> records_;
};

}  // namespace rtrl
