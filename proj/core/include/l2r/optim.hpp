#pragma once

#include <unordered_map>
#include <vector>

#include "l2r/tensor.hpp"

namespace l2r {

// Decoupled weight decay Adam. Optimizer state persists across steps and is
// keyed by parameter identity.
class AdamW {
public:
    struct Options {
        double lr = 3e-4;
        double beta1 = 0.9;
        double beta2 = 0.999;
        double eps = 1e-8;
        double weight_decay = 0.0;
    };

    AdamW(std::vector<TensorPtr> params, Options opt);

    // applies one update using each param's accumulated grad; ContractError if
    // any param has no grad
    void step();
    void zero_grad();

    void set_lr(double lr) { opt_.lr = lr; }
    double lr() const { return opt_.lr; }
    const std::vector<TensorPtr>& params() const { return params_; }

private:
    struct State {
        std::vector<double> m, v;
    };
    std::vector<TensorPtr> params_;
    Options opt_;
    std::unordered_map<Tensor*, State> state_;
    int64_t t_ = 0;
};

// Linear warmup to the base rate, then linear decay to zero at total_steps.
class LinearWarmupSchedule {
public:
    LinearWarmupSchedule(double base_lr, int64_t warmup_steps, int64_t total_steps)
        : base_lr_(base_lr), warmup_(warmup_steps), total_(total_steps) {}

    double lr_at(int64_t step) const {
        if (warmup_ > 0 && step < warmup_) return base_lr_ * static_cast<double>(step + 1) / warmup_;
        if (total_ <= warmup_) return base_lr_;
        double frac = static_cast<double>(total_ - step) / static_cast<double>(total_ - warmup_);
        return base_lr_ * (frac < 0.0 ? 0.0 : frac);
    }

    int64_t warmup_steps() const { return warmup_; }

private:
    double base_lr_;
    int64_t warmup_, total_;
};

}  // namespace l2r
