#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "l2r/tensor.hpp"

namespace l2r::test {

// central finite differences against the analytic gradient of a scalar loss
struct GradCheck {
    double max_rel_err = 0.0;
    double step = 1e-6;
    double tol = 1e-4;

    // loss_fn must rebuild the graph from the current leaf values each call
    bool check(const std::vector<TensorPtr>& leaves,
               const std::function<TensorPtr()>& loss_fn) {
        Tape tape;
        for (auto& p : leaves) p->zero_grad();
        double base;
        {
            TapeScope scope(tape);
            auto loss = loss_fn();
            base = loss->item();
            backward(tape, loss);
            tape.clear();
        }
        (void)base;
        for (auto& p : leaves) {
            for (size_t i = 0; i < p->data.size(); ++i) {
                double saved = p->data[i];
                p->data[i] = saved + step;
                double up = loss_fn()->item();
                p->data[i] = saved - step;
                double down = loss_fn()->item();
                p->data[i] = saved;
                double numeric = (up - down) / (2.0 * step);
                double analytic = p->grad.empty() ? 0.0 : p->grad[i];
                double denom = std::max({std::abs(numeric), std::abs(analytic), 1e-3});
                max_rel_err = std::max(max_rel_err, std::abs(numeric - analytic) / denom);
            }
        }
        return max_rel_err < tol;
    }
};

inline TensorPtr random_tensor(std::vector<int> shape, Rng& rng, bool requires_grad = true) {
    auto t = Tensor::create(std::move(shape), requires_grad);
    for (auto& v : t->data) v = rng.normal();
    return t;
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double m = 0.0;
    for (size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

}  // namespace l2r::test
