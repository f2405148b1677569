#include "l2r/optim.hpp"

#include <cmath>

namespace l2r {

AdamW::AdamW(std::vector<TensorPtr> params, Options opt)
    : params_(std::move(params)), opt_(opt) {}

void AdamW::step() {
    ++t_;
    double bc1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
    double bc2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
    for (auto& p : params_) {
        if (p->grad.empty())
            throw ContractError("AdamW::step: parameter has no grad " + p->shape_str());
        auto& st = state_[p.get()];
        if (st.m.empty()) {
            st.m.assign(p->data.size(), 0.0);
            st.v.assign(p->data.size(), 0.0);
        }
        for (size_t i = 0; i < p->data.size(); ++i) {
            double g = p->grad[i];
            st.m[i] = opt_.beta1 * st.m[i] + (1.0 - opt_.beta1) * g;
            st.v[i] = opt_.beta2 * st.v[i] + (1.0 - opt_.beta2) * g * g;
            double mhat = st.m[i] / bc1;
            double vhat = st.v[i] / bc2;
            p->data[i] -= opt_.lr * (mhat / (std::sqrt(vhat) + opt_.eps) +
                                     opt_.weight_decay * p->data[i]);
        }
    }
}

void AdamW::zero_grad() {
    for (auto& p : params_) p->zero_grad();
}

}  // namespace l2r
