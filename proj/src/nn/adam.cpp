#include "usbone/nn/adam.hpp"

#include <cmath>

namespace usbone::nn {

Adam::Adam(std::vector<TensorPtr> params, double beta1, double beta2, double eps)
    : params_(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(eps) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const auto& p : params_) {
        m_.emplace_back(p->size(), 0.0);
        v_.emplace_back(p->size(), 0.0);
    }
}

void Adam::step(double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (size_t pi = 0; pi < params_.size(); ++pi) {
        auto& p = *params_[pi];
        auto& m = m_[pi];
        auto& v = v_[pi];
        for (size_t i = 0; i < p.v.size(); ++i) {
            const double g = p.g[i];
            m[i] = beta1_ * m[i] + (1.0 - beta1_) * g;
            v[i] = beta2_ * v[i] + (1.0 - beta2_) * g * g;
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            p.v[i] -= lr * mhat / (std::sqrt(vhat) + eps_);
        }
    }
}

double scheduled_lr(double base, double decay, int every, int epoch) {
    return base * std::pow(decay, static_cast<double>(epoch / every));
}

}  // namespace usbone::nn
