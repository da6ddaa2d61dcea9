#pragma once

#include <vector>

#include "usbone/nn/tensor.hpp"

namespace usbone::nn {

// Adam with bias correction. State rows align with the parameter list given
// at construction; step() consumes the current gradients.
class Adam {
public:
    explicit Adam(std::vector<TensorPtr> params, double beta1 = 0.9, double beta2 = 0.999,
                  double eps = 1e-8);

    void step(double lr);
    long long steps_taken() const { return t_; }

private:
    std::vector<TensorPtr> params_;
    std::vector<std::vector<double>> m_, v_;
    double beta1_, beta2_, eps_;
    long long t_ = 0;
};

// lr(epoch) = base * decay^(epoch / every), integer division.
double scheduled_lr(double base, double decay, int every, int epoch);

}  // namespace usbone::nn
