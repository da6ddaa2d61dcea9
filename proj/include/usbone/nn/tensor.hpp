#pragma once

#include <functional>
#include <memory>
#include <vector>

namespace usbone::nn {

// Dense 4D tensor (batch, channels, height, width) with an optional
// gradient buffer. Gradients accumulate; callers zero them between steps.
struct Tensor {
    int n = 1, c = 1, h = 1, w = 1;
    std::vector<double> v;
    std::vector<double> g;
    bool requires_grad = false;

    static std::shared_ptr<Tensor> create(int n, int c, int h, int w, bool requires_grad = false);

    size_t size() const { return static_cast<size_t>(n) * c * h * w; }
    size_t plane() const { return static_cast<size_t>(h) * w; }

    double& at(int in, int ic, int iy, int ix) {
        return v[((static_cast<size_t>(in) * c + ic) * h + iy) * w + ix];
    }
    double at(int in, int ic, int iy, int ix) const {
        return v[((static_cast<size_t>(in) * c + ic) * h + iy) * w + ix];
    }

    void zero_grad() { std::fill(g.begin(), g.end(), 0.0); }
};

using TensorPtr = std::shared_ptr<Tensor>;

// Reverse-mode tape: ops push backward closures during the forward pass;
// backward() runs them last-to-first. A null Tape* means inference (no
// closures, outputs carry no grad).
class Tape {
public:
    void push(std::function<void()> node) { nodes_.push_back(std::move(node)); }
    void backward() {
        for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
    }
    void clear() { nodes_.clear(); }
    size_t size() const { return nodes_.size(); }

private:
    std::vector<std::function<void()>> nodes_;
};

// Value copy that drops gradient tracking.
TensorPtr detach(const TensorPtr& x);

}  // namespace usbone::nn
