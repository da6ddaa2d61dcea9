#include "usbone/nn/tensor.hpp"

#include <algorithm>

namespace usbone::nn {

TensorPtr Tensor::create(int n, int c, int h, int w, bool requires_grad) {
    auto t = std::make_shared<Tensor>();
    t->n = n;
    t->c = c;
    t->h = h;
    t->w = w;
    t->v.assign(static_cast<size_t>(n) * c * h * w, 0.0);
    t->requires_grad = requires_grad;
    if (requires_grad) t->g.assign(t->v.size(), 0.0);
    return t;
}

TensorPtr detach(const TensorPtr& x) {
    auto t = std::make_shared<Tensor>();
    t->n = x->n;
    t->c = x->c;
    t->h = x->h;
    t->w = x->w;
    t->v = x->v;
    t->requires_grad = false;
    return t;
}

}  // namespace usbone::nn
