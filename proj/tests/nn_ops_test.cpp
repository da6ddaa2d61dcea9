#include <doctest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "usbone/nn/adam.hpp"
#include "usbone/nn/ops.hpp"
#include "usbone/rng.hpp"

using namespace usbone;
using nn::Tape;
using nn::TensorPtr;

namespace {

TensorPtr rand_tensor(int n, int c, int h, int w, std::uint64_t seed, double lo = -1.0,
                      double hi = 1.0, bool requires_grad = true) {
    auto t = nn::Tensor::create(n, c, h, w, requires_grad);
    rng::Engine eng(seed);
    for (auto& v : t->v) v = lo + (hi - lo) * eng.next_double();
    return t;
}

// Compares tape gradients of loss = sum(w .* f()) against central
// differences for every element of every tensor in `wrt`.
void check_grad(const std::function<TensorPtr(Tape*)>& fwd, const std::vector<TensorPtr>& wrt,
                std::uint64_t seed, double rel = 1e-4, double floor = 1e-7) {
    Tape tape;
    const TensorPtr out = fwd(&tape);
    REQUIRE(out->requires_grad);

    std::vector<double> w(out->size());
    rng::Engine eng(seed ^ 0x9e3779b97f4a7c15ull);
    for (auto& v : w) v = eng.next_double() - 0.5;

    for (const auto& p : wrt) p->zero_grad();
    out->g = w;
    tape.backward();

    const auto loss = [&] {
        const TensorPtr y = fwd(nullptr);
        double s = 0.0;
        for (size_t i = 0; i < y->v.size(); ++i) s += y->v[i] * w[i];
        return s;
    };

    for (const auto& p : wrt) {
        for (size_t i = 0; i < p->v.size(); ++i) {
            const double keep = p->v[i];
            const double h = 1e-5 * std::max(1.0, std::abs(keep));
            p->v[i] = keep + h;
            const double up = loss();
            p->v[i] = keep - h;
            const double dn = loss();
            p->v[i] = keep;
            const double num = (up - dn) / (2.0 * h);
            const double ana = p->g[i];
            const double tol = std::max(floor, rel * std::max(std::abs(num), std::abs(ana)));
            CHECK(std::abs(num - ana) <= tol);
        }
    }
}

}  // namespace

TEST_CASE("conv2d gradients, stride 1") {
    auto x = rand_tensor(2, 2, 5, 6, 1);
    auto w = rand_tensor(3, 2, 3, 3, 2, -0.5, 0.5);
    auto b = rand_tensor(1, 3, 1, 1, 3, -0.2, 0.2);
    check_grad([&](Tape* t) { return nn::conv2d(t, x, w, b, 1, 1); }, {x, w, b}, 10);
}

TEST_CASE("conv2d gradients, stride 2") {
    auto x = rand_tensor(1, 2, 5, 5, 4);
    auto w = rand_tensor(4, 2, 3, 3, 5, -0.5, 0.5);
    auto b = rand_tensor(1, 4, 1, 1, 6, -0.2, 0.2);
    auto y = nn::conv2d(nullptr, x, w, b, 2, 1);
    CHECK(y->h == 3);
    CHECK(y->w == 3);
    check_grad([&](Tape* t) { return nn::conv2d(t, x, w, b, 2, 1); }, {x, w, b}, 11);
}

TEST_CASE("conv2d gradients, 1x1 kernel") {
    auto x = rand_tensor(2, 3, 4, 4, 7);
    auto w = rand_tensor(5, 3, 1, 1, 8, -0.5, 0.5);
    auto b = rand_tensor(1, 5, 1, 1, 9, -0.2, 0.2);
    check_grad([&](Tape* t) { return nn::conv2d(t, x, w, b, 1, 0); }, {x, w, b}, 12);
}

TEST_CASE("conv2d forward oracle on a hand case") {
    // 1x1 input channel, one 3x3 all-ones kernel: output = local sum + bias
    auto x = nn::Tensor::create(1, 1, 3, 3);
    for (int i = 0; i < 9; ++i) x->v[i] = i + 1;
    auto w = nn::Tensor::create(1, 1, 3, 3);
    std::fill(w->v.begin(), w->v.end(), 1.0);
    auto b = nn::Tensor::create(1, 1, 1, 1);
    b->v[0] = 0.5;
    auto y = nn::conv2d(nullptr, x, w, b, 1, 1);
    CHECK(y->at(0, 0, 1, 1) == doctest::Approx(45.0 + 0.5));  // full window
    CHECK(y->at(0, 0, 0, 0) == doctest::Approx(1 + 2 + 4 + 5 + 0.5));
}

TEST_CASE("batchnorm training gradients and running stat update") {
    auto x = rand_tensor(3, 2, 4, 4, 13);
    auto gamma = rand_tensor(1, 2, 1, 1, 14, 0.5, 1.5);
    auto beta = rand_tensor(1, 2, 1, 1, 15, -0.3, 0.3);
    auto rm = nn::Tensor::create(1, 2, 1, 1);
    auto rv = nn::Tensor::create(1, 2, 1, 1);
    std::fill(rv->v.begin(), rv->v.end(), 1.0);

    check_grad([&](Tape* t) { return nn::batchnorm(t, x, gamma, beta, rm, rv, true); },
               {x, gamma, beta}, 16);

    // fresh stats, one pass: running = 0.9*old + 0.1*batch, variance unbiased
    std::fill(rm->v.begin(), rm->v.end(), 0.0);
    std::fill(rv->v.begin(), rv->v.end(), 1.0);
    nn::batchnorm(nullptr, x, gamma, beta, rm, rv, true);
    const int per_channel = 3 * 4 * 4;
    for (int ch = 0; ch < 2; ++ch) {
        double mean = 0.0;
        for (int n = 0; n < 3; ++n)
            for (int i = 0; i < 16; ++i) mean += x->at(n, ch, i / 4, i % 4);
        mean /= per_channel;
        double ss = 0.0;
        for (int n = 0; n < 3; ++n)
            for (int i = 0; i < 16; ++i) {
                const double d = x->at(n, ch, i / 4, i % 4) - mean;
                ss += d * d;
            }
        CHECK(rm->v[ch] == doctest::Approx(0.1 * mean).epsilon(1e-12));
        CHECK(rv->v[ch] == doctest::Approx(0.9 + 0.1 * ss / (per_channel - 1)).epsilon(1e-12));
    }
}

TEST_CASE("batchnorm eval uses running stats verbatim") {
    auto x = rand_tensor(2, 2, 3, 3, 17);
    auto gamma = rand_tensor(1, 2, 1, 1, 18, 0.5, 1.5);
    auto beta = rand_tensor(1, 2, 1, 1, 19, -0.3, 0.3);
    auto rm = rand_tensor(1, 2, 1, 1, 20, -0.2, 0.2, false);
    auto rv = rand_tensor(1, 2, 1, 1, 21, 0.5, 1.5, false);
    const auto rm_before = rm->v;
    const auto rv_before = rv->v;

    auto y = nn::batchnorm(nullptr, x, gamma, beta, rm, rv, false);
    for (int n = 0; n < 2; ++n) {
        for (int ch = 0; ch < 2; ++ch) {
            for (int i = 0; i < 9; ++i) {
                const double want = gamma->v[ch] * (x->at(n, ch, i / 3, i % 3) - rm->v[ch]) /
                                        std::sqrt(rv->v[ch] + 1e-5) +
                                    beta->v[ch];
                CHECK(y->at(n, ch, i / 3, i % 3) == doctest::Approx(want).epsilon(1e-12));
            }
        }
    }
    CHECK(rm->v == rm_before);  // eval never touches the stats
    CHECK(rv->v == rv_before);

    check_grad([&](Tape* t) { return nn::batchnorm(t, x, gamma, beta, rm, rv, false); },
               {x, gamma, beta}, 22);
}

TEST_CASE("relu and sigmoid gradients") {
    auto x = rand_tensor(2, 3, 4, 4, 23);
    for (auto& v : x->v) {
        if (std::abs(v) < 0.05) v = 0.1;  // keep clear of the relu kink
    }
    check_grad([&](Tape* t) { return nn::relu(t, x); }, {x}, 24);
    check_grad([&](Tape* t) { return nn::sigmoid(t, x); }, {x}, 25);

    auto y = nn::relu(nullptr, x);
    for (size_t i = 0; i < x->v.size(); ++i) CHECK(y->v[i] == std::max(0.0, x->v[i]));
    auto s = nn::sigmoid(nullptr, x);
    for (size_t i = 0; i < x->v.size(); ++i) {
        CHECK(s->v[i] == doctest::Approx(1.0 / (1.0 + std::exp(-x->v[i]))).epsilon(1e-12));
    }
}

TEST_CASE("nearest upsampling doubles each pixel into a 2x2 block") {
    auto x = rand_tensor(2, 2, 3, 4, 26);
    auto y = nn::upsample_nearest2x(nullptr, x);
    REQUIRE(y->h == 6);
    REQUIRE(y->w == 8);
    for (int n = 0; n < 2; ++n)
        for (int c = 0; c < 2; ++c)
            for (int r = 0; r < 6; ++r)
                for (int col = 0; col < 8; ++col)
                    CHECK(y->at(n, c, r, col) == x->at(n, c, r / 2, col / 2));
    check_grad([&](Tape* t) { return nn::upsample_nearest2x(t, x); }, {x}, 27);
}

TEST_CASE("spatial softmax finds hot cells and centers uniform maps") {
    auto x = nn::Tensor::create(1, 2, 4, 4, true);
    std::fill(x->v.begin(), x->v.end(), 0.0);
    x->at(0, 0, 1, 2) = 30.0;  // overwhelming logit

    auto coords = nn::spatial_softmax_coords(nullptr, x);
    REQUIRE(coords->n == 1);
    REQUIRE(coords->c == 2);
    REQUIRE(coords->h == 2);
    REQUIRE(coords->w == 1);
    // grid spans [-1,1]: row 1 of 4 -> -1/3, col 2 of 4 -> 1/3
    CHECK(coords->at(0, 0, 0, 0) == doctest::Approx(-1.0 / 3).epsilon(1e-9));
    CHECK(coords->at(0, 0, 1, 0) == doctest::Approx(1.0 / 3).epsilon(1e-9));
    // uniform channel averages to the center
    CHECK(coords->at(0, 1, 0, 0) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(coords->at(0, 1, 1, 0) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("spatial softmax gradients") {
    auto x = rand_tensor(2, 3, 4, 5, 28, -2.0, 2.0);
    check_grad([&](Tape* t) { return nn::spatial_softmax_coords(t, x); }, {x}, 29);
}

TEST_CASE("gaussian rendering peaks at one on the keypoint") {
    auto coords = nn::Tensor::create(1, 1, 2, 1, true);
    // exactly on grid node (2,5) of an 8x8 map
    coords->v[0] = 2.0 * 2 / 7 - 1.0;
    coords->v[1] = 2.0 * 5 / 7 - 1.0;
    auto heat = nn::render_gaussians(nullptr, coords, 8, 8, 0.1);
    CHECK(heat->at(0, 0, 2, 5) == 1.0);
    for (int r = 0; r < 8; ++r)
        for (int c = 0; c < 8; ++c) CHECK(heat->at(0, 0, r, c) <= 1.0);

    auto free = rand_tensor(2, 3, 2, 1, 30, -0.8, 0.8);
    check_grad([&](Tape* t) { return nn::render_gaussians(t, free, 6, 7, 0.25); }, {free}, 31);
}

TEST_CASE("heatmap union composes probabilities") {
    auto h = nn::Tensor::create(1, 2, 1, 1, true);
    h->v = {0.3, 0.5};
    auto u = nn::combine_heatmaps(nullptr, h);
    REQUIRE(u->c == 1);
    CHECK(u->v[0] == doctest::Approx(1.0 - 0.7 * 0.5).epsilon(1e-12));

    auto maps = rand_tensor(2, 3, 3, 4, 32, 0.05, 0.95);
    check_grad([&](Tape* t) { return nn::combine_heatmaps(t, maps); }, {maps}, 33);
}

TEST_CASE("transport identities hold exactly") {
    auto psi_s = rand_tensor(2, 5, 6, 7, 34, -1.0, 1.0, false);
    auto psi_t = rand_tensor(2, 5, 6, 7, 35, -1.0, 1.0, false);
    auto zeros = nn::Tensor::create(2, 1, 6, 7);
    auto ones = nn::Tensor::create(2, 1, 6, 7);
    std::fill(ones->v.begin(), ones->v.end(), 1.0);

    auto same = nn::transport(nullptr, psi_s, psi_t, zeros, zeros);
    CHECK(same->v == psi_s->v);  // nothing erased, nothing written

    auto swapped = nn::transport(nullptr, psi_s, psi_t, zeros, ones);
    CHECK(swapped->v == psi_t->v);  // target fully transported

    auto erased = nn::transport(nullptr, psi_s, psi_t, ones, zeros);
    for (double v : erased->v) CHECK(v == 0.0);  // source erased, nothing written
}

TEST_CASE("transport gradients reach only the target paths") {
    auto psi_s = rand_tensor(1, 3, 4, 5, 36);
    auto psi_t = rand_tensor(1, 3, 4, 5, 37);
    auto hs = rand_tensor(1, 1, 4, 5, 38, 0.1, 0.9);
    auto ht = rand_tensor(1, 1, 4, 5, 39, 0.1, 0.9);

    check_grad([&](Tape* t) { return nn::transport(t, psi_s, psi_t, hs, ht); }, {psi_t, ht}, 40);

    Tape tape;
    auto out = nn::transport(&tape, psi_s, psi_t, hs, ht);
    psi_s->zero_grad();
    hs->zero_grad();
    std::fill(out->g.begin(), out->g.end(), 1.0);
    tape.backward();
    for (double g : psi_s->g) CHECK(g == 0.0);
    for (double g : hs->g) CHECK(g == 0.0);
}

TEST_CASE("mse matches its closed form") {
    auto a = rand_tensor(2, 2, 3, 3, 41);
    auto b = rand_tensor(2, 2, 3, 3, 42);
    auto l = nn::mse_loss(nullptr, a, b);
    double want = 0.0;
    for (size_t i = 0; i < a->v.size(); ++i) want += (a->v[i] - b->v[i]) * (a->v[i] - b->v[i]);
    want /= static_cast<double>(a->v.size());
    CHECK(l->v[0] == doctest::Approx(want).epsilon(1e-12));
    check_grad([&](Tape* t) { return nn::mse_loss(t, a, b); }, {a}, 43);
}

TEST_CASE("gradients flow through a composite graph") {
    auto x = rand_tensor(2, 2, 6, 6, 44, -1.0, 1.0, false);
    auto w = rand_tensor(3, 2, 3, 3, 45, -0.5, 0.5);
    auto b = rand_tensor(1, 3, 1, 1, 46, -0.2, 0.2);
    auto gamma = rand_tensor(1, 3, 1, 1, 47, 0.8, 1.2);
    auto beta = rand_tensor(1, 3, 1, 1, 48, -0.1, 0.1);
    auto rm = nn::Tensor::create(1, 3, 1, 1);
    auto rv = nn::Tensor::create(1, 3, 1, 1);
    std::fill(rv->v.begin(), rv->v.end(), 1.0);
    auto target = rand_tensor(2, 3, 12, 12, 49, 0.0, 1.0, false);

    check_grad(
        [&](Tape* t) {
            auto y = nn::conv2d(t, x, w, b, 1, 1);
            y = nn::batchnorm(t, y, gamma, beta, rm, rv, true);
            y = nn::relu(t, y);
            y = nn::upsample_nearest2x(t, y);
            return nn::mse_loss(t, nn::sigmoid(t, y), target);
        },
        {w, b, gamma, beta}, 50);
}

TEST_CASE("detach copies values and blocks gradient") {
    auto x = rand_tensor(1, 2, 2, 2, 51);
    auto d = nn::detach(x);
    CHECK(d->v == x->v);
    CHECK_FALSE(d->requires_grad);
}

TEST_CASE("adam first steps match the closed form") {
    auto p = nn::Tensor::create(1, 1, 1, 1, true);
    p->v[0] = 1.0;
    nn::Adam opt({p});

    p->g[0] = 0.5;
    opt.step(0.001);
    // t=1: mhat = g, vhat = g^2 -> update = lr * g / (|g| + eps)
    const double want1 = 1.0 - 0.001 * 0.5 / (0.5 + 1e-8);
    CHECK(p->v[0] == doctest::Approx(want1).epsilon(1e-14));

    p->g[0] = 0.25;
    opt.step(0.001);
    const double m = 0.9 * (0.1 * 0.5) + 0.1 * 0.25;
    const double v = 0.999 * (0.001 * 0.25) + 0.001 * 0.0625;
    const double mh = m / (1.0 - 0.9 * 0.9);
    const double vh = v / (1.0 - 0.999 * 0.999);
    const double want2 = want1 - 0.001 * mh / (std::sqrt(vh) + 1e-8);
    CHECK(p->v[0] == doctest::Approx(want2).epsilon(1e-12));
    CHECK(opt.steps_taken() == 2);
}
