#include <doctest.h>

#include <cmath>
#include <complex>
#include <vector>

#include "usbone/fft.hpp"
#include "usbone/rng.hpp"

using namespace usbone;

namespace {

std::vector<std::complex<double>> random_grid(int h, int w, std::uint64_t seed) {
    rng::Engine eng(seed);
    std::vector<std::complex<double>> z(static_cast<size_t>(h) * w);
    for (auto& v : z) v = {eng.next_double() - 0.5, 0.0};
    return z;
}

}  // namespace

TEST_CASE("forward then inverse recovers the input") {
    const int h = 24, w = 40;  // non-pow2 on purpose
    const auto orig = random_grid(h, w, 3);
    auto z = orig;
    fft::forward2d(h, w, z.data());
    fft::inverse2d(h, w, z.data());
    for (size_t i = 0; i < z.size(); ++i) {
        CHECK(std::abs(z[i].real() - orig[i].real()) < 1e-12);
        CHECK(std::abs(z[i].imag()) < 1e-12);
    }
}

TEST_CASE("dc bin carries the grid sum and parseval holds") {
    const int h = 16, w = 16;
    auto z = random_grid(h, w, 7);
    double sum = 0.0, spatial_energy = 0.0;
    for (const auto& v : z) {
        sum += v.real();
        spatial_energy += std::norm(v);
    }
    fft::forward2d(h, w, z.data());
    CHECK(z[0].real() == doctest::Approx(sum).epsilon(1e-12));
    CHECK(std::abs(z[0].imag()) < 1e-12);
    double freq_energy = 0.0;
    for (const auto& v : z) freq_energy += std::norm(v);
    CHECK(freq_energy / (h * w) == doctest::Approx(spatial_energy).epsilon(1e-12));
}

TEST_CASE("unit impulse spreads flat across the spectrum") {
    const int n = 8;
    std::vector<std::complex<double>> z(n * n, 0.0);
    z[0] = 1.0;
    fft::forward2d(n, n, z.data());
    for (const auto& v : z) {
        CHECK(v.real() == doctest::Approx(1.0).epsilon(1e-13));
        CHECK(std::abs(v.imag()) < 1e-13);
    }
}

TEST_CASE("frequency bins follow the wraparound convention") {
    CHECK(fft::freq_bin(0, 8) == 0.0);
    CHECK(fft::freq_bin(1, 8) == doctest::Approx(1.0 / 8));
    CHECK(fft::freq_bin(3, 8) == doctest::Approx(3.0 / 8));
    CHECK(fft::freq_bin(4, 8) == doctest::Approx(-0.5));  // Nyquist goes negative
    CHECK(fft::freq_bin(5, 8) == doctest::Approx(-3.0 / 8));
    CHECK(fft::freq_bin(7, 8) == doctest::Approx(-1.0 / 8));
    CHECK(fft::freq_bin(3, 7) == doctest::Approx(3.0 / 7));
    CHECK(fft::freq_bin(4, 7) == doctest::Approx(-3.0 / 7));
}

TEST_CASE("next power of two") {
    CHECK(fft::next_pow2(1) == 1);
    CHECK(fft::next_pow2(2) == 2);
    CHECK(fft::next_pow2(3) == 4);
    CHECK(fft::next_pow2(64) == 64);
    CHECK(fft::next_pow2(65) == 128);
    CHECK(fft::next_pow2(255) == 256);
}

TEST_CASE("pure tone lands on exactly one conjugate bin pair") {
    const int n = 32;
    std::vector<std::complex<double>> z(n * n);
    for (int r = 0; r < n; ++r) {
        for (int c = 0; c < n; ++c) {
            z[static_cast<size_t>(r) * n + c] = std::cos(2.0 * M_PI * 3.0 * c / n);
        }
    }
    fft::forward2d(n, n, z.data());
    for (int r = 0; r < n; ++r) {
        for (int c = 0; c < n; ++c) {
            const double mag = std::abs(z[static_cast<size_t>(r) * n + c]);
            if (r == 0 && (c == 3 || c == n - 3)) {
                CHECK(mag == doctest::Approx(n * n / 2.0).epsilon(1e-10));
            } else {
                CHECK(mag < 1e-9);
            }
        }
    }
}
