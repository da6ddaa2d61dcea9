#include "usbone/fft.hpp"

#include <fftw3.h>

#include <map>
#include <mutex>
#include <tuple>

namespace usbone::fft {
namespace {

// FFTW planning mutates global state; execution via fftw_execute_dft on
// caller buffers is thread-safe. Plans use FFTW_ESTIMATE for deterministic,
// input-independent plan selection and FFTW_UNALIGNED so any caller buffer
// is acceptable.
class PlanCache {
public:
    fftw_plan get(int h, int w, int sign) {
        std::lock_guard<std::mutex> lock(mu_);
        const auto key = std::make_tuple(h, w, sign);
        auto it = plans_.find(key);
        if (it != plans_.end()) return it->second;
        std::vector<std::complex<double>> tmp(static_cast<size_t>(h) * w);
        auto* buf = reinterpret_cast<fftw_complex*>(tmp.data());
        fftw_plan p =
            fftw_plan_dft_2d(h, w, buf, buf, sign, FFTW_ESTIMATE | FFTW_UNALIGNED);
        plans_.emplace(key, p);
        return p;
    }

    ~PlanCache() {
        for (auto& [key, p] : plans_) fftw_destroy_plan(p);
    }

private:
    std::mutex mu_;
    std::map<std::tuple<int, int, int>, fftw_plan> plans_;
};

PlanCache& cache() {
    static PlanCache c;
    return c;
}

}  // namespace

void forward2d(int h, int w, std::complex<double>* data) {
    auto* buf = reinterpret_cast<fftw_complex*>(data);
    fftw_execute_dft(cache().get(h, w, FFTW_FORWARD), buf, buf);
}

void inverse2d(int h, int w, std::complex<double>* data) {
    auto* buf = reinterpret_cast<fftw_complex*>(data);
    fftw_execute_dft(cache().get(h, w, FFTW_BACKWARD), buf, buf);
    const double scale = 1.0 / (static_cast<double>(h) * w);
    const size_t n = static_cast<size_t>(h) * w;
    for (size_t i = 0; i < n; ++i) data[i] *= scale;
}

int next_pow2(int n) {
    int p = 1;
    while (p < n) p <<= 1;
    return p;
}

double freq_bin(int k, int n) {
    // Nyquist bin of an even-length axis maps to -1/2.
    return (2 * k < n) ? static_cast<double>(k) / n : static_cast<double>(k - n) / n;
}

}  // namespace usbone::fft
