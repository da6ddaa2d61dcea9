#include "usbone/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>

#include "usbone/fft.hpp"
#include "usbone/rng.hpp"

namespace usbone {
namespace {

constexpr double kPi = 3.14159265358979323846;

// Internal construction constants. The ridge sits on a dim speckled tissue
// bed with a soft shadow onset; a hard cut at the bone line would itself
// read as a band-pass ridge and fool the localization pipeline.
constexpr double kBaseLevel = 0.22;       // tissue mean intensity
constexpr double kSpeckleAmp = 0.4;       // speckle amplitude around unit mean
constexpr double kRidgeSigma = 2.0;       // ridge cross-section sigma, px
constexpr double kNearFieldGain = 0.6;    // near-field band amplitude
constexpr double kShadowOnsetPx = 8.0;    // smoothstep width below the surface
constexpr double kDriftPeriod = 30.0;     // frames per drift oscillation

// Unit-variance low-pass Gaussian field, correlation length `grain` px.
std::vector<double> speckle_field(int size, double grain, std::uint64_t seed) {
    rng::Engine eng(seed);
    std::vector<std::complex<double>> z(static_cast<size_t>(size) * size);
    for (auto& v : z) v = eng.next_normal();
    fft::forward2d(size, size, z.data());
    for (int r = 0; r < size; ++r) {
        const double fy = fft::freq_bin(r, size);
        for (int c = 0; c < size; ++c) {
            const double fx = fft::freq_bin(c, size);
            const double gain = std::exp(-2.0 * kPi * kPi * grain * grain * (fy * fy + fx * fx));
            z[static_cast<size_t>(r) * size + c] *= gain;
        }
    }
    fft::inverse2d(size, size, z.data());

    std::vector<double> field(z.size());
    double mean = 0.0;
    for (size_t i = 0; i < z.size(); ++i) {
        field[i] = z[i].real();
        mean += field[i];
    }
    mean /= static_cast<double>(field.size());
    double var = 0.0;
    for (double v : field) var += (v - mean) * (v - mean);
    const double sd = std::sqrt(var / static_cast<double>(field.size()));
    for (double& v : field) v /= sd;
    return field;
}

void validate(const PhantomConfig& cfg) {
    if (cfg.size < 16) throw ArgumentError("phantom: size must be >= 16");
    if (cfg.frames < 2) throw ArgumentError("phantom: frames must be >= 2");
    if (!(cfg.bone_brightness >= 0.0 && cfg.bone_brightness <= 1.0)) {
        throw ArgumentError("phantom: bone_brightness must be in [0,1]");
    }
    if (!(cfg.shadow_attenuation >= 0.0 && cfg.shadow_attenuation < 1.0)) {
        throw ArgumentError("phantom: shadow_attenuation must be in [0,1)");
    }
    if (!(cfg.speckle_grain > 0.0)) throw ArgumentError("phantom: speckle_grain must be positive");
    if (cfg.bone_curvature < 0.0) throw ArgumentError("phantom: bone_curvature must be >= 0");
    if (cfg.drift_amplitude < 0.0) throw ArgumentError("phantom: drift_amplitude must be >= 0");
    if (cfg.fracture && cfg.fracture->gap_width < 1) {
        throw ArgumentError("phantom: fracture gap_width must be >= 1");
    }
    const double step_lo = cfg.fracture ? std::min(0.0, cfg.fracture->step) : 0.0;
    const double step_hi = cfg.fracture ? std::max(0.0, cfg.fracture->step) : 0.0;
    const double ridge_half = 2.0 * kRidgeSigma;
    const double shallowest = cfg.bone_depth - cfg.drift_amplitude + step_lo - ridge_half;
    const double deepest = cfg.bone_depth + cfg.bone_curvature + cfg.drift_amplitude + step_hi +
                           ridge_half + kShadowOnsetPx;
    if (shallowest < 0.0 || deepest > cfg.size - 1.0) {
        throw ArgumentError("phantom: bone geometry out of bounds");
    }
}

}  // namespace

std::pair<VideoSequence, PhantomTruth> generate(const PhantomConfig& cfg) {
    validate(cfg);
    const int n = cfg.size;
    const auto s = speckle_field(n, cfg.speckle_grain, cfg.seed);
    const int near_rows = n / 10;
    const double nan = std::numeric_limits<double>::quiet_NaN();

    PhantomTruth truth;
    truth.size = n;
    truth.has_fracture = cfg.fracture.has_value();
    if (cfg.fracture) truth.fracture = *cfg.fracture;
    truth.ridge_half_width = static_cast<int>(std::ceil(2.0 * kRidgeSigma));
    truth.curve.resize(cfg.frames);

    VideoSequence seq;
    seq.frames.reserve(cfg.frames);

    for (int f = 0; f < cfg.frames; ++f) {
        const double drift =
            cfg.drift_amplitude * std::sin(2.0 * kPi * static_cast<double>(f) / kDriftPeriod);
        auto& curve = truth.curve[f];
        curve.resize(n);
        for (int c = 0; c < n; ++c) {
            if (cfg.fracture &&
                std::abs(c - cfg.fracture->column) <= cfg.fracture->gap_width / 2.0) {
                curve[c] = nan;
                continue;
            }
            const double u = (n > 1) ? 2.0 * c / (n - 1.0) - 1.0 : 0.0;
            double depth = cfg.bone_depth + cfg.bone_curvature * (1.0 - u * u) + drift;
            if (cfg.fracture && c > cfg.fracture->column + cfg.fracture->gap_width / 2.0) {
                depth += cfg.fracture->step;
            }
            curve[c] = depth;
        }

        Frame img(n, n);
        for (int c = 0; c < n; ++c) {
            const double mu = curve[c];
            const bool bone = !std::isnan(mu);
            for (int r = 0; r < n; ++r) {
                // Unit-mean multiplicative speckle, floored at 0.
                const double sp =
                    std::max(0.0, 1.0 + kSpeckleAmp * s[static_cast<size_t>(r) * n + c]);
                double v = kBaseLevel * sp;
                if (bone) {
                    const double t =
                        std::clamp((static_cast<double>(r) - mu) / kShadowOnsetPx, 0.0, 1.0);
                    const double sm = t * t * (3.0 - 2.0 * t);
                    v *= 1.0 - (1.0 - cfg.shadow_attenuation) * sm;
                    const double dr = static_cast<double>(r) - mu;
                    v += cfg.bone_brightness *
                         std::exp(-(dr * dr) / (2.0 * kRidgeSigma * kRidgeSigma));
                }
                if (r < near_rows) v += kNearFieldGain * kBaseLevel * sp;
                img.at(r, c) = static_cast<float>(std::clamp(v, 0.0, 1.0));
            }
        }
        seq.frames.push_back(std::move(img));
    }
    return {std::move(seq), std::move(truth)};
}

RectROI truth_roi(const PhantomTruth& truth, int frame_index, int margin) {
    if (frame_index < 0 || frame_index >= static_cast<int>(truth.curve.size())) {
        throw ArgumentError("truth_roi: frame_index out of range");
    }
    if (margin < 0) throw ArgumentError("truth_roi: margin must be >= 0");
    const auto& curve = truth.curve[frame_index];
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    int left = -1, right = -1;
    for (int c = 0; c < static_cast<int>(curve.size()); ++c) {
        if (std::isnan(curve[c])) continue;
        lo = std::min(lo, curve[c]);
        hi = std::max(hi, curve[c]);
        if (left < 0) left = c;
        right = c;
    }
    if (left < 0) throw ArgumentError("truth_roi: frame has no bone columns");

    RectROI roi;
    roi.top = std::max(0, static_cast<int>(std::floor(lo)) - margin);
    roi.bottom =
        std::min(truth.size, static_cast<int>(std::ceil(hi)) + truth.ridge_half_width + margin);
    roi.left = std::max(0, left - margin);
    roi.right = std::min(truth.size, right + 1 + margin);
    return roi;
}

}  // namespace usbone
