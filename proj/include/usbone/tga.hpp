#pragma once

#include <vector>

#include "usbone/image.hpp"

namespace usbone {

// Depth-gain compensation suppressing bright near-field reflections.
struct TgaConfig {
    double attenuation_a = 0.01;  // per-pixel exponential factor, > 0
};

// gamma(d) = 1 - e^{-a*d} for d = 0..height-1. Monotone nondecreasing,
// gamma(0) = 0, values in [0,1).
std::vector<double> tga_mask(int height, const TgaConfig& cfg);

// out(d,c) = gamma(d) * in(d,c); row 0 becomes exactly 0.
Frame apply_tga(const Frame& frame, const TgaConfig& cfg);

}  // namespace usbone
