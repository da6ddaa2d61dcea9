#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "usbone/image.hpp"

namespace usbone {

struct FractureSpec {
    int column = 128;    // gap center
    int gap_width = 6;   // no bone where |col - column| <= gap_width/2
    double step = 0.0;   // extra depth of the distal (right) fragment, px
};

// Synthetic sweep generator with ground-truth bone geometry.
struct PhantomConfig {
    int size = 256;
    int frames = 256;
    double bone_depth = 100.0;      // mean depth of the bone surface, px
    double bone_curvature = 0.0;    // parabolic sag, px (deepest at center)
    double bone_brightness = 0.7;   // ridge amplitude in [0,1]
    double shadow_attenuation = 0.2;  // multiplier below the bone, in [0,1)
    double speckle_grain = 5.0;     // speckle correlation length, px
    double drift_amplitude = 6.0;   // sinusoidal per-sweep vertical motion, px
    std::optional<FractureSpec> fracture;
    std::uint64_t seed = 7;
};

// Per-frame bone surface depths (NaN where the fracture gap removes bone).
struct PhantomTruth {
    int size = 0;
    std::vector<std::vector<double>> curve;  // [frame][column] depth
    bool has_fracture = false;
    FractureSpec fracture;
    // Ridge cross-section half-width used for ROI construction (2 sigma).
    int ridge_half_width = 4;
};

// Deterministic per seed: static per-sweep speckle field, drifting bright
// ridge (~2 px Gaussian cross-section), multiplicative shadow below the
// bone, bright near-field band in the top 10% of rows; values clipped to
// [0,1].
std::pair<VideoSequence, PhantomTruth> generate(const PhantomConfig& cfg);

// Smallest rectangle containing the frame's bone curve (ridge body
// included below the surface), dilated by margin and clamped to the frame.
RectROI truth_roi(const PhantomTruth& truth, int frame_index, int margin);

}  // namespace usbone
