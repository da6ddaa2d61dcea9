#pragma once

#include <vector>

#include "usbone/image.hpp"

namespace usbone {

// Band-pass filter G(w) = exp(-log^2(|w|/w0) / (2 log^2 sigma0)), w0 = 2*pi/lambda0.
struct GaborConfig {
    double lambda0 = 16.0;  // wavelength in pixels, >= 2
    double sigma0 = 0.55;   // log-bandwidth, in (0,1)
};

// Per-pixel 2x2 tensors from image derivatives. t_even = H*H^T is symmetric
// PSD by construction; both stored as (rr, rc, cc) with t_odd symmetrized.
struct TensorField {
    int height = 0;
    int width = 0;
    std::vector<double> even_rr, even_rc, even_cc;
    std::vector<double> odd_rr, odd_rc, odd_cc;
    // Source-image derivatives kept for scalarization polarity.
    std::vector<double> laplacian;   // del^2 I
    std::vector<double> grad_depth;  // dI/dd (row axis)
};

// Monogenic triple: m1 = input, (m2, m3) = Riesz pair (depth, lateral).
struct MonogenicTriple {
    int height = 0;
    int width = 0;
    std::vector<double> m1, m2, m3;
};

struct BoneMapConfig {
    std::vector<double> scales = {8.0, 16.0, 32.0};  // lambda0 per channel
    double fs_tau = 1e-3;                            // feature-symmetry noise threshold
    double epsilon = 1e-8;                           // division guard
    double sigma0 = 0.55;
};

// Filter transfer function value at radial frequency w (radians/pixel).
double log_gabor_gain(double w, const GaborConfig& cfg);

// Band-passed image I_BP: real part of inverse FFT of F(frame)*G(|w|), DC
// zeroed. Non-pow2 frames are replicate-padded to the next power of two and
// cropped back; the residual mean over the crop is subtracted so
// |mean| <= 1e-6 * dynamic range holds for every size.
std::vector<double> log_gabor_response(const Frame& frame, const GaborConfig& cfg);

// T_even = H*H^T, T_odd = -0.5*(grad*gradLap^T + gradLap*grad^T), central
// differences with replicate padding.
TensorField derivative_tensors(const std::vector<double>& i_bp, int height, int width);

// Scalarized local-phase tensor: e = ||T_even||_F * sign(-lap),
// o = ||T_odd||_F * sign(dI/dd); LPT = sqrt(e^2+o^2)*cos(atan2(o,e)), which
// equals e; min-max rescaled to [0,1] (constant field -> zeros).
std::vector<double> lpt_image(const TensorField& tf);

// Riesz pair in the frequency domain: multipliers (i*u, i*v)/||(u,v)||, DC
// bin zero. Wherever an axis index is self-conjugate (0 or Nyquist) that
// component's multiplier is projected to its real-axis equivalent so the
// pair stays Hermitian and energy-preserving off DC.
MonogenicTriple riesz_monogenic(const std::vector<double>& lpt, int height, int width);

// LP = 1 - arctan(sqrt(m2^2+m3^2)/(|m1|+eps)) / (pi/2), clamped to [0,1].
std::vector<double> lp_map(const MonogenicTriple& m, double eps);

// FS = max(||T_even||_F - ||T_odd||_F - tau, 0) / (m1^2+m2^2+m3^2+eps),
// min-max rescaled to [0,1].
std::vector<double> fs_map(const TensorField& tf, const MonogenicTriple& m, double tau,
                           double eps);

// Per-column cumulative squared intensity normalized by its bottom value;
// all-zero columns stay zero. Nondecreasing down every column.
std::vector<double> ibs_map(const Frame& frame);

// T(x, lambda0) = LP * FS * (1 - IBS) at cfg.scales[scale_index].
Frame bone_probability_map(const Frame& frame_tga, const BoneMapConfig& cfg, int scale_index);

// Channel 0 = frame_tga, channels 1..S = bone maps per scale.
ScaleStack build_scale_stack(const Frame& frame_tga, const BoneMapConfig& cfg);

}  // namespace usbone
