#include "usbone/bonemap.hpp"

#include <algorithm>
#include <cmath>
#include <complex>

#include "usbone/fft.hpp"

namespace usbone {
namespace {

constexpr double kPi = 3.14159265358979323846;

int clampi(int v, int lo, int hi) { return v < lo ? lo : (v > hi ? hi : v); }

// Central difference along rows with replicate boundary.
std::vector<double> d_row(const std::vector<double>& img, int h, int w) {
    std::vector<double> out(img.size());
    for (int r = 0; r < h; ++r) {
        const int rp = clampi(r + 1, 0, h - 1);
        const int rm = clampi(r - 1, 0, h - 1);
        for (int c = 0; c < w; ++c) {
            out[static_cast<size_t>(r) * w + c] =
                0.5 * (img[static_cast<size_t>(rp) * w + c] - img[static_cast<size_t>(rm) * w + c]);
        }
    }
    return out;
}

std::vector<double> d_col(const std::vector<double>& img, int h, int w) {
    std::vector<double> out(img.size());
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            const int cp = clampi(c + 1, 0, w - 1);
            const int cm = clampi(c - 1, 0, w - 1);
            out[static_cast<size_t>(r) * w + c] =
                0.5 * (img[static_cast<size_t>(r) * w + cp] - img[static_cast<size_t>(r) * w + cm]);
        }
    }
    return out;
}

std::vector<double> d2_row(const std::vector<double>& img, int h, int w) {
    std::vector<double> out(img.size());
    for (int r = 0; r < h; ++r) {
        const int rp = clampi(r + 1, 0, h - 1);
        const int rm = clampi(r - 1, 0, h - 1);
        for (int c = 0; c < w; ++c) {
            out[static_cast<size_t>(r) * w + c] = img[static_cast<size_t>(rp) * w + c] -
                                                  2.0 * img[static_cast<size_t>(r) * w + c] +
                                                  img[static_cast<size_t>(rm) * w + c];
        }
    }
    return out;
}

std::vector<double> d2_col(const std::vector<double>& img, int h, int w) {
    std::vector<double> out(img.size());
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            const int cp = clampi(c + 1, 0, w - 1);
            const int cm = clampi(c - 1, 0, w - 1);
            out[static_cast<size_t>(r) * w + c] = img[static_cast<size_t>(r) * w + cp] -
                                                  2.0 * img[static_cast<size_t>(r) * w + c] +
                                                  img[static_cast<size_t>(r) * w + cm];
        }
    }
    return out;
}

// Replicate-pads a h*w grid to ph*pw (bottom/right extension).
std::vector<std::complex<double>> pad_to_complex(const double* img, int h, int w, int ph, int pw) {
    std::vector<std::complex<double>> out(static_cast<size_t>(ph) * pw);
    for (int r = 0; r < ph; ++r) {
        const int sr = clampi(r, 0, h - 1);
        for (int c = 0; c < pw; ++c) {
            const int sc = clampi(c, 0, w - 1);
            out[static_cast<size_t>(r) * pw + c] = img[static_cast<size_t>(sr) * w + sc];
        }
    }
    return out;
}

double sign_of(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

// Min-max rescale to [0,1]; constant input maps to all-zeros.
void rescale_minmax(std::vector<double>& v) {
    double lo = v[0], hi = v[0];
    for (double x : v) {
        lo = std::min(lo, x);
        hi = std::max(hi, x);
    }
    const double span = hi - lo;
    if (span <= 0.0) {
        std::fill(v.begin(), v.end(), 0.0);
        return;
    }
    for (double& x : v) x = (x - lo) / span;
}

std::vector<double> frobenius(const std::vector<double>& rr, const std::vector<double>& rc,
                              const std::vector<double>& cc) {
    std::vector<double> out(rr.size());
    for (size_t i = 0; i < rr.size(); ++i) {
        out[i] = std::sqrt(rr[i] * rr[i] + 2.0 * rc[i] * rc[i] + cc[i] * cc[i]);
    }
    return out;
}

}  // namespace

double log_gabor_gain(double w, const GaborConfig& cfg) {
    if (w <= 0.0) return 0.0;
    const double w0 = 2.0 * kPi / cfg.lambda0;
    const double num = std::log(w / w0);
    const double den = std::log(cfg.sigma0);
    return std::exp(-(num * num) / (2.0 * den * den));
}

std::vector<double> log_gabor_response(const Frame& frame, const GaborConfig& cfg) {
    if (frame.height < 4 || frame.width < 4) {
        throw ArgumentError("log_gabor_response: frame must be at least 4x4");
    }
    if (!(cfg.lambda0 >= 2.0)) throw ArgumentError("lambda0 must be >= 2 (Nyquist)");
    if (!(cfg.sigma0 > 0.0 && cfg.sigma0 < 1.0)) throw ArgumentError("sigma0 must be in (0,1)");

    const int h = frame.height, w = frame.width;
    const int ph = fft::next_pow2(h), pw = fft::next_pow2(w);

    std::vector<double> img(frame.size());
    for (size_t i = 0; i < img.size(); ++i) img[i] = frame.data[i];
    auto buf = pad_to_complex(img.data(), h, w, ph, pw);
    fft::forward2d(ph, pw, buf.data());

    for (int r = 0; r < ph; ++r) {
        const double fy = fft::freq_bin(r, ph);
        for (int c = 0; c < pw; ++c) {
            const double fx = fft::freq_bin(c, pw);
            const double wmag = 2.0 * kPi * std::sqrt(fy * fy + fx * fx);
            buf[static_cast<size_t>(r) * pw + c] *= log_gabor_gain(wmag, cfg);
        }
    }
    fft::inverse2d(ph, pw, buf.data());

    std::vector<double> out(frame.size());
    double mean = 0.0;
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            const double v = buf[static_cast<size_t>(r) * pw + c].real();
            out[static_cast<size_t>(r) * w + c] = v;
            mean += v;
        }
    }
    // Pad-then-crop leaves a residual mean; remove it so the zero-mean post
    // holds for every frame size.
    mean /= static_cast<double>(out.size());
    for (double& v : out) v -= mean;
    return out;
}

TensorField derivative_tensors(const std::vector<double>& i_bp, int height, int width) {
    TensorField tf;
    tf.height = height;
    tf.width = width;

    const auto irr = d2_row(i_bp, height, width);
    const auto icc = d2_col(i_bp, height, width);
    const auto gr = d_row(i_bp, height, width);
    const auto irc = d_col(gr, height, width);
    const auto gc = d_col(i_bp, height, width);

    std::vector<double> lap(i_bp.size());
    for (size_t i = 0; i < lap.size(); ++i) lap[i] = irr[i] + icc[i];
    const auto lr = d_row(lap, height, width);
    const auto lc = d_col(lap, height, width);

    const size_t n = i_bp.size();
    tf.even_rr.resize(n);
    tf.even_rc.resize(n);
    tf.even_cc.resize(n);
    tf.odd_rr.resize(n);
    tf.odd_rc.resize(n);
    tf.odd_cc.resize(n);
    for (size_t i = 0; i < n; ++i) {
        // H*H^T with H = [[Irr, Irc], [Irc, Icc]].
        tf.even_rr[i] = irr[i] * irr[i] + irc[i] * irc[i];
        tf.even_rc[i] = irr[i] * irc[i] + irc[i] * icc[i];
        tf.even_cc[i] = irc[i] * irc[i] + icc[i] * icc[i];
        // -0.5 * (grad * gradLap^T + gradLap * grad^T).
        tf.odd_rr[i] = -gr[i] * lr[i];
        tf.odd_rc[i] = -0.5 * (gr[i] * lc[i] + lr[i] * gc[i]);
        tf.odd_cc[i] = -gc[i] * lc[i];
    }
    tf.laplacian = std::move(lap);
    tf.grad_depth = gr;
    return tf;
}

std::vector<double> lpt_image(const TensorField& tf) {
    const auto fe = frobenius(tf.even_rr, tf.even_rc, tf.even_cc);
    const auto fo = frobenius(tf.odd_rr, tf.odd_rc, tf.odd_cc);
    std::vector<double> lpt(fe.size());
    for (size_t i = 0; i < lpt.size(); ++i) {
        const double e = fe[i] * sign_of(-tf.laplacian[i]);
        const double o = fo[i] * sign_of(tf.grad_depth[i]);
        const double phi = std::atan2(o, e);
        lpt[i] = std::sqrt(e * e + o * o) * std::cos(phi);
    }
    rescale_minmax(lpt);
    return lpt;
}

MonogenicTriple riesz_monogenic(const std::vector<double>& lpt, int height, int width) {
    MonogenicTriple m;
    m.height = height;
    m.width = width;
    m.m1 = lpt;

    // Exact-size transform: the pair's energy identity and zero output mean
    // only survive when nothing is padded away and cropped back.
    const int ph = height, pw = width;
    auto spec = pad_to_complex(lpt.data(), height, width, ph, pw);
    fft::forward2d(ph, pw, spec.data());

    std::vector<std::complex<double>> s2(spec.size()), s3(spec.size());
    for (int r = 0; r < ph; ++r) {
        const double fy = fft::freq_bin(r, ph);
        // A bin is self-conjugate when both axis indices map to themselves
        // under negation mod size (index 0 or the Nyquist index).
        const bool self_r = (r == 0) || (2 * r == ph);
        for (int c = 0; c < pw; ++c) {
            const size_t i = static_cast<size_t>(r) * pw + c;
            if (r == 0 && c == 0) {
                s2[i] = s3[i] = 0.0;
                continue;
            }
            const double fx = fft::freq_bin(c, pw);
            const double mag = std::sqrt(fy * fy + fx * fx);
            const bool self_c = (c == 0) || (2 * c == pw);
            // A self-conjugate axis index cannot flip sign at the mirror
            // bin, so an imaginary multiplier there breaks Hermitian
            // symmetry and leaks that component's energy into the imaginary
            // part. Projecting the affected component onto the real axis
            // keeps the spectrum Hermitian and the magnitude unchanged.
            s2[i] = self_r ? spec[i] * (fy / mag)
                           : spec[i] * std::complex<double>(0.0, fy / mag);
            s3[i] = self_c ? spec[i] * (fx / mag)
                           : spec[i] * std::complex<double>(0.0, fx / mag);
        }
    }
    fft::inverse2d(ph, pw, s2.data());
    fft::inverse2d(ph, pw, s3.data());

    m.m2.resize(lpt.size());
    m.m3.resize(lpt.size());
    for (int r = 0; r < height; ++r) {
        for (int c = 0; c < width; ++c) {
            m.m2[static_cast<size_t>(r) * width + c] = s2[static_cast<size_t>(r) * pw + c].real();
            m.m3[static_cast<size_t>(r) * width + c] = s3[static_cast<size_t>(r) * pw + c].real();
        }
    }
    return m;
}

std::vector<double> lp_map(const MonogenicTriple& m, double eps) {
    std::vector<double> lp(m.m1.size());
    for (size_t i = 0; i < lp.size(); ++i) {
        const double odd = std::sqrt(m.m2[i] * m.m2[i] + m.m3[i] * m.m3[i]);
        const double v = 1.0 - std::atan(odd / (std::abs(m.m1[i]) + eps)) / (kPi / 2.0);
        lp[i] = std::clamp(v, 0.0, 1.0);
    }
    return lp;
}

std::vector<double> fs_map(const TensorField& tf, const MonogenicTriple& m, double tau,
                           double eps) {
    const auto fe = frobenius(tf.even_rr, tf.even_rc, tf.even_cc);
    const auto fo = frobenius(tf.odd_rr, tf.odd_rc, tf.odd_cc);
    std::vector<double> fs(fe.size());
    for (size_t i = 0; i < fs.size(); ++i) {
        const double num = std::max(fe[i] - fo[i] - tau, 0.0);
        const double den = m.m1[i] * m.m1[i] + m.m2[i] * m.m2[i] + m.m3[i] * m.m3[i] + eps;
        fs[i] = num / den;
    }
    rescale_minmax(fs);
    return fs;
}

std::vector<double> ibs_map(const Frame& frame) {
    const int h = frame.height, w = frame.width;
    std::vector<double> ibs(frame.size(), 0.0);
    for (int c = 0; c < w; ++c) {
        double cum = 0.0;
        for (int r = 0; r < h; ++r) {
            const double v = frame.at(r, c);
            cum += v * v;
            ibs[static_cast<size_t>(r) * w + c] = cum;
        }
        const double bottom = cum;
        if (bottom > 0.0) {
            for (int r = 0; r < h; ++r) ibs[static_cast<size_t>(r) * w + c] /= bottom;
        } else {
            for (int r = 0; r < h; ++r) ibs[static_cast<size_t>(r) * w + c] = 0.0;
        }
    }
    return ibs;
}

Frame bone_probability_map(const Frame& frame_tga, const BoneMapConfig& cfg, int scale_index) {
    if (scale_index < 0 || scale_index >= static_cast<int>(cfg.scales.size())) {
        throw ArgumentError("bone_probability_map: scale_index out of range");
    }
    const GaborConfig gabor{cfg.scales[scale_index], cfg.sigma0};
    const auto i_bp = log_gabor_response(frame_tga, gabor);
    const auto tf = derivative_tensors(i_bp, frame_tga.height, frame_tga.width);
    const auto lpt = lpt_image(tf);
    const auto m = riesz_monogenic(lpt, frame_tga.height, frame_tga.width);
    const auto lp = lp_map(m, cfg.epsilon);
    const auto fs = fs_map(tf, m, cfg.fs_tau, cfg.epsilon);
    const auto ibs = ibs_map(frame_tga);

    Frame out(frame_tga.height, frame_tga.width);
    for (size_t i = 0; i < out.size(); ++i) {
        out.data[i] = static_cast<float>(lp[i] * fs[i] * (1.0 - ibs[i]));
    }
    return out;
}

ScaleStack build_scale_stack(const Frame& frame_tga, const BoneMapConfig& cfg) {
    if (cfg.scales.empty()) throw ArgumentError("build_scale_stack: scales must be nonempty");
    ScaleStack stack;
    stack.scales = cfg.scales;
    stack.channels.push_back(frame_tga);
    for (int s = 0; s < static_cast<int>(cfg.scales.size()); ++s) {
        stack.channels.push_back(bone_probability_map(frame_tga, cfg, s));
    }
    return stack;
}

}  // namespace usbone
