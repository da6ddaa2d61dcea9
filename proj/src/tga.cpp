#include "usbone/tga.hpp"

#include <cmath>

namespace usbone {

std::vector<double> tga_mask(int height, const TgaConfig& cfg) {
    if (height < 1) throw ArgumentError("tga_mask: height must be >= 1");
    if (!(cfg.attenuation_a > 0.0) || !std::isfinite(cfg.attenuation_a)) {
        throw ArgumentError("tga_mask: attenuation_a must be positive and finite");
    }
    std::vector<double> mask(height);
    for (int d = 0; d < height; ++d) {
        mask[d] = 1.0 - std::exp(-cfg.attenuation_a * d);
    }
    return mask;
}

Frame apply_tga(const Frame& frame, const TgaConfig& cfg) {
    const auto mask = tga_mask(frame.height, cfg);
    Frame out(frame.height, frame.width);
    for (int d = 0; d < frame.height; ++d) {
        for (int c = 0; c < frame.width; ++c) {
            out.at(d, c) = static_cast<float>(mask[d] * frame.at(d, c));
        }
    }
    return out;
}

}  // namespace usbone
