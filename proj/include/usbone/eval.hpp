#pragma once

#include <optional>
#include <string>
#include <vector>

#include "usbone/image.hpp"
#include "usbone/keypoints.hpp"
#include "usbone/phantom.hpp"

namespace usbone {

struct FrameRecord {
    int frame = 0;
    std::vector<std::pair<double, double>> keypoints;  // pixel (row, col)
    RectROI roi;
    bool hit = false;
};

struct EvalReport {
    int frames_evaluated = 0;
    int frames_hit = 0;
    double hit_rate = 0.0;
    std::vector<FrameRecord> per_frame;
};

// A frame is a hit when at least top_n of its keypoints fall inside the ROI,
// boundary-inclusive. Keypoints arrive in normalized coordinates and are
// mapped to pixels of their source resolution.
EvalReport eval_hit_rate(const std::vector<KeypointSet>& keypoints,
                         const std::vector<RectROI>& rois, int top_n);

std::string report_to_json(const EvalReport& report);

// RGB PNG: grayscale base, keypoints as filled circles (radius 3, colored
// deterministically by index), optional 1 px ROI rectangle outline.
void render_overlay(const Frame& frame, const KeypointSet& keypoints,
                    const std::optional<RectROI>& roi, const std::string& path);

// Phantom truth interchange: curve depths per frame, ROIs at the stored
// margin, fracture metadata.
void save_truth_json(const PhantomTruth& truth, const std::string& path, int margin);
std::vector<RectROI> load_truth_rois(const std::string& path);

}  // namespace usbone
