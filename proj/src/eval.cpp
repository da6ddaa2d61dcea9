#include "usbone/eval.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <memory>

#include <nlohmann/json.hpp>

#include "usbone/keypoints.hpp"

namespace usbone {
namespace {

using nlohmann::json;

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};

// Distinct keypoint colors, cycled by index.
constexpr unsigned char kPalette[10][3] = {
    {230, 25, 75},  {60, 180, 75},   {255, 225, 25}, {0, 130, 200},  {245, 130, 48},
    {145, 30, 180}, {70, 240, 240},  {240, 50, 230}, {210, 245, 60}, {250, 190, 190},
};

json roi_to_json(const RectROI& r) { return json::array({r.top, r.left, r.bottom, r.right}); }

json load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw FormatError("invalid JSON in " + path + ": " + e.what());
    }
    return j;
}

}  // namespace

double norm_to_pixel(double n, int size) { return (n + 1.0) / 2.0 * (size - 1); }
double pixel_to_norm(double p, int size) { return 2.0 * p / (size - 1) - 1.0; }

EvalReport eval_hit_rate(const std::vector<KeypointSet>& keypoints,
                         const std::vector<RectROI>& rois, int top_n) {
    if (keypoints.size() != rois.size()) {
        throw ArgumentError("eval_hit_rate: frame count mismatch");
    }
    if (top_n < 1) throw ArgumentError("eval_hit_rate: top_n must be >= 1");

    EvalReport report;
    report.frames_evaluated = static_cast<int>(keypoints.size());
    for (size_t f = 0; f < keypoints.size(); ++f) {
        const auto& ks = keypoints[f];
        const auto& roi = rois[f];
        FrameRecord rec;
        rec.frame = static_cast<int>(f);
        rec.roi = roi;
        int inside = 0;
        for (const auto& [nr, nc] : ks.coords) {
            const double pr = norm_to_pixel(nr, ks.source_resolution);
            const double pc = norm_to_pixel(nc, ks.source_resolution);
            rec.keypoints.emplace_back(pr, pc);
            if (pr >= roi.top && pr <= roi.bottom && pc >= roi.left && pc <= roi.right) {
                ++inside;
            }
        }
        rec.hit = inside >= top_n;
        if (rec.hit) ++report.frames_hit;
        report.per_frame.push_back(std::move(rec));
    }
    report.hit_rate = report.frames_evaluated
                          ? static_cast<double>(report.frames_hit) / report.frames_evaluated
                          : 0.0;
    return report;
}

std::string report_to_json(const EvalReport& report) {
    json j;
    j["frames_evaluated"] = report.frames_evaluated;
    j["frames_hit"] = report.frames_hit;
    j["hit_rate"] = report.hit_rate;
    json frames = json::array();
    for (const auto& rec : report.per_frame) {
        json kp = json::array();
        for (const auto& [r, c] : rec.keypoints) kp.push_back(json::array({r, c}));
        frames.push_back({{"frame", rec.frame},
                          {"keypoints", kp},
                          {"roi", roi_to_json(rec.roi)},
                          {"hit", rec.hit}});
    }
    j["per_frame"] = frames;
    return j.dump(2) + "\n";
}

void render_overlay(const Frame& frame, const KeypointSet& keypoints,
                    const std::optional<RectROI>& roi, const std::string& path) {
    const int h = frame.height, w = frame.width;
    std::vector<unsigned char> rgb(static_cast<size_t>(h) * w * 3);
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            const double v = std::clamp(static_cast<double>(frame.at(r, c)), 0.0, 1.0);
            const auto g = static_cast<unsigned char>(std::lround(v * 255.0));
            const size_t i = (static_cast<size_t>(r) * w + c) * 3;
            rgb[i] = rgb[i + 1] = rgb[i + 2] = g;
        }
    }

    if (roi) {
        const int top = std::clamp(roi->top, 0, h - 1);
        const int bottom = std::clamp(roi->bottom, 0, h - 1);
        const int left = std::clamp(roi->left, 0, w - 1);
        const int right = std::clamp(roi->right, 0, w - 1);
        auto paint = [&](int r, int c) {
            const size_t i = (static_cast<size_t>(r) * w + c) * 3;
            rgb[i] = 0;
            rgb[i + 1] = 255;
            rgb[i + 2] = 0;
        };
        for (int c = left; c <= right; ++c) {
            paint(top, c);
            paint(bottom, c);
        }
        for (int r = top; r <= bottom; ++r) {
            paint(r, left);
            paint(r, right);
        }
    }

    for (size_t k = 0; k < keypoints.coords.size(); ++k) {
        const auto& color = kPalette[k % 10];
        const int pr = static_cast<int>(
            std::lround(norm_to_pixel(keypoints.coords[k].first, keypoints.source_resolution)));
        const int pc = static_cast<int>(
            std::lround(norm_to_pixel(keypoints.coords[k].second, keypoints.source_resolution)));
        for (int dr = -3; dr <= 3; ++dr) {
            for (int dc = -3; dc <= 3; ++dc) {
                if (dr * dr + dc * dc > 9) continue;
                const int r = pr + dr, c = pc + dc;
                if (r < 0 || r >= h || c < 0 || c >= w) continue;
                const size_t i = (static_cast<size_t>(r) * w + c) * 3;
                rgb[i] = color[0];
                rgb[i + 1] = color[1];
                rgb[i + 2] = color[2];
            }
        }
    }

    std::unique_ptr<std::FILE, FileCloser> fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw IoError("cannot write " + path);
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw IoError("png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw IoError("png_create_info_struct failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("PNG write failed: " + path);
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, w, h, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int r = 0; r < h; ++r) {
        png_write_row(png, rgb.data() + static_cast<size_t>(r) * w * 3);
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

void save_truth_json(const PhantomTruth& truth, const std::string& path, int margin) {
    json j;
    j["size"] = truth.size;
    j["margin"] = margin;
    j["ridge_half_width"] = truth.ridge_half_width;
    if (truth.has_fracture) {
        j["fracture"] = {{"column", truth.fracture.column},
                         {"gap_width", truth.fracture.gap_width},
                         {"step", truth.fracture.step}};
    } else {
        j["fracture"] = nullptr;
    }
    json rois = json::array();
    json curve = json::array();
    for (size_t f = 0; f < truth.curve.size(); ++f) {
        rois.push_back(roi_to_json(truth_roi(truth, static_cast<int>(f), margin)));
        json row = json::array();
        for (double d : truth.curve[f]) {
            if (std::isnan(d)) {
                row.push_back(nullptr);
            } else {
                row.push_back(d);
            }
        }
        curve.push_back(std::move(row));
    }
    j["rois"] = rois;
    j["curve"] = curve;
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write " + path);
    out << j.dump() << "\n";
}

std::vector<RectROI> load_truth_rois(const std::string& path) {
    const json j = load_json_file(path);
    if (!j.contains("rois") || !j["rois"].is_array()) {
        throw FormatError("truth file missing rois array: " + path);
    }
    std::vector<RectROI> out;
    for (const auto& r : j["rois"]) {
        if (!r.is_array() || r.size() != 4) throw FormatError("malformed roi in " + path);
        out.push_back({r[0].get<int>(), r[1].get<int>(), r[2].get<int>(), r[3].get<int>()});
    }
    return out;
}

void save_keypoints_json(const std::map<int, KeypointSet>& sets, const std::string& path) {
    json j = json::object();
    for (const auto& [frame, ks] : sets) {
        json arr = json::array();
        for (const auto& [nr, nc] : ks.coords) {
            arr.push_back(json::array({norm_to_pixel(nr, ks.source_resolution),
                                       norm_to_pixel(nc, ks.source_resolution)}));
        }
        j[std::to_string(frame)] = std::move(arr);
    }
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write " + path);
    out << j.dump() << "\n";
}

std::map<int, KeypointSet> load_keypoints_json(const std::string& path, int source_resolution) {
    const json j = load_json_file(path);
    if (!j.is_object()) throw FormatError("keypoint file must be a JSON object: " + path);
    std::map<int, KeypointSet> out;
    for (const auto& [key, arr] : j.items()) {
        KeypointSet ks;
        ks.source_resolution = source_resolution;
        for (const auto& kp : arr) {
            if (!kp.is_array() || kp.size() != 2) {
                throw FormatError("malformed keypoint in " + path);
            }
            ks.coords.emplace_back(pixel_to_norm(kp[0].get<double>(), source_resolution),
                                   pixel_to_norm(kp[1].get<double>(), source_resolution));
        }
        out.emplace(std::stoi(key), std::move(ks));
    }
    return out;
}

}  // namespace usbone
