#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

namespace usbone {

// K keypoints in normalized [-1,1] (row, col) coordinates.
struct KeypointSet {
    std::vector<std::pair<double, double>> coords;
    int source_resolution = 256;
};

// normalized n in [-1,1] -> pixel (n+1)/2 * (size-1), and back.
double norm_to_pixel(double n, int size);
double pixel_to_norm(double p, int size);

// Interchange format: JSON object {frame_index: [[row, col], ...]} in
// source-resolution pixel coordinates.
void save_keypoints_json(const std::map<int, KeypointSet>& sets, const std::string& path);
std::map<int, KeypointSet> load_keypoints_json(const std::string& path, int source_resolution);

}  // namespace usbone
