#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace usbone {

// Row 0 is the transducer face; row index = depth, column = lateral position.
// Values live in [0,1] after load/normalize.
struct Frame {
    int height = 0;
    int width = 0;
    std::vector<float> data;  // row-major, height*width

    Frame() = default;
    Frame(int h, int w, float fill = 0.0f)
        : height(h), width(w), data(static_cast<size_t>(h) * w, fill) {}

    float& at(int r, int c) { return data[static_cast<size_t>(r) * width + c]; }
    float at(int r, int c) const { return data[static_cast<size_t>(r) * width + c]; }
    size_t size() const { return data.size(); }
};

// Ordered frames of uniform dimensions; frame_rate is metadata only.
struct VideoSequence {
    std::vector<Frame> frames;
    double frame_rate = 0.0;
};

// Channel 0 = TGA-compensated frame, channels 1..S = bone probability maps.
struct ScaleStack {
    std::vector<Frame> channels;
    std::vector<double> scales;
};

// Pixel-index rectangle, 0 <= top < bottom <= height, 0 <= left < right <= width.
struct RectROI {
    int top = 0;
    int left = 0;
    int bottom = 0;
    int right = 0;
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ArgumentError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Loads an 8-bit grayscale PNG or a USF1 raw-float file and resizes to
// target_size (height, width) with bilinear interpolation. PNG values map
// from [0,255] to [0,1].
Frame load_frame(const std::string& path, std::pair<int, int> target_size);

// Writes an 8-bit grayscale PNG storing round(v*255) per pixel.
void save_frame(const Frame& frame, const std::string& path);

// USF1 raw floats: "USF1", u32le height, u32le width, f32le row-major data.
Frame load_usf1(const std::string& path);
void save_usf1(const Frame& frame, const std::string& path);

// Bilinear resize; constant frames stay constant.
Frame resize_bilinear(const Frame& frame, int out_h, int out_w);

// Loads a directory of zero-padded numbered PNGs (frame_0000.png, ...).
VideoSequence load_video(const std::string& dir, std::pair<int, int> target_size);
void save_video(const VideoSequence& seq, const std::string& dir);

// `count` index pairs (t, t+separation), t uniform in [0, len-separation),
// sampled with replacement from a generator seeded by `seed`.
std::vector<std::pair<int, int>> frame_pair_indices(int sequence_length, int separation,
                                                    int count, std::uint64_t seed);
std::vector<std::pair<Frame, Frame>> frame_pairs(const VideoSequence& seq, int separation,
                                                 int count, std::uint64_t seed);

}  // namespace usbone
