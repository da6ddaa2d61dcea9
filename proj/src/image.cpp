#include "usbone/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>

#include "usbone/rng.hpp"

namespace usbone {
namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

bool has_usf1_magic(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    char magic[4] = {};
    in.read(magic, 4);
    return in.gcount() == 4 && std::memcmp(magic, "USF1", 4) == 0;
}

void write_u32le(std::ofstream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32le(std::ifstream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw FormatError("truncated USF1 header");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

// 8-bit grayscale decode; other PNG color types are converted down.
Frame load_png_gray(const std::string& path) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw IoError("cannot open " + path);

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw IoError("png_create_read_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw IoError("png_create_info_struct failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw FormatError("invalid PNG: " + path);
    }
    png_init_io(png, fp.get());
    png_read_info(png, info);

    const png_uint_32 w = png_get_image_width(png, info);
    const png_uint_32 h = png_get_image_height(png, info);
    if (w == 0 || h == 0) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw FormatError("zero-dimension PNG: " + path);
    }
    const int color = png_get_color_type(png, info);
    const int depth = png_get_bit_depth(png, info);
    if (depth == 16) png_set_strip_16(png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (color & PNG_COLOR_MASK_COLOR) png_set_rgb_to_gray_fixed(png, 1, -1, -1);
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    png_read_update_info(png, info);

    Frame out(static_cast<int>(h), static_cast<int>(w));
    std::vector<unsigned char> row(w);
    for (png_uint_32 r = 0; r < h; ++r) {
        png_read_row(png, row.data(), nullptr);
        for (png_uint_32 c = 0; c < w; ++c) {
            out.at(static_cast<int>(r), static_cast<int>(c)) = row[c] / 255.0f;
        }
    }
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return out;
}

}  // namespace

Frame load_usf1(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    char magic[4];
    in.read(magic, 4);
    if (in.gcount() != 4 || std::memcmp(magic, "USF1", 4) != 0) {
        throw FormatError("bad USF1 magic in " + path);
    }
    const std::uint32_t h = read_u32le(in);
    const std::uint32_t w = read_u32le(in);
    if (h == 0 || w == 0) throw FormatError("zero-dimension USF1: " + path);
    Frame out(static_cast<int>(h), static_cast<int>(w));
    in.read(reinterpret_cast<char*>(out.data.data()),
            static_cast<std::streamsize>(out.size() * sizeof(float)));
    if (!in) throw FormatError("truncated USF1 data in " + path);
    return out;
}

void save_usf1(const Frame& frame, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path);
    out.write("USF1", 4);
    write_u32le(out, static_cast<std::uint32_t>(frame.height));
    write_u32le(out, static_cast<std::uint32_t>(frame.width));
    out.write(reinterpret_cast<const char*>(frame.data.data()),
              static_cast<std::streamsize>(frame.size() * sizeof(float)));
    if (!out) throw IoError("short write to " + path);
}

Frame resize_bilinear(const Frame& frame, int out_h, int out_w) {
    if (out_h <= 0 || out_w <= 0) throw ArgumentError("resize target must be positive");
    if (out_h == frame.height && out_w == frame.width) return frame;
    Frame out(out_h, out_w);
    // Pixel-center alignment: source coordinate of output center (r+0.5)/scale.
    const double sy = static_cast<double>(frame.height) / out_h;
    const double sx = static_cast<double>(frame.width) / out_w;
    for (int r = 0; r < out_h; ++r) {
        double fy = (r + 0.5) * sy - 0.5;
        fy = std::clamp(fy, 0.0, static_cast<double>(frame.height - 1));
        const int y0 = static_cast<int>(fy);
        const int y1 = std::min(y0 + 1, frame.height - 1);
        const double wy = fy - y0;
        for (int c = 0; c < out_w; ++c) {
            double fx = (c + 0.5) * sx - 0.5;
            fx = std::clamp(fx, 0.0, static_cast<double>(frame.width - 1));
            const int x0 = static_cast<int>(fx);
            const int x1 = std::min(x0 + 1, frame.width - 1);
            const double wx = fx - x0;
            const double top = frame.at(y0, x0) * (1.0 - wx) + frame.at(y0, x1) * wx;
            const double bot = frame.at(y1, x0) * (1.0 - wx) + frame.at(y1, x1) * wx;
            out.at(r, c) = static_cast<float>(top * (1.0 - wy) + bot * wy);
        }
    }
    return out;
}

Frame load_frame(const std::string& path, std::pair<int, int> target_size) {
    Frame raw = has_usf1_magic(path) ? load_usf1(path) : load_png_gray(path);
    Frame out = resize_bilinear(raw, target_size.first, target_size.second);
    for (float& v : out.data) v = std::clamp(v, 0.0f, 1.0f);
    return out;
}

void save_frame(const Frame& frame, const std::string& path) {
    if (frame.height <= 0 || frame.width <= 0) throw ArgumentError("empty frame");
    FilePtr fp(std::fopen(path.c_str(), "wb"));
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
    png_set_IHDR(png, info, frame.width, frame.height, 8, PNG_COLOR_TYPE_GRAY,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<unsigned char> row(frame.width);
    for (int r = 0; r < frame.height; ++r) {
        for (int c = 0; c < frame.width; ++c) {
            const double v = std::clamp(static_cast<double>(frame.at(r, c)), 0.0, 1.0);
            row[c] = static_cast<unsigned char>(std::lround(v * 255.0));
        }
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

VideoSequence load_video(const std::string& dir, std::pair<int, int> target_size) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir);
    std::vector<std::string> names;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (e.is_regular_file() && e.path().extension() == ".png") {
            names.push_back(e.path().string());
        }
    }
    std::sort(names.begin(), names.end());
    if (names.size() < 2) throw FormatError("video needs at least 2 frames: " + dir);
    VideoSequence seq;
    seq.frames.reserve(names.size());
    for (const auto& n : names) seq.frames.push_back(load_frame(n, target_size));
    return seq;
}

void save_video(const VideoSequence& seq, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    char name[32];
    for (size_t i = 0; i < seq.frames.size(); ++i) {
        std::snprintf(name, sizeof(name), "frame_%04zu.png", i);
        save_frame(seq.frames[i], (fs::path(dir) / name).string());
    }
}

std::vector<std::pair<int, int>> frame_pair_indices(int sequence_length, int separation,
                                                    int count, std::uint64_t seed) {
    if (separation < 0) throw ArgumentError("separation must be >= 0");
    if (count <= 0) throw ArgumentError("count must be positive");
    if (sequence_length <= separation) throw ArgumentError("sequence too short for separation");
    rng::Engine eng(seed);
    const std::uint64_t span = static_cast<std::uint64_t>(sequence_length - separation);
    std::vector<std::pair<int, int>> out;
    out.reserve(count);
    for (int i = 0; i < count; ++i) {
        const int t = static_cast<int>(eng.next_below(span));
        out.emplace_back(t, t + separation);
    }
    return out;
}

std::vector<std::pair<Frame, Frame>> frame_pairs(const VideoSequence& seq, int separation,
                                                 int count, std::uint64_t seed) {
    const auto idx =
        frame_pair_indices(static_cast<int>(seq.frames.size()), separation, count, seed);
    std::vector<std::pair<Frame, Frame>> out;
    out.reserve(idx.size());
    for (const auto& [s, t] : idx) out.emplace_back(seq.frames[s], seq.frames[t]);
    return out;
}

}  // namespace usbone
