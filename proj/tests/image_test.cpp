#include <doctest.h>

#include <cstdint>
#include <fstream>
#include <set>
#include <vector>

#include "usbone/image.hpp"
#include "usbone/rng.hpp"

#include "testutil.hpp"

using namespace usbone;

TEST_CASE("usf1 layout is magic, le dims, le row-major floats") {
    testutil::TempDir tmp;
    Frame f(2, 3);
    const float vals[6] = {0.0f, 0.25f, 0.5f, 0.75f, 1.0f, 0.125f};
    for (int i = 0; i < 6; ++i) f.data[i] = vals[i];
    const std::string path = tmp.file("f.usf1");
    save_usf1(f, path);

    std::ifstream in(path, std::ios::binary);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());
    REQUIRE(bytes.size() == 4 + 4 + 4 + 6 * 4);
    CHECK(bytes[0] == 'U');
    CHECK(bytes[1] == 'S');
    CHECK(bytes[2] == 'F');
    CHECK(bytes[3] == '1');
    const auto u32 = [&](size_t off) {
        return static_cast<std::uint32_t>(bytes[off]) | (bytes[off + 1] << 8) |
               (bytes[off + 2] << 16) | (static_cast<std::uint32_t>(bytes[off + 3]) << 24);
    };
    CHECK(u32(4) == 2);
    CHECK(u32(8) == 3);

    const Frame back = load_usf1(path);
    REQUIRE(back.height == 2);
    REQUIRE(back.width == 3);
    for (int i = 0; i < 6; ++i) CHECK(back.data[i] == vals[i]);
}

TEST_CASE("png round trip stays within one quantization step") {
    testutil::TempDir tmp;
    rng::Engine eng(11);
    Frame f(17, 23);
    for (auto& v : f.data) v = static_cast<float>(eng.next_double());
    const std::string path = tmp.file("f.png");
    save_frame(f, path);
    const Frame back = load_frame(path, {17, 23});
    for (size_t i = 0; i < f.data.size(); ++i) {
        CHECK(std::abs(back.data[i] - f.data[i]) <= 0.5f / 255.0f + 1e-6f);
    }
}

TEST_CASE("png endpoints map to 0 and 255") {
    testutil::TempDir tmp;
    save_frame(Frame(4, 4, 0.0f), tmp.file("zero.png"));
    save_frame(Frame(4, 4, 1.0f), tmp.file("one.png"));
    for (float v : load_frame(tmp.file("zero.png"), {4, 4}).data) CHECK(v == 0.0f);
    for (float v : load_frame(tmp.file("one.png"), {4, 4}).data) CHECK(v == 1.0f);
}

TEST_CASE("identity resize preserves a checkerboard exactly") {
    testutil::TempDir tmp;
    Frame f(2, 2);
    f.at(0, 0) = 0.0f;
    f.at(0, 1) = 1.0f;
    f.at(1, 0) = 1.0f;
    f.at(1, 1) = 0.0f;
    save_frame(f, tmp.file("c.png"));
    const Frame back = load_frame(tmp.file("c.png"), {2, 2});
    CHECK(back.at(0, 0) == 0.0f);
    CHECK(back.at(0, 1) == 1.0f);
    CHECK(back.at(1, 0) == 1.0f);
    CHECK(back.at(1, 1) == 0.0f);
}

TEST_CASE("bilinear resize keeps constants and interpolates centers") {
    const Frame c = resize_bilinear(Frame(5, 7, 0.375f), 13, 3);
    for (float v : c.data) CHECK(v == doctest::Approx(0.375f).epsilon(1e-7));

    Frame ramp(1, 2);
    ramp.at(0, 0) = 0.0f;
    ramp.at(0, 1) = 1.0f;
    const Frame up = resize_bilinear(ramp, 1, 3);
    CHECK(up.at(0, 0) == doctest::Approx(0.0).epsilon(1e-7));
    CHECK(up.at(0, 1) == doctest::Approx(0.5).epsilon(1e-7));
    CHECK(up.at(0, 2) == doctest::Approx(1.0).epsilon(1e-7));
}

TEST_CASE("video round trip preserves frame order") {
    testutil::TempDir tmp;
    VideoSequence seq;
    for (int i = 0; i < 3; ++i) seq.frames.emplace_back(8, 8, static_cast<float>(i) / 4.0f);
    const std::string dir = tmp.file("vid");
    save_video(seq, dir);
    const VideoSequence back = load_video(dir, {8, 8});
    REQUIRE(back.frames.size() == 3);
    for (int i = 0; i < 3; ++i) {
        CHECK(back.frames[i].at(4, 4) == doctest::Approx(i / 4.0).epsilon(2e-3));
    }
}

TEST_CASE("single-frame directory is rejected") {
    testutil::TempDir tmp;
    const std::string dir = tmp.file("vid");
    std::filesystem::create_directories(dir);
    save_frame(Frame(4, 4, 0.5f), dir + "/frame_0000.png");
    CHECK_THROWS_AS(load_video(dir, {4, 4}), FormatError);
}

TEST_CASE("missing file raises an io error") {
    CHECK_THROWS_AS(load_frame("/nonexistent/nope.png", {4, 4}), IoError);
}

TEST_CASE("frame pair indices are reproducible with exact separation") {
    const auto a = frame_pair_indices(256, 4, 64, 99);
    const auto b = frame_pair_indices(256, 4, 64, 99);
    REQUIRE(a.size() == 64);
    CHECK(a == b);
    std::set<int> starts;
    for (const auto& [t, u] : a) {
        CHECK(u == t + 4);
        CHECK(t >= 0);
        CHECK(t < 256 - 4);
        starts.insert(t);
    }
    CHECK(starts.size() > 30);  // with replacement but spread out

    const auto c = frame_pair_indices(256, 4, 64, 100);
    CHECK(a != c);
}

TEST_CASE("zero separation pairs a frame with itself") {
    for (const auto& [t, u] : frame_pair_indices(10, 0, 20, 1)) CHECK(t == u);
}

TEST_CASE("sequence shorter than separation is rejected") {
    CHECK_THROWS_AS(frame_pair_indices(4, 4, 1, 0), ArgumentError);
    CHECK_THROWS_AS(frame_pair_indices(4, 5, 1, 0), ArgumentError);
}
