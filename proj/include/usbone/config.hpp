#pragma once

#include <string>

#include "usbone/bonemap.hpp"
#include "usbone/nn/model.hpp"
#include "usbone/phantom.hpp"
#include "usbone/tga.hpp"
#include "usbone/train.hpp"

namespace usbone {

// One JSON document carrying every tunable, grouped into sections named
// after their home module. All fields optional; absent ones keep defaults.
struct RunConfig {
    TgaConfig tga;
    BoneMapConfig bonemap;
    nn::NetworkSpec network;
    TrainConfig train;
    PhantomConfig phantom;
};

// Unknown keys at any level are rejected with an argument error.
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::string& path);

// Sorted keys, two-space indent, trailing newline. Parsing this output and
// re-serializing reproduces it byte for byte.
std::string canonical_json(const RunConfig& cfg);

}  // namespace usbone
