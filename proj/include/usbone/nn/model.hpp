#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "usbone/nn/ops.hpp"

namespace usbone::nn {

// Encoder/decoder widths are fixed; the tunable knobs live here.
struct NetworkSpec {
    int K = 10;                  // keypoint count
    int in_channels = 4;         // ScaleStack channels (TGA + scales)
    double heatmap_sigma = 0.1;  // Gaussian std in normalized coords
    bool reconstruct_all_channels = false;
};

// Named parameters in registration order; order defines checkpoint layout
// and optimizer state alignment.
class ParamStore {
public:
    TensorPtr add(const std::string& name, int n, int c, int h, int w, bool requires_grad = true);
    TensorPtr get(const std::string& name) const;
    bool has(const std::string& name) const;

    const std::vector<std::pair<std::string, TensorPtr>>& items() const { return items_; }
    std::vector<TensorPtr> trainable() const;
    void zero_grad();

private:
    std::vector<std::pair<std::string, TensorPtr>> items_;
};

// Registers all parameters for the three networks and initializes weights
// with centered uniform fan-in scaling from a seeded generator.
void init_params(ParamStore& store, const NetworkSpec& spec, std::uint64_t seed);

// Feature-fusion encoder: 6 blocks, widths [32,32,64,64,128,128], stride 2
// at blocks 3 and 5; input resolution / 4, 128 channels out.
TensorPtr ffcnn_forward(Tape* tape, const ParamStore& store, const TensorPtr& x, bool training);

// Keypoint network: mirrors the encoder, 1x1 head to K channels, spatial
// softmax to coords in [-1,1], Gaussian heatmaps with peak 1.
// Returns (coords [N,K,2,1], heatmaps [N,K,h/4,w/4]).
std::pair<TensorPtr, TensorPtr> keynet_forward(Tape* tape, const ParamStore& store,
                                               const TensorPtr& x, const NetworkSpec& spec,
                                               bool training);

// Reconstructor: widths reversed with two nearest 2x upsamplings (after
// blocks 2 and 4), final block conv-only into a sigmoid.
TensorPtr refinenet_forward(Tape* tape, const ParamStore& store, const TensorPtr& psi_hat,
                            bool training);

// Checkpoint: "USTP", version u32, then per record: name length u32, name
// bytes, rank u32, dims u32 each, f32 values. All little-endian.
void save_checkpoint(const ParamStore& store, const std::string& path);
void load_checkpoint(ParamStore& store, const std::string& path);

}  // namespace usbone::nn
