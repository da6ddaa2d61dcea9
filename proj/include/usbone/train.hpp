#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "usbone/bonemap.hpp"
#include "usbone/image.hpp"
#include "usbone/keypoints.hpp"
#include "usbone/nn/adam.hpp"
#include "usbone/nn/model.hpp"
#include "usbone/tga.hpp"

namespace usbone {

struct TrainConfig {
    int epochs = 100;
    double learning_rate = 0.001;
    double lr_decay = 0.95;   // multiplier applied every lr_decay_every epochs
    int lr_decay_every = 10;
    int batch_size = 16;
    int train_pairs = 1024;
    int val_pairs = 512;
    int pair_separation = 4;
    std::uint64_t seed = 1;
};

struct EpochMetrics {
    int epoch = 0;
    double lr = 0.0;
    double train_loss = 0.0;
    double val_loss = 0.0;
};

// One JSON-lines record per epoch: {"epoch":..,"lr":..,"train_loss":..,"val_loss":..}.
std::string metrics_to_jsonl(const std::vector<EpochMetrics>& metrics);

// Trains the transport pipeline on reconstruction loss over frame pairs
// (source x_t, target x_{t+separation}). Deterministic given cfg.seed.
// out_dir, when nonempty, receives per-epoch checkpoints and metrics.jsonl.
// Throws on non-finite loss.
std::vector<EpochMetrics> train(const std::vector<VideoSequence>& dataset, const TrainConfig& cfg,
                                const nn::NetworkSpec& spec, const BoneMapConfig& bonemap_cfg,
                                const TgaConfig& tga_cfg, nn::ParamStore& store,
                                const std::string& out_dir);

// Builds the scale stack for one frame and runs the keypoint network in
// eval mode.
KeypointSet infer_keypoints(const Frame& frame, const nn::ParamStore& store,
                            const nn::NetworkSpec& spec, const BoneMapConfig& bonemap_cfg,
                            const TgaConfig& tga_cfg = {});

}  // namespace usbone
