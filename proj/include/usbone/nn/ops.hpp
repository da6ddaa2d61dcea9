#pragma once

#include "usbone/nn/tensor.hpp"

namespace usbone::nn {

// All ops: output requires_grad iff tape != nullptr and any tracked input
// requires grad; backward closures accumulate into input->g.

// 3x3 or 1x1 convolution, zero padding, stride 1 or 2. wgt is
// [Co, Ci, k, k]; bias is [1, Co, 1, 1].
TensorPtr conv2d(Tape* tape, const TensorPtr& x, const TensorPtr& wgt, const TensorPtr& bias,
                 int stride, int pad);

// Per-channel batch normalization. Training mode normalizes with batch
// statistics and updates running stats in place (momentum 0.1 convention:
// running = 0.9*running + 0.1*batch, unbiased variance); eval mode uses the
// running stats. gamma/beta are [1, C, 1, 1].
TensorPtr batchnorm(Tape* tape, const TensorPtr& x, const TensorPtr& gamma, const TensorPtr& beta,
                    const TensorPtr& run_mean, const TensorPtr& run_var, bool training,
                    double momentum = 0.1, double eps = 1e-5);

TensorPtr relu(Tape* tape, const TensorPtr& x);
TensorPtr sigmoid(Tape* tape, const TensorPtr& x);

// Nearest-neighbor 2x spatial upsampling.
TensorPtr upsample_nearest2x(Tape* tape, const TensorPtr& x);

// Per-channel spatial softmax and expected coordinates in [-1,1].
// Input [N,K,h,w] -> output [N,K,2,1] with (row, col) per keypoint.
TensorPtr spatial_softmax_coords(Tape* tape, const TensorPtr& x);

// Renders isotropic Gaussians (std sigma in normalized coordinates, peak 1
// at the keypoint) on an h*w grid: coords [N,K,2,1] -> [N,K,h,w].
TensorPtr render_gaussians(Tape* tape, const TensorPtr& coords, int h, int w, double sigma);

// H = 1 - prod_k (1 - H_k): [N,K,h,w] -> [N,1,h,w].
TensorPtr combine_heatmaps(Tape* tape, const TensorPtr& heat);

// Feature transport: (1 - h_s)(1 - h_t) psi_s + h_t psi_t, heatmaps
// broadcast over channels. psi_s and h_s are treated as constants
// (source paths are non-learnable); gradients flow to psi_t and h_t.
TensorPtr transport(Tape* tape, const TensorPtr& psi_s, const TensorPtr& psi_t,
                    const TensorPtr& h_s, const TensorPtr& h_t);

// Mean over all elements of (pred - target)^2 -> [1,1,1,1].
TensorPtr mse_loss(Tape* tape, const TensorPtr& pred, const TensorPtr& target);

}  // namespace usbone::nn
