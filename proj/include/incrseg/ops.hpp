#pragma once

#include <vector>

#include "incrseg/autograd.hpp"

namespace incrseg::ops {

struct ConvGeometry {
  int stride = 1;
  int padding = 0;
  int dilation = 1;
};

// x: N×Cin×H×W, weight: Cout×Cin×kH×kW, bias: Cout (may be undefined).
Var conv2d(const Var& x, const Var& weight, const Var& bias, ConvGeometry geom);

Var relu(const Var& x);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var scale(const Var& x, double factor);
Var add_scalar(const Var& x, double value);
Var sum(const Var& x);
Var mean(const Var& x);

// Concatenates N×Ci×H×W inputs along the channel axis.
Var concat_channels(const std::vector<Var>& inputs);
Var slice_channels(const Var& x, int begin, int end);
Var global_avg_pool(const Var& x);
// N×C×1×1 → N×C×H×W.
Var broadcast_spatial(const Var& x, int height, int width);
// Bilinear resize with half-pixel centres (align_corners = false).
Var resize_bilinear(const Var& x, int height, int width);

// Softmax over the channel axis of N×C×H×W.
Var softmax_channels(const Var& x);
Tensor softmax_channels(const Tensor& x);

// Mean over the N·H·W pixels of KL(target ‖ probs), with both
// distributions floored at `floor` inside the logarithms.
Var kl_divergence(const Tensor& target, const Var& probs, double floor);

// Mean per-pixel cross-entropy; labels index channels of N×C×H×W logits.
Var cross_entropy(const Var& logits, const LabelBatch& labels);

struct PixelIndex {
  int n = 0;
  int y = 0;
  int x = 0;
};
// Gathers the channel vectors of the listed pixels into one flat vector of
// length pixels.size()·C, pixel-major.
Var gather_pixels(const Var& x, const std::vector<PixelIndex>& pixels);

// Euclidean norm of (a - b); both must have the same element count.
Var l2_distance(const Var& a, const Var& b);

}  // namespace incrseg::ops
