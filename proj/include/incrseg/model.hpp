#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "incrseg/autograd.hpp"
#include "incrseg/ops.hpp"

namespace incrseg {

struct ModelConfig {
  int in_channels = 3;
  // One entry per encoder stage; every stage halves the resolution, so four
  // stages give the stride-16 deepest features.
  std::vector<int> stage_widths{16, 32, 48, 64};
  int convs_per_stage = 1;
  // Encoder stages whose outputs are tapped for distillation, 0-based.
  // The default skips the first stage and taps the remaining three.
  int first_tap_stage = 1;
  int embed_channels = 64;        // N_d, width of the pre-classifier embedding
  int layer_embed_channels = 32;  // width of the per-tap context embeddings
  double new_class_noise = 1e-3;  // std of the noise added to copied background weights
};

struct Conv2d {
  Var weight;
  Var bias;  // undefined for bias-free convolutions
  ops::ConvGeometry geometry;

  Var operator()(const Var& x) const { return ops::conv2d(x, weight, bias, geometry); }
};

struct NamedParameter {
  std::string name;
  Var value;
};

struct TapOutputs {
  std::vector<Var> layer_embeddings;  // e_l, one per tap, shallow to deep
  std::vector<Var> layer_logits;      // layer_heads applied to e_l
  Var out_embedding;                  // F_d, input of the classifier
  Var coarse_logits;                  // classifier at the deepest resolution
  Var logits;                         // coarse logits resized to the input size
};

// Segmentation network with tapped encoder stages. Convolutions outside the
// classification heads carry no bias and every activation maps 0 to 0, so an
// all-zero input yields logits equal to the classifier bias.
class TapModel {
 public:
  TapModel() = default;
  TapModel(ModelConfig config, int num_classes, std::uint64_t init_seed);

  const ModelConfig& config() const { return config_; }
  // Foreground classes currently predicted; the classifier has one more
  // channel for background.
  int num_classes() const { return num_classes_; }
  int num_outputs() const { return num_classes_ + 1; }
  int num_taps() const { return static_cast<int>(tap_contexts_.size()); }
  int output_stride() const { return 1 << static_cast<int>(stages_.size()); }

  // Deterministic order; names are stable across steps.
  std::vector<NamedParameter> parameters() const;
  std::size_t parameter_count() const;

  // Forward pass; the tapped context heads are evaluated only when
  // `with_taps` is set.
  TapOutputs forward(const Var& batch, bool with_taps = true) const;

  // Appends `count` classifier and layer-head channels initialised from the
  // background channel plus Gaussian noise.
  void extend_classifier(int count, std::uint64_t noise_seed);

  // Deep copy. With trainable = false every parameter becomes a constant.
  TapModel clone(bool trainable) const;

  // Replaces parameter values by name; shapes must match.
  void load_parameters(const std::vector<std::pair<std::string, Tensor>>& values);

 private:
  struct ContextHead {
    Conv2d pointwise;
    Conv2d dilated;
    Conv2d pooled;
  };
  struct Aspp {
    Conv2d pointwise;
    Conv2d rate1;
    Conv2d rate2;
    Conv2d pooled;
    Conv2d project;
  };

  template <typename Fn>
  void for_each_conv(Fn&& fn) const;
  template <typename Fn>
  void for_each_conv(Fn&& fn);

  ModelConfig config_;
  int num_classes_ = 0;
  std::vector<std::vector<Conv2d>> stages_;
  Aspp aspp_;
  std::vector<ContextHead> tap_contexts_;
  std::vector<Conv2d> layer_heads_;
  Conv2d classifier_;
};

struct StepSnapshot {
  TapModel model;
  int step_index = 0;
};

TapOutputs forward_with_taps(const TapModel& model, const Var& batch);
TapModel extend_classifier(const TapModel& model, int new_class_count, std::uint64_t noise_seed);
StepSnapshot freeze_snapshot(const TapModel& model, int step);

}  // namespace incrseg
