#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "incrseg/model.hpp"

namespace incrseg {

// Class arguments in this module are classifier channel indices
// (0 = background).

struct ArclConfig {
  bool enabled = true;
  double margin = 1.0;
  int max_anchor_classes = 10;
};

void validate(const ArclConfig& cfg);

// Arg-max labels and their softmax confidence at the deepest resolution.
struct PredictionMap {
  LabelBatch labels;
  std::vector<double> confidence;  // same layout as labels
};

// Ties resolve to the lowest channel index.
PredictionMap predictions_from_logits(const Tensor& coarse_logits);

struct ClassMask {
  int class_id = 0;
  LabelBatch mask;  // 1 where the prediction equals class_id, else 0
};

ClassMask class_mask(const LabelBatch& pred_map, int class_id);

struct RegionEmbeddingTriple {
  int class_id = 0;
  Var anchor;    // from snapshot features, constant
  Var positive;  // from live features
  Var negative;  // from live features
  int length = 0;  // element count of each vector, N_d · kept pixels
  std::vector<ops::PixelIndex> anchor_pixels;
  std::vector<ops::PixelIndex> positive_pixels;
  std::vector<ops::PixelIndex> negative_pixels;
};

// Builds the anchor/positive/negative region vectors of `anchor_class`.
// Each region is ranked by descending confidence (row-major tie-break),
// truncated to the smallest region size and flattened pixel-major.
// Returns nullopt when any region is empty.
std::optional<RegionEmbeddingTriple> select_region_embeddings(const Var& snapshot_feats, const Var& live_feats,
                                                              const PredictionMap& snapshot_preds,
                                                              const PredictionMap& live_preds, int anchor_class,
                                                              const std::vector<int>& negative_classes);

struct ArclResult {
  Var loss;
  int classes_used = 0;
  int classes_skipped = 0;
  bool skipped_all = false;
  std::vector<int> sampled_classes;
};

// Mean hinge max(d(a,p) - d(a,n) + margin, 0) over the sampled anchor classes
// that produced a triple. Up to cfg.max_anchor_classes classes are drawn
// uniformly without replacement from `old_classes` using `rng`.
ArclResult arcl_loss_from_features(const Var& snapshot_feats, const Var& live_feats,
                                   const PredictionMap& snapshot_preds, const PredictionMap& live_preds,
                                   const std::vector<int>& old_classes, const std::vector<int>& new_classes,
                                   const ArclConfig& cfg, std::mt19937_64& rng);

ArclResult arcl_loss(const TapOutputs& snapshot_out, const TapOutputs& live_out, const std::vector<int>& old_classes,
                     const std::vector<int>& new_classes, const ArclConfig& cfg, std::mt19937_64& rng);

ArclResult arcl_loss(const StepSnapshot& snapshot, const TapModel& model, const Var& batch,
                     const std::vector<int>& old_classes, const std::vector<int>& new_classes, const ArclConfig& cfg,
                     std::mt19937_64& rng);

}  // namespace incrseg
