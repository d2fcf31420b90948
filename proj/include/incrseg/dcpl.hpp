#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "incrseg/autograd.hpp"

namespace incrseg {

// Class arguments are classifier channel indices of the previous-step model.

enum class PseudoLabelMode {
  none,     // no pseudo-labels: plain fine-tuning supervision
  fixed,    // one threshold for every class
  dynamic,  // class-specific per-batch thresholds
};

const char* to_string(PseudoLabelMode mode);
PseudoLabelMode parse_pseudo_label_mode(const std::string& text);

struct DcplConfig {
  PseudoLabelMode mode = PseudoLabelMode::dynamic;
  double fixed_threshold = 0.7;  // used when mode == fixed
  double big_gamma = 0.7;        // floor threshold Γ
  double sigma = 4.0;            // stability ratio σ
  double epsilon = 0.5;          // minimum confidence ε
};

void validate(const DcplConfig& cfg);

struct ClassStats {
  int class_id = 0;
  double u_low = 0.0;
  double u_high = 0.0;
  double u_mean = 0.0;
  double delta = 0.0;
  std::size_t pixel_count = 0;
  bool defined = false;  // false when no pixel is assigned to the class
};

// Score statistics of p(c) over the pixels whose arg-max is c.
ClassStats class_score_stats(const Tensor& old_probs, int class_id);

enum class ThresholdBranch : std::uint8_t {
  stable,    // mean/Δ >= σ and u_low >= ε: τ = u_low
  unstable,  // mean/Δ <  σ and u_low >= ε: τ = max(Γ, u_low)
  floor,     // otherwise: τ = Γ
};

const char* to_string(ThresholdBranch branch);

struct Threshold {
  double tau = 0.0;
  ThresholdBranch branch = ThresholdBranch::floor;
};

Threshold dynamic_threshold(const ClassStats& stats, const DcplConfig& cfg);

// Pixel i gets class c iff arg-max p_i = c, c has a threshold, and
// p_i(c) > τ_c. Everything else is 0 (unlabelled).
LabelBatch generate_pseudo_labels(const Tensor& old_probs, const std::map<int, double>& thresholds);

enum class LabelSource : std::uint8_t { background, ground_truth, pseudo };

struct SupervisionMask {
  LabelBatch labels;
  std::vector<LabelSource> source;
};

// Ground truth wins; pseudo-labels fill the remaining pixels; the rest is
// background.
SupervisionMask fuse_labels(const LabelBatch& pseudo, const LabelBatch& gt_current);

// Per-class debug row for the threshold dump.
struct ThresholdRecord {
  ClassStats stats;
  Threshold threshold;
};

// Thresholds for `old_classes` under cfg.mode (empty map for mode none).
std::map<int, double> pseudo_label_thresholds(const Tensor& old_probs, const std::vector<int>& old_classes,
                                              const DcplConfig& cfg, std::vector<ThresholdRecord>* records = nullptr);

// Mean per-pixel cross-entropy; background pixels are supervised as class 0.
Var seg_loss(const Var& logits, const SupervisionMask& supervision);

// Step 0: seg alone. Later steps: seg + dada + arcl.
Var total_loss(const Var& seg, const Var& dada, const Var& arcl, int step);

}  // namespace incrseg
