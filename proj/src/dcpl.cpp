#include "incrseg/dcpl.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "incrseg/error.hpp"
#include "incrseg/ops.hpp"

namespace incrseg {

const char* to_string(PseudoLabelMode mode) {
  switch (mode) {
    case PseudoLabelMode::none: return "none";
    case PseudoLabelMode::fixed: return "fixed";
    case PseudoLabelMode::dynamic: return "dynamic";
  }
  return "unknown";
}

PseudoLabelMode parse_pseudo_label_mode(const std::string& text) {
  if (text == "none") return PseudoLabelMode::none;
  if (text == "fixed") return PseudoLabelMode::fixed;
  if (text == "dynamic") return PseudoLabelMode::dynamic;
  throw Error(ErrorCode::ConfigError, "unknown pseudo-label mode '" + text + "'");
}

const char* to_string(ThresholdBranch branch) {
  switch (branch) {
    case ThresholdBranch::stable: return "stable";
    case ThresholdBranch::unstable: return "unstable";
    case ThresholdBranch::floor: return "floor";
  }
  return "unknown";
}

void validate(const DcplConfig& cfg) {
  if (!(cfg.epsilon > 0.0 && cfg.epsilon <= cfg.big_gamma && cfg.big_gamma < 1.0)) {
    throw Error(ErrorCode::ContractError, "pseudo-labelling needs 0 < epsilon <= big_gamma < 1");
  }
  if (!(cfg.sigma > 0.0)) throw Error(ErrorCode::ContractError, "sigma must be positive");
  if (!(cfg.fixed_threshold > 0.0 && cfg.fixed_threshold < 1.0)) {
    throw Error(ErrorCode::ContractError, "fixed_threshold must lie in (0,1)");
  }
}

namespace {

void require_probs(const Tensor& probs) {
  if (probs.rank() != 4) throw Error(ErrorCode::ShapeError, "expected N×K×H×W probabilities");
}

// Arg-max with ties resolved to the lowest channel.
int argmax_at(const Tensor& probs, int b, std::size_t i, std::size_t plane) {
  const int k = probs.dim(1);
  const std::size_t base = static_cast<std::size_t>(b) * k * plane + i;
  int best = 0;
  for (int c = 1; c < k; ++c) {
    if (probs[base + c * plane] > probs[base + best * plane]) best = c;
  }
  return best;
}

}  // namespace

ClassStats class_score_stats(const Tensor& old_probs, int class_id) {
  require_probs(old_probs);
  ClassStats stats;
  stats.class_id = class_id;
  const int n = old_probs.dim(0), k = old_probs.dim(1);
  if (class_id < 0 || class_id >= k) return stats;
  const std::size_t plane = static_cast<std::size_t>(old_probs.dim(2)) * old_probs.dim(3);
  double lo = std::numeric_limits<double>::infinity(), hi = -lo, total = 0.0;
  for (int b = 0; b < n; ++b) {
    for (std::size_t i = 0; i < plane; ++i) {
      if (argmax_at(old_probs, b, i, plane) != class_id) continue;
      const double p = old_probs[(static_cast<std::size_t>(b) * k + class_id) * plane + i];
      lo = std::min(lo, p);
      hi = std::max(hi, p);
      total += p;
      ++stats.pixel_count;
    }
  }
  if (stats.pixel_count == 0) return stats;
  stats.defined = true;
  stats.u_low = lo;
  stats.u_high = hi;
  stats.u_mean = total / static_cast<double>(stats.pixel_count);
  stats.delta = std::fabs(hi - lo);
  return stats;
}

Threshold dynamic_threshold(const ClassStats& stats, const DcplConfig& cfg) {
  if (!stats.defined || stats.u_low < cfg.epsilon) return {cfg.big_gamma, ThresholdBranch::floor};
  // Δ = 0 counts as an infinite ratio.
  const bool stable = stats.delta == 0.0 || stats.u_mean / stats.delta >= cfg.sigma;
  if (stable) return {stats.u_low, ThresholdBranch::stable};
  return {std::max(cfg.big_gamma, stats.u_low), ThresholdBranch::unstable};
}

LabelBatch generate_pseudo_labels(const Tensor& old_probs, const std::map<int, double>& thresholds) {
  require_probs(old_probs);
  const int n = old_probs.dim(0), k = old_probs.dim(1), h = old_probs.dim(2), w = old_probs.dim(3);
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  LabelBatch out(n, h, w, 0);
  for (int b = 0; b < n; ++b) {
    for (std::size_t i = 0; i < plane; ++i) {
      const int c = argmax_at(old_probs, b, i, plane);
      auto it = thresholds.find(c);
      if (it == thresholds.end() || c == 0) continue;
      if (old_probs[(static_cast<std::size_t>(b) * k + c) * plane + i] > it->second) {
        out.labels[static_cast<std::size_t>(b) * plane + i] = c;
      }
    }
  }
  return out;
}

SupervisionMask fuse_labels(const LabelBatch& pseudo, const LabelBatch& gt_current) {
  if (pseudo.batch != gt_current.batch || pseudo.height != gt_current.height || pseudo.width != gt_current.width) {
    throw Error(ErrorCode::ShapeError, "pseudo-label and ground-truth extents differ");
  }
  SupervisionMask out{LabelBatch(gt_current.batch, gt_current.height, gt_current.width),
                      std::vector<LabelSource>(gt_current.size(), LabelSource::background)};
  for (std::size_t i = 0; i < gt_current.size(); ++i) {
    if (gt_current.labels[i] != 0) {
      out.labels.labels[i] = gt_current.labels[i];
      out.source[i] = LabelSource::ground_truth;
    } else if (pseudo.labels[i] != 0) {
      out.labels.labels[i] = pseudo.labels[i];
      out.source[i] = LabelSource::pseudo;
    }
  }
  return out;
}

std::map<int, double> pseudo_label_thresholds(const Tensor& old_probs, const std::vector<int>& old_classes,
                                              const DcplConfig& cfg, std::vector<ThresholdRecord>* records) {
  std::map<int, double> thresholds;
  if (cfg.mode == PseudoLabelMode::none) return thresholds;
  for (int c : old_classes) {
    if (cfg.mode == PseudoLabelMode::fixed) {
      thresholds[c] = cfg.fixed_threshold;
      continue;
    }
    const ClassStats stats = class_score_stats(old_probs, c);
    const Threshold t = dynamic_threshold(stats, cfg);
    thresholds[c] = t.tau;
    if (records) records->push_back({stats, t});
  }
  return thresholds;
}

Var seg_loss(const Var& logits, const SupervisionMask& supervision) {
  return ops::cross_entropy(logits, supervision.labels);
}

Var total_loss(const Var& seg, const Var& dada, const Var& arcl, int step) {
  for (const Var* v : {&seg, &dada, &arcl}) {
    if (v->defined() && !std::isfinite(v->item())) {
      throw Error(ErrorCode::NumericError, "non-finite loss component");
    }
  }
  if (step == 0) return seg;
  return ops::add(ops::add(seg, dada), arcl);
}

}  // namespace incrseg
