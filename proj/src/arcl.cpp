#include "incrseg/arcl.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "incrseg/error.hpp"

namespace incrseg {

void validate(const ArclConfig& cfg) {
  if (!(cfg.margin >= 0.0)) throw Error(ErrorCode::ContractError, "ARCL margin must be non-negative");
  if (cfg.max_anchor_classes < 1) throw Error(ErrorCode::ContractError, "max_anchor_classes must be >= 1");
}

PredictionMap predictions_from_logits(const Tensor& coarse_logits) {
  if (coarse_logits.rank() != 4) throw Error(ErrorCode::ShapeError, "predictions_from_logits expects N×C×H×W");
  const int n = coarse_logits.dim(0), c = coarse_logits.dim(1), h = coarse_logits.dim(2), w = coarse_logits.dim(3);
  const Tensor probs = ops::softmax_channels(coarse_logits);
  PredictionMap out{LabelBatch(n, h, w), std::vector<double>(static_cast<std::size_t>(n) * h * w)};
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (int b = 0; b < n; ++b) {
    for (std::size_t i = 0; i < plane; ++i) {
      int best = 0;
      double best_p = probs[static_cast<std::size_t>(b) * c * plane + i];
      for (int k = 1; k < c; ++k) {
        const double p = probs[(static_cast<std::size_t>(b) * c + k) * plane + i];
        if (p > best_p) {
          best_p = p;
          best = k;
        }
      }
      out.labels.labels[static_cast<std::size_t>(b) * plane + i] = best;
      out.confidence[static_cast<std::size_t>(b) * plane + i] = best_p;
    }
  }
  return out;
}

ClassMask class_mask(const LabelBatch& pred_map, int class_id) {
  ClassMask out{class_id, LabelBatch(pred_map.batch, pred_map.height, pred_map.width)};
  for (std::size_t i = 0; i < pred_map.size(); ++i) out.mask.labels[i] = pred_map.labels[i] == class_id ? 1 : 0;
  return out;
}

namespace {

void check_alignment(const Var& feats, const PredictionMap& preds, const char* what) {
  if (feats.value().rank() != 4 || preds.labels.batch != feats.dim(0) || preds.labels.height != feats.dim(2) ||
      preds.labels.width != feats.dim(3) || preds.confidence.size() != preds.labels.size()) {
    throw Error(ErrorCode::ShapeError, std::string(what) + " predictions do not align with features " +
                                           shape_string(feats.shape()));
  }
}

// Pixels satisfying `member`, ranked by descending confidence; the
// row-major scan plus stable sort provides the tie-break.
template <typename Member>
std::vector<ops::PixelIndex> ranked_region(const PredictionMap& preds, Member member) {
  struct Entry {
    ops::PixelIndex index;
    double confidence;
  };
  std::vector<Entry> entries;
  const LabelBatch& lb = preds.labels;
  for (int n = 0; n < lb.batch; ++n) {
    for (int y = 0; y < lb.height; ++y) {
      for (int x = 0; x < lb.width; ++x) {
        const std::size_t i = (static_cast<std::size_t>(n) * lb.height + y) * lb.width + x;
        if (member(lb.labels[i])) entries.push_back({{n, y, x}, preds.confidence[i]});
      }
    }
  }
  std::stable_sort(entries.begin(), entries.end(),
                   [](const Entry& a, const Entry& b) { return a.confidence > b.confidence; });
  std::vector<ops::PixelIndex> out;
  out.reserve(entries.size());
  for (const Entry& e : entries) out.push_back(e.index);
  return out;
}

}  // namespace

std::optional<RegionEmbeddingTriple> select_region_embeddings(const Var& snapshot_feats, const Var& live_feats,
                                                              const PredictionMap& snapshot_preds,
                                                              const PredictionMap& live_preds, int anchor_class,
                                                              const std::vector<int>& negative_classes) {
  if (snapshot_feats.shape() != live_feats.shape()) {
    throw Error(ErrorCode::ShapeError, "snapshot features " + shape_string(snapshot_feats.shape()) +
                                           " vs live features " + shape_string(live_feats.shape()));
  }
  check_alignment(snapshot_feats, snapshot_preds, "snapshot");
  check_alignment(live_feats, live_preds, "live");

  std::set<int> negatives(negative_classes.begin(), negative_classes.end());
  negatives.erase(anchor_class);

  RegionEmbeddingTriple triple;
  triple.class_id = anchor_class;
  triple.anchor_pixels = ranked_region(snapshot_preds, [&](int v) { return v == anchor_class; });
  triple.positive_pixels = ranked_region(live_preds, [&](int v) { return v == anchor_class; });
  triple.negative_pixels = ranked_region(live_preds, [&](int v) { return negatives.count(v) > 0; });
  const std::size_t keep =
      std::min({triple.anchor_pixels.size(), triple.positive_pixels.size(), triple.negative_pixels.size()});
  if (keep == 0) return std::nullopt;
  triple.anchor_pixels.resize(keep);
  triple.positive_pixels.resize(keep);
  triple.negative_pixels.resize(keep);

  triple.anchor = ops::gather_pixels(snapshot_feats.detach(), triple.anchor_pixels);
  triple.positive = ops::gather_pixels(live_feats, triple.positive_pixels);
  triple.negative = ops::gather_pixels(live_feats, triple.negative_pixels);
  triple.length = static_cast<int>(keep) * live_feats.dim(1);
  return triple;
}

ArclResult arcl_loss_from_features(const Var& snapshot_feats, const Var& live_feats,
                                   const PredictionMap& snapshot_preds, const PredictionMap& live_preds,
                                   const std::vector<int>& old_classes, const std::vector<int>& new_classes,
                                   const ArclConfig& cfg, std::mt19937_64& rng) {
  validate(cfg);
  if (old_classes.empty() || new_classes.empty()) {
    throw Error(ErrorCode::ContractError, "contrastive loss needs previously learned and current classes (step >= 1)");
  }

  std::vector<int> candidates = old_classes;
  std::sort(candidates.begin(), candidates.end());
  if (static_cast<int>(candidates.size()) > cfg.max_anchor_classes) {
    // Partial Fisher-Yates: first max_anchor_classes entries form a uniform sample.
    for (int i = 0; i < cfg.max_anchor_classes; ++i) {
      std::uniform_int_distribution<int> pick(i, static_cast<int>(candidates.size()) - 1);
      std::swap(candidates[i], candidates[pick(rng)]);
    }
    candidates.resize(cfg.max_anchor_classes);
    std::sort(candidates.begin(), candidates.end());
  }

  ArclResult result;
  result.sampled_classes = candidates;
  Var acc;
  for (int cls : candidates) {
    auto triple = select_region_embeddings(snapshot_feats, live_feats, snapshot_preds, live_preds, cls, new_classes);
    if (!triple) {
      ++result.classes_skipped;
      continue;
    }
    Var gap = ops::sub(ops::l2_distance(triple->anchor, triple->positive),
                       ops::l2_distance(triple->anchor, triple->negative));
    Var term = ops::relu(ops::add_scalar(gap, cfg.margin));
    acc = acc.defined() ? ops::add(acc, term) : term;
    ++result.classes_used;
  }
  if (result.classes_used == 0) {
    result.skipped_all = true;
    result.loss = Var::constant(Tensor::scalar(0.0));
  } else {
    result.loss = ops::scale(acc, 1.0 / result.classes_used);
  }
  return result;
}

ArclResult arcl_loss(const TapOutputs& snapshot_out, const TapOutputs& live_out, const std::vector<int>& old_classes,
                     const std::vector<int>& new_classes, const ArclConfig& cfg, std::mt19937_64& rng) {
  return arcl_loss_from_features(snapshot_out.out_embedding, live_out.out_embedding,
                                 predictions_from_logits(snapshot_out.coarse_logits.value()),
                                 predictions_from_logits(live_out.coarse_logits.value()), old_classes, new_classes, cfg,
                                 rng);
}

ArclResult arcl_loss(const StepSnapshot& snapshot, const TapModel& model, const Var& batch,
                     const std::vector<int>& old_classes, const std::vector<int>& new_classes, const ArclConfig& cfg,
                     std::mt19937_64& rng) {
  return arcl_loss(snapshot.model.forward(batch, false), model.forward(batch, false), old_classes, new_classes, cfg,
                   rng);
}

}  // namespace incrseg
