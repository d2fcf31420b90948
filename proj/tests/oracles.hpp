#pragma once

// Independent scalar reimplementations shared by the unit tests and the
// acceptance runner. They deliberately avoid the library's helpers.

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <vector>

#include "incrseg/arcl.hpp"
#include "incrseg/dcpl.hpp"
#include "incrseg/trainer.hpp"

namespace testing {

// ---------------------------------------------------------------- ARCL ----

struct ArclInstance {
  incrseg::Tensor snapshot_feats;  // B×D×H×W
  incrseg::Tensor live_feats;
  incrseg::PredictionMap snapshot_preds;
  incrseg::PredictionMap live_preds;
  std::vector<int> old_classes;
  std::vector<int> new_classes;
};

inline incrseg::PredictionMap random_prediction_map(int b, int h, int w, int num_classes, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> label(0, num_classes - 1);
  std::uniform_real_distribution<double> conf(0.2, 1.0);
  incrseg::PredictionMap p{incrseg::LabelBatch(b, h, w), std::vector<double>(static_cast<std::size_t>(b) * h * w)};
  for (std::size_t i = 0; i < p.labels.size(); ++i) {
    p.labels.labels[i] = label(rng);
    // Coarse grid so confidence ties occur and the tie-break is exercised.
    p.confidence[i] = std::round(conf(rng) * 8.0) / 8.0;
  }
  return p;
}

// Features ≤ 4×8×8 and ≤ 5 classes (background plus up to 4 foreground).
inline ArclInstance random_arcl_instance(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> dim(1, 4), side(1, 8), classes(3, 5), batch(1, 2);
  const int d = dim(rng), h = side(rng), w = side(rng), k = classes(rng), b = batch(rng);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  ArclInstance inst;
  inst.snapshot_feats = incrseg::Tensor(incrseg::Shape{b, d, h, w});
  inst.live_feats = incrseg::Tensor(incrseg::Shape{b, d, h, w});
  for (std::size_t i = 0; i < inst.snapshot_feats.size(); ++i) {
    inst.snapshot_feats[i] = u(rng);
    inst.live_feats[i] = u(rng);
  }
  inst.snapshot_preds = random_prediction_map(b, h, w, k, rng);
  inst.live_preds = random_prediction_map(b, h, w, k, rng);
  const int old_count = std::uniform_int_distribution<int>(1, k - 2)(rng);
  for (int c = 1; c <= old_count; ++c) inst.old_classes.push_back(c);
  for (int c = old_count + 1; c < k; ++c) inst.new_classes.push_back(c);
  return inst;
}

struct OraclePixel {
  int n, y, x;
};

// Selection sort: repeatedly take the highest confidence, earliest in
// row-major order on ties.
inline std::vector<OraclePixel> oracle_region(const incrseg::PredictionMap& p, const std::vector<int>& members) {
  const auto& lb = p.labels;
  std::vector<std::size_t> flat;
  for (std::size_t i = 0; i < lb.size(); ++i) {
    if (std::find(members.begin(), members.end(), lb.labels[i]) != members.end()) flat.push_back(i);
  }
  std::vector<bool> taken(flat.size(), false);
  std::vector<OraclePixel> out;
  for (std::size_t round = 0; round < flat.size(); ++round) {
    std::size_t best = flat.size();
    for (std::size_t j = 0; j < flat.size(); ++j) {
      if (taken[j]) continue;
      if (best == flat.size() || p.confidence[flat[j]] > p.confidence[flat[best]]) best = j;
    }
    taken[best] = true;
    const std::size_t i = flat[best];
    const int plane = lb.height * lb.width;
    out.push_back({static_cast<int>(i / plane), static_cast<int>(i % plane) / lb.width,
                   static_cast<int>(i % plane) % lb.width});
  }
  return out;
}

struct ArclOracleResult {
  double loss = 0.0;
  int used = 0;
  int skipped = 0;
};

inline ArclOracleResult arcl_oracle(const ArclInstance& inst, const std::vector<int>& anchor_classes, double margin) {
  ArclOracleResult r;
  const int d = inst.live_feats.dim(1);
  double total = 0.0;
  for (int cls : anchor_classes) {
    std::vector<int> negatives;
    for (int k : inst.new_classes) {
      if (k != cls) negatives.push_back(k);
    }
    const auto a = oracle_region(inst.snapshot_preds, {cls});
    const auto p = oracle_region(inst.live_preds, {cls});
    const auto n = oracle_region(inst.live_preds, negatives);
    const std::size_t keep = std::min({a.size(), p.size(), n.size()});
    if (keep == 0) {
      ++r.skipped;
      continue;
    }
    double ap = 0.0, an = 0.0;
    for (std::size_t j = 0; j < keep; ++j) {
      for (int c = 0; c < d; ++c) {
        const double av = inst.snapshot_feats.at(a[j].n, c, a[j].y, a[j].x);
        const double pv = inst.live_feats.at(p[j].n, c, p[j].y, p[j].x);
        const double nv = inst.live_feats.at(n[j].n, c, n[j].y, n[j].x);
        ap += (av - pv) * (av - pv);
        an += (av - nv) * (av - nv);
      }
    }
    total += std::max(std::sqrt(ap) - std::sqrt(an) + margin, 0.0);
    ++r.used;
  }
  r.loss = r.used > 0 ? total / r.used : 0.0;
  return r;
}

// ---------------------------------------------------------------- DCPL ----

// Random per-pixel simplex over k channels: softmax of uniform logits times
// `sharpness`. Large sharpness gives near one-hot maps with stable scores.
inline incrseg::Tensor random_probability_map(int b, int k, int h, int w, double sharpness, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  incrseg::Tensor p(incrseg::Shape{b, k, h, w});
  for (int n = 0; n < b; ++n) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        double s = 0.0;
        for (int c = 0; c < k; ++c) s += (p.at(n, c, y, x) = std::exp(sharpness * u(rng)));
        for (int c = 0; c < k; ++c) p.at(n, c, y, x) /= s;
      }
    }
  }
  return p;
}

struct DcplOracleResult {
  std::map<int, double> tau;
  std::vector<int> labels;
  std::vector<incrseg::LabelSource> source;
};

inline DcplOracleResult dcpl_oracle(const incrseg::Tensor& probs, const std::vector<int>& gt,
                                    const std::vector<int>& old_classes, double big_gamma, double sigma,
                                    double epsilon) {
  const int b = probs.dim(0), k = probs.dim(1), h = probs.dim(2), w = probs.dim(3);
  std::vector<int> argmax;
  for (int n = 0; n < b; ++n) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        int best = 0;
        for (int c = 1; c < k; ++c) {
          if (probs.at(n, c, y, x) > probs.at(n, best, y, x)) best = c;
        }
        argmax.push_back(best);
      }
    }
  }
  const auto score = [&](std::size_t i, int c) {
    const int plane = h * w;
    return probs.at(static_cast<int>(i / plane), c, static_cast<int>(i % plane) / w, static_cast<int>(i % plane) % w);
  };
  DcplOracleResult r;
  for (int c : old_classes) {
    std::vector<double> scores;
    for (std::size_t i = 0; i < argmax.size(); ++i) {
      if (argmax[i] == c) scores.push_back(score(i, c));
    }
    double tau = big_gamma;
    if (!scores.empty()) {
      const double lo = *std::min_element(scores.begin(), scores.end());
      const double hi = *std::max_element(scores.begin(), scores.end());
      double mean = 0.0;
      for (double s : scores) mean += s;
      mean /= static_cast<double>(scores.size());
      const double delta = hi - lo;
      if (lo >= epsilon) tau = (delta == 0.0 || mean / delta >= sigma) ? lo : std::max(big_gamma, lo);
    }
    r.tau[c] = tau;
  }
  for (std::size_t i = 0; i < argmax.size(); ++i) {
    const int c = argmax[i];
    const bool pseudo = c != 0 && r.tau.count(c) && score(i, c) > r.tau[c];
    if (gt[i] != 0) {
      r.labels.push_back(gt[i]);
      r.source.push_back(incrseg::LabelSource::ground_truth);
    } else if (pseudo) {
      r.labels.push_back(c);
      r.source.push_back(incrseg::LabelSource::pseudo);
    } else {
      r.labels.push_back(0);
      r.source.push_back(incrseg::LabelSource::background);
    }
  }
  return r;
}


// ------------------------------------------------------------- trainer ----

// Plain cross-entropy fine-tuning of `start` on step `step`, written without
// the library's training loop: same shuffle/flip draws, normalisation, poly
// learning rate and momentum SGD. Returns the per-iteration losses.
inline std::vector<double> reference_finetune_losses(const incrseg::TapModel& start,
                                                     const std::vector<incrseg::LabeledSample>& train,
                                                     const incrseg::TaskSchedule& schedule, int step,
                                                     const incrseg::TrainConfig& cfg) {
  using namespace incrseg;
  TapModel model = start.clone(true);
  std::vector<LabeledSample> data;
  for (std::size_t i : select_step_samples(train, schedule, step)) data.push_back(remap_labels(train[i], schedule, step));

  const auto channel_of = [&](int class_id) {
    for (std::size_t i = 0; i < schedule.class_order.size(); ++i) {
      if (schedule.class_order[i] == class_id) return static_cast<int>(i) + 1;
    }
    return 0;
  };

  std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32),
                    static_cast<std::uint32_t>(step), 0x73746570u};
  std::mt19937_64 rng(seq);
  std::bernoulli_distribution coin(0.5);

  std::vector<Var> params;
  for (const auto& p : model.parameters()) params.push_back(p.value);
  std::vector<std::vector<double>> buffers(params.size());

  const std::size_t bs = static_cast<std::size_t>(cfg.batch_size);
  const std::size_t per_epoch = (data.size() + bs - 1) / bs;
  const double total = static_cast<double>(per_epoch * cfg.epochs_per_step);
  std::vector<double> losses;
  for (int epoch = 0; epoch < cfg.epochs_per_step; ++epoch) {
    std::vector<std::size_t> order(data.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start_at = 0; start_at < order.size(); start_at += bs) {
      const std::size_t n = std::min(bs, order.size() - start_at);
      std::vector<bool> flip(n, false);
      for (std::size_t b = 0; b < n && cfg.hflip; ++b) flip[b] = coin(rng);
      const LabeledSample& first = data[order[start_at]];
      const int h = first.height, w = first.width;
      Tensor images(Shape{static_cast<int>(n), 3, h, w});
      LabelBatch labels(static_cast<int>(n), h, w);
      for (std::size_t b = 0; b < n; ++b) {
        const LabeledSample& s = data[order[start_at + b]];
        for (int y = 0; y < h; ++y) {
          for (int x = 0; x < w; ++x) {
            const int src = flip[b] ? w - 1 - x : x;
            for (int c = 0; c < 3; ++c) images.at(static_cast<int>(b), c, y, x) = (s.image.at(c, y, src) - 0.5) / 0.25;
            labels.at(static_cast<int>(b), y, x) = channel_of(s.mask[static_cast<std::size_t>(y) * w + src]);
          }
        }
      }
      const double lr = cfg.base_lr * std::pow(1.0 - static_cast<double>(losses.size()) / total, cfg.poly_power);
      for (Var& p : params) p.zero_grad();
      const Var loss = ops::cross_entropy(model.forward(Var::constant(images), false).logits, labels);
      backward(loss);
      losses.push_back(loss.item());
      for (std::size_t i = 0; i < params.size(); ++i) {
        if (!params[i].has_grad()) continue;
        const Tensor g = params[i].grad();
        Tensor& v = params[i].mutable_value();
        std::vector<double>& buf = buffers[i];
        const bool first_update = buf.empty();
        buf.resize(v.size());
        for (std::size_t k = 0; k < v.size(); ++k) {
          const double d = g[k] + cfg.weight_decay * v[k];
          buf[k] = first_update ? d : cfg.momentum * buf[k] + d;
          v[k] -= lr * buf[k];
        }
      }
    }
  }
  return losses;
}

}  // namespace testing
