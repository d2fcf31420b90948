#include "incrseg/dada.hpp"

#include <cmath>

#include "incrseg/error.hpp"

namespace incrseg {

void validate(const AlwConfig& cfg) {
  if (!(cfg.gamma > 0.0 && cfg.gamma < 1.0)) throw Error(ErrorCode::ContractError, "ALW gamma must lie in (0,1)");
  if (!(cfg.alpha > 0.0)) throw Error(ErrorCode::ContractError, "ALW alpha must be positive");
  if (cfg.num_layers < 1 || cfg.total_epochs < 1) {
    throw Error(ErrorCode::ContractError, "ALW needs num_layers >= 1 and total_epochs >= 1");
  }
}

void validate(const DadaConfig& cfg) {
  validate(cfg.alw);
  if (!(cfg.lambda_out >= 0.0)) throw Error(ErrorCode::ContractError, "lambda_out must be non-negative");
}

double pixel_kl_divergence(const Tensor& probs_old, const Tensor& probs_new) {
  if (probs_old.shape() != probs_new.shape() || probs_old.rank() != 4) {
    throw Error(ErrorCode::ShapeError, "pixel_kl_divergence shapes " + shape_string(probs_old.shape()) + " vs " +
                                           shape_string(probs_new.shape()));
  }
  const int n = probs_old.dim(0), k = probs_old.dim(1);
  const std::size_t plane = static_cast<std::size_t>(probs_old.dim(2)) * probs_old.dim(3);
  for (const Tensor* t : {&probs_old, &probs_new}) {
    for (int b = 0; b < n; ++b) {
      for (std::size_t i = 0; i < plane; ++i) {
        double s = 0.0;
        for (int c = 0; c < k; ++c) {
          const double v = (*t)[(static_cast<std::size_t>(b) * k + c) * plane + i];
          if (v < 0.0) throw Error(ErrorCode::NotSimplex, "negative probability");
          s += v;
        }
        if (std::fabs(s - 1.0) > kSimplexTolerance) {
          throw Error(ErrorCode::NotSimplex, "pixel sums to " + std::to_string(s));
        }
      }
    }
  }
  return ops::kl_divergence(probs_old, Var::constant(probs_new), kProbabilityFloor).item();
}

double alw_weight(int layer_index, int epoch_index, const AlwConfig& cfg) {
  if (layer_index < 1 || layer_index > cfg.num_layers || epoch_index < 0 || epoch_index > cfg.total_epochs) {
    throw Error(ErrorCode::ContractError, "ALW index out of range");
  }
  return cfg.alpha * std::log(1.0 + static_cast<double>(layer_index) / cfg.num_layers) *
         std::pow(cfg.gamma, static_cast<double>(epoch_index) / cfg.total_epochs);
}

Var layer_divergence(const Var& old_logits, const Var& new_logits, int old_width) {
  if (old_logits.value().rank() != 4 || new_logits.value().rank() != 4 || old_logits.dim(0) != new_logits.dim(0) ||
      old_logits.dim(2) != new_logits.dim(2) || old_logits.dim(3) != new_logits.dim(3)) {
    throw Error(ErrorCode::ShapeError, "layer_divergence shapes " + shape_string(old_logits.shape()) + " vs " +
                                           shape_string(new_logits.shape()));
  }
  const Tensor old_probs = ops::softmax_channels(
      old_logits.dim(1) == old_width ? old_logits.value() : ops::slice_channels(old_logits.detach(), 0, old_width).value());
  const Var new_slice = new_logits.dim(1) == old_width ? new_logits : ops::slice_channels(new_logits, 0, old_width);
  return ops::kl_divergence(old_probs, ops::softmax_channels(new_slice), kProbabilityFloor);
}

DadaTerms dada_loss(const TapOutputs& snapshot_out, const TapOutputs& live_out, int epoch_index,
                    const DadaConfig& cfg) {
  validate(cfg);
  if (epoch_index < 0 || epoch_index >= cfg.alw.total_epochs) {
    throw Error(ErrorCode::ContractError, "epoch index " + std::to_string(epoch_index) + " outside [0," +
                                              std::to_string(cfg.alw.total_epochs) + ")");
  }
  const int old_width = snapshot_out.coarse_logits.dim(1);
  DadaTerms terms;
  if (cfg.intermediate) {
    const std::size_t taps = snapshot_out.layer_logits.size();
    if (taps == 0 || taps != live_out.layer_logits.size() || static_cast<int>(taps) != cfg.alw.num_layers) {
      throw Error(ErrorCode::TopologyError, "tap counts differ: snapshot " + std::to_string(taps) + ", live " +
                                                std::to_string(live_out.layer_logits.size()) + ", configured " +
                                                std::to_string(cfg.alw.num_layers));
    }
    Var acc;
    for (std::size_t l = 0; l < taps; ++l) {
      const double eta = alw_weight(static_cast<int>(l) + 1, epoch_index, cfg.alw);
      Var term = ops::scale(layer_divergence(snapshot_out.layer_logits[l], live_out.layer_logits[l], old_width), eta);
      acc = acc.defined() ? ops::add(acc, term) : term;
    }
    terms.il_d = ops::scale(acc, 1.0 / static_cast<double>(taps));
  } else {
    terms.il_d = Var::constant(Tensor::scalar(0.0));
  }
  if (cfg.output) {
    terms.ol_d = layer_divergence(snapshot_out.coarse_logits, live_out.coarse_logits, old_width);
  } else {
    terms.ol_d = Var::constant(Tensor::scalar(0.0));
  }
  terms.total = ops::add(terms.il_d, ops::scale(terms.ol_d, cfg.lambda_out));
  return terms;
}

DadaTerms dada_loss(const StepSnapshot& snapshot, const TapModel& model, const Var& batch, int epoch_index,
                    const DadaConfig& cfg) {
  if (snapshot.model.num_taps() != model.num_taps()) {
    throw Error(ErrorCode::TopologyError, "snapshot and model tap counts differ");
  }
  return dada_loss(snapshot.model.forward(batch, true), model.forward(batch, true), epoch_index, cfg);
}

}  // namespace incrseg
