#pragma once

#include "incrseg/model.hpp"

namespace incrseg {

// Floor applied to both distributions inside the KL logarithms.
inline constexpr double kProbabilityFloor = 1e-8;
// Per-pixel tolerance on the probability simplex for pixel_kl_divergence.
inline constexpr double kSimplexTolerance = 1e-5;

// Attenuated layer-aware weight parameters.
struct AlwConfig {
  double alpha = 1.0;
  double gamma = 0.9;     // decay base, 0 < gamma < 1
  int total_epochs = 30;  // N_e
  int num_layers = 3;     // N_l, number of distilled taps
};

struct DadaConfig {
  double lambda_out = 2.0;  // weight of the output-layer term
  AlwConfig alw;
  // Ablation switches for the intermediate-layer and output-layer terms.
  bool intermediate = true;
  bool output = true;
};

void validate(const AlwConfig& cfg);
void validate(const DadaConfig& cfg);

// Mean over batch and pixels of KL(old ‖ new) for two N×K×H×W maps whose
// pixels are probability distributions.
double pixel_kl_divergence(const Tensor& probs_old, const Tensor& probs_new);

// alpha · ln(1 + layer/num_layers) · gamma^(epoch/total_epochs), with
// layer in 1..num_layers and epoch in 0..total_epochs.
double alw_weight(int layer_index, int epoch_index, const AlwConfig& cfg);

struct DadaTerms {
  Var total;
  Var il_d;
  Var ol_d;
};

// d_D between two logit maps: softmax over the first `old_width` channels of
// each, then the floored pixel-mean KL(old ‖ new). Gradients reach only
// `new_logits`.
Var layer_divergence(const Var& old_logits, const Var& new_logits, int old_width);

// DADA from precomputed forward passes. The old-class width is taken from
// the snapshot's classifier.
DadaTerms dada_loss(const TapOutputs& snapshot_out, const TapOutputs& live_out, int epoch_index,
                    const DadaConfig& cfg);

DadaTerms dada_loss(const StepSnapshot& snapshot, const TapModel& model, const Var& batch, int epoch_index,
                    const DadaConfig& cfg);

}  // namespace incrseg
