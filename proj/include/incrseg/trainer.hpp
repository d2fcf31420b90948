#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <vector>

#include "incrseg/arcl.hpp"
#include "incrseg/dada.hpp"
#include "incrseg/dcpl.hpp"
#include "incrseg/eval.hpp"
#include "incrseg/model.hpp"
#include "incrseg/schedule.hpp"

namespace incrseg {

struct TrainConfig {
  double base_lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  int batch_size = 8;
  int epochs_per_step = 5;
  double poly_power = 0.9;
  std::uint64_t seed = 0;
  bool hflip = true;
  DadaConfig dada;  // alw.total_epochs and alw.num_layers are set per step
  ArclConfig arcl;
  DcplConfig dcpl;
};

void validate(const TrainConfig& cfg);

// base_lr · (1 − iter/total_iters)^poly_power.
double poly_lr(int iter, int total_iters, const TrainConfig& cfg);

// SGD with momentum and L2 weight decay folded into the gradient:
// v ← μ·v + (g + wd·p), p ← p − lr·v, with v = g + wd·p on the first update.
class SgdOptimizer {
 public:
  SgdOptimizer(std::vector<Var> params, double momentum, double weight_decay);
  void zero_grad();
  void step(double lr);

 private:
  std::vector<Var> params_;
  std::vector<Tensor> velocity_;
  double momentum_;
  double weight_decay_;
  bool started_ = false;
};

// Generator for every random draw of one step: shuffling, flips, anchor
// sampling.
std::mt19937_64 step_rng(std::uint64_t seed, int step);

// Seeds derived from the run seed for weight initialisation and for the
// noise of the classifier extension at `step`.
std::uint64_t init_seed(std::uint64_t seed);
std::uint64_t extension_seed(std::uint64_t seed, int step);

// Maps dataset class IDs to classifier channels: the class at position i of
// the class order owns channel i + 1.
class ChannelMap {
 public:
  explicit ChannelMap(const TaskSchedule& schedule);
  int channel_of(int class_id) const;  // 0 for background and unknown IDs
  int class_of(int channel) const;
  int max_class_id() const { return max_class_id_; }
  std::vector<int> channels_of(const std::vector<int>& class_ids) const;

 private:
  std::vector<int> class_of_channel_;
  std::vector<int> channel_of_class_;
  int max_class_id_ = 0;
};

// Input normalisation applied to [0,1] images.
inline constexpr double kInputMean = 0.5;
inline constexpr double kInputStd = 0.25;

struct Batch {
  Var images;         // N×C×H×W, normalised
  LabelBatch labels;  // classifier channels
};

// Stacks samples[indices[i]], flipping the ones with flips[i] set. Mask
// values are translated through `channels`.
Batch make_batch(const std::vector<LabeledSample>& samples, const std::vector<std::size_t>& indices,
                 const std::vector<bool>& flips, const ChannelMap& channels);

struct MetricsRow {
  int iter = 0;
  double lr = 0.0;
  double seg = 0.0;
  double il_d = 0.0;
  double ol_d = 0.0;
  double dada_total = 0.0;
  double arcl = 0.0;
  double total = 0.0;
  int arcl_classes_used = 0;
  int arcl_skipped = 0;
};

struct TrainState {
  TapModel model;
  std::optional<StepSnapshot> snapshot;
  int step = 0;
};

struct StepOutcome {
  int step = 0;
  ConfusionMatrix confusion;
  StepReport report;
  std::vector<MetricsRow> metrics;
};

struct StepOptions {
  bool include_background = true;  // evaluation grouping
  std::function<void(const MetricsRow&)> on_iteration;
};

// Runs step state.step: extends the classifier when needed, trains on the
// protocol-selected samples with C^t ground truth, evaluates on `val` with
// unseen classes mapped to background and finally freezes the trained model
// as the snapshot for the next step.
StepOutcome train_incremental_step(TrainState& state, const std::vector<LabeledSample>& train,
                                   const std::vector<LabeledSample>& val, const TaskSchedule& schedule,
                                   const TrainConfig& cfg, const StepOptions& options = {});

// Evaluates `model` after `step`; the matrix is indexed by class ID.
ConfusionMatrix evaluate(const TapModel& model, const std::vector<LabeledSample>& val, const TaskSchedule& schedule,
                         int step, int batch_size = 8);

}  // namespace incrseg
