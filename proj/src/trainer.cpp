#include "incrseg/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "incrseg/error.hpp"

namespace incrseg {

void validate(const TrainConfig& cfg) {
  if (!(cfg.base_lr > 0.0)) throw Error(ErrorCode::ContractError, "base_lr must be positive");
  if (!(cfg.momentum >= 0.0 && cfg.momentum < 1.0)) throw Error(ErrorCode::ContractError, "momentum must lie in [0,1)");
  if (!(cfg.weight_decay >= 0.0)) throw Error(ErrorCode::ContractError, "weight_decay must be non-negative");
  if (!(cfg.poly_power > 0.0)) throw Error(ErrorCode::ContractError, "poly_power must be positive");
  if (cfg.batch_size < 1) throw Error(ErrorCode::ContractError, "batch_size must be >= 1");
  if (cfg.epochs_per_step < 1) throw Error(ErrorCode::ContractError, "epochs_per_step must be >= 1");
  validate(cfg.dada);
  validate(cfg.arcl);
  validate(cfg.dcpl);
}

double poly_lr(int iter, int total_iters, const TrainConfig& cfg) {
  if (total_iters < 1 || iter < 0 || iter > total_iters) {
    throw Error(ErrorCode::ContractError, "poly_lr iteration " + std::to_string(iter) + " outside [0," +
                                              std::to_string(total_iters) + "]");
  }
  return cfg.base_lr * std::pow(1.0 - static_cast<double>(iter) / total_iters, cfg.poly_power);
}

SgdOptimizer::SgdOptimizer(std::vector<Var> params, double momentum, double weight_decay)
    : params_(std::move(params)), velocity_(params_.size()), momentum_(momentum), weight_decay_(weight_decay) {}

void SgdOptimizer::zero_grad() {
  for (Var& p : params_) p.zero_grad();
}

void SgdOptimizer::step(double lr) {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Var& p = params_[i];
    // Parameters outside the loss graph keep their value and state.
    if (!p.has_grad()) continue;
    Tensor& value = p.mutable_value();
    const Tensor& grad = p.node()->grad;
    Tensor& v = velocity_[i];
    const bool fresh = v.empty();
    if (fresh) v = Tensor(value.shape());
    for (std::size_t k = 0; k < value.size(); ++k) {
      const double d = grad[k] + weight_decay_ * value[k];
      v[k] = fresh ? d : momentum_ * v[k] + d;
      value[k] -= lr * v[k];
    }
  }
}

std::mt19937_64 step_rng(std::uint64_t seed, int step) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(step), 0x73746570u};
  return std::mt19937_64(seq);
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t init_seed(std::uint64_t seed) { return splitmix64(seed ^ 0x696e6974ull); }

std::uint64_t extension_seed(std::uint64_t seed, int step) {
  return splitmix64(seed ^ (0x657874ull << 32) ^ static_cast<std::uint64_t>(step));
}

ChannelMap::ChannelMap(const TaskSchedule& schedule) {
  class_of_channel_.push_back(kBackground);
  for (int c : schedule.class_order) {
    class_of_channel_.push_back(c);
    max_class_id_ = std::max(max_class_id_, c);
  }
  channel_of_class_.assign(static_cast<std::size_t>(max_class_id_) + 1, 0);
  for (std::size_t ch = 1; ch < class_of_channel_.size(); ++ch) {
    channel_of_class_[class_of_channel_[ch]] = static_cast<int>(ch);
  }
}

int ChannelMap::channel_of(int class_id) const {
  if (class_id <= 0 || class_id > max_class_id_) return 0;
  return channel_of_class_[class_id];
}

int ChannelMap::class_of(int channel) const {
  if (channel < 0 || channel >= static_cast<int>(class_of_channel_.size())) {
    throw Error(ErrorCode::LabelRange, "channel " + std::to_string(channel) + " has no class");
  }
  return class_of_channel_[channel];
}

std::vector<int> ChannelMap::channels_of(const std::vector<int>& class_ids) const {
  std::vector<int> out;
  out.reserve(class_ids.size());
  for (int c : class_ids) out.push_back(channel_of(c));
  return out;
}

Batch make_batch(const std::vector<LabeledSample>& samples, const std::vector<std::size_t>& indices,
                 const std::vector<bool>& flips, const ChannelMap& channels) {
  if (indices.empty()) throw Error(ErrorCode::ContractError, "empty batch");
  if (flips.size() != indices.size()) throw Error(ErrorCode::ContractError, "one flip flag per sample required");
  const LabeledSample& first = samples.at(indices.front());
  const int n = static_cast<int>(indices.size()), c = first.image.dim(0), h = first.height, w = first.width;
  Tensor images(Shape{n, c, h, w});
  LabelBatch labels(n, h, w);
  for (int b = 0; b < n; ++b) {
    const LabeledSample& s = samples.at(indices[b]);
    if (s.height != h || s.width != w || s.image.dim(0) != c) {
      throw Error(ErrorCode::ShapeError, "sample " + s.name + " differs in extent from " + first.name);
    }
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const int sx = flips[b] ? w - 1 - x : x;
        for (int k = 0; k < c; ++k) images.at(b, k, y, x) = (s.image.at(k, y, sx) - kInputMean) / kInputStd;
        labels.at(b, y, x) = channels.channel_of(s.label_at(y, sx));
      }
    }
  }
  return {Var::constant(std::move(images)), std::move(labels)};
}

namespace {

std::vector<Var> trainable_parameters(const TapModel& model) {
  std::vector<Var> out;
  for (const auto& p : model.parameters()) out.push_back(p.value);
  return out;
}

LabelBatch argmax_channels(const Tensor& logits) {
  const int n = logits.dim(0), k = logits.dim(1), h = logits.dim(2), w = logits.dim(3);
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  LabelBatch out(n, h, w);
  for (int b = 0; b < n; ++b) {
    for (std::size_t i = 0; i < plane; ++i) {
      const std::size_t base = static_cast<std::size_t>(b) * k * plane + i;
      int best = 0;
      for (int c = 1; c < k; ++c) {
        if (logits[base + c * plane] > logits[base + best * plane]) best = c;
      }
      out.labels[static_cast<std::size_t>(b) * plane + i] = best;
    }
  }
  return out;
}

std::vector<int> channel_range(int begin, int end) {
  std::vector<int> out(static_cast<std::size_t>(std::max(0, end - begin)));
  std::iota(out.begin(), out.end(), begin);
  return out;
}

}  // namespace

ConfusionMatrix evaluate(const TapModel& model, const std::vector<LabeledSample>& val, const TaskSchedule& schedule,
                         int step, int batch_size) {
  const ChannelMap channels(schedule);
  ConfusionMatrix cm(channels.max_class_id() + 1);
  const TapModel frozen = model.clone(false);
  for (std::size_t start = 0; start < val.size(); start += static_cast<std::size_t>(batch_size)) {
    std::vector<std::size_t> idx;
    for (std::size_t i = start; i < std::min(val.size(), start + batch_size); ++i) idx.push_back(i);
    const Batch batch = make_batch(val, idx, std::vector<bool>(idx.size(), false), channels);
    const LabelBatch pred = argmax_channels(frozen.forward(batch.images, false).logits.value());
    const std::size_t plane = static_cast<std::size_t>(pred.height) * pred.width;
    for (std::size_t b = 0; b < idx.size(); ++b) {
      const LabeledSample truth = mask_unseen_classes(val[idx[b]], schedule, step);
      for (std::size_t i = 0; i < plane; ++i) {
        cm.add(truth.mask[i], channels.class_of(pred.labels[b * plane + i]));
      }
    }
  }
  return cm;
}

StepOutcome train_incremental_step(TrainState& state, const std::vector<LabeledSample>& train,
                                   const std::vector<LabeledSample>& val, const TaskSchedule& schedule,
                                   const TrainConfig& cfg, const StepOptions& options) {
  const int t = state.step;
  if (t < 0 || t >= schedule.num_steps()) {
    throw Error(ErrorCode::ScheduleMismatch, "step " + std::to_string(t) + " outside the schedule");
  }
  if (t == 0 && state.snapshot) throw Error(ErrorCode::ContractError, "step 0 must not carry a snapshot");
  if (t >= 1 && (!state.snapshot || state.snapshot->step_index != t - 1)) {
    throw Error(ErrorCode::ContractError, "step " + std::to_string(t) + " needs the frozen snapshot of step " +
                                              std::to_string(t - 1));
  }
  validate(cfg);

  const int old_count = t == 0 ? 0 : schedule.learned_count(t - 1);
  const int new_count = schedule.learned_count(t);
  if (t >= 1 && state.model.num_classes() == old_count) {
    state.model.extend_classifier(new_count - old_count, extension_seed(cfg.seed, t));
  }
  if (state.model.num_classes() != new_count) {
    throw Error(ErrorCode::TopologyError, "model predicts " + std::to_string(state.model.num_classes()) +
                                              " classes, step " + std::to_string(t) + " needs " +
                                              std::to_string(new_count));
  }

  const ChannelMap channels(schedule);
  std::vector<LabeledSample> step_data;
  for (std::size_t i : select_step_samples(train, schedule, t)) step_data.push_back(remap_labels(train[i], schedule, t));
  if (step_data.empty()) {
    throw Error(ErrorCode::ContractError, "no training samples for step " + std::to_string(t));
  }

  DadaConfig dada = cfg.dada;
  dada.alw.total_epochs = cfg.epochs_per_step;
  dada.alw.num_layers = state.model.num_taps();
  const bool use_dada = t >= 1 && (dada.intermediate || dada.output);
  const bool use_arcl = t >= 1 && cfg.arcl.enabled;
  const bool use_dcpl = t >= 1 && cfg.dcpl.mode != PseudoLabelMode::none;
  const bool need_snapshot = use_dada || use_arcl || use_dcpl;
  const bool with_taps = use_dada && dada.intermediate;
  const std::vector<int> old_channels = channel_range(1, old_count + 1);
  const std::vector<int> new_channels = channel_range(old_count + 1, new_count + 1);

  std::mt19937_64 rng = step_rng(cfg.seed, t);
  std::bernoulli_distribution coin(0.5);
  const std::size_t bs = static_cast<std::size_t>(cfg.batch_size);
  const int batches_per_epoch = static_cast<int>((step_data.size() + bs - 1) / bs);
  const int total_iters = batches_per_epoch * cfg.epochs_per_step;
  SgdOptimizer optimizer(trainable_parameters(state.model), cfg.momentum, cfg.weight_decay);
  const Var zero = Var::constant(Tensor::scalar(0.0));

  StepOutcome outcome;
  outcome.step = t;
  std::vector<std::size_t> order(step_data.size());
  int iter = 0;
  for (int epoch = 0; epoch < cfg.epochs_per_step; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += bs) {
      std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                   order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), start + bs)));
      std::vector<bool> flips(idx.size(), false);
      if (cfg.hflip) {
        for (std::size_t b = 0; b < idx.size(); ++b) flips[b] = coin(rng);
      }
      const Batch batch = make_batch(step_data, idx, flips, channels);

      MetricsRow row;
      row.iter = iter;
      row.lr = poly_lr(iter, total_iters, cfg);
      const TapOutputs live = state.model.forward(batch.images, with_taps);
      Var seg, dada_total = zero, arcl = zero;
      if (!need_snapshot) {
        seg = ops::cross_entropy(live.logits, batch.labels);
      } else {
        const TapOutputs snap = state.snapshot->model.forward(batch.images, with_taps);
        const Tensor old_probs = ops::softmax_channels(snap.logits.value());
        const auto thresholds = pseudo_label_thresholds(old_probs, old_channels, cfg.dcpl);
        const SupervisionMask supervision = fuse_labels(generate_pseudo_labels(old_probs, thresholds), batch.labels);
        seg = seg_loss(live.logits, supervision);
        if (use_dada) {
          const DadaTerms terms = dada_loss(snap, live, epoch, dada);
          dada_total = terms.total;
          row.il_d = terms.il_d.item();
          row.ol_d = terms.ol_d.item();
        }
        if (use_arcl) {
          const ArclResult r = arcl_loss(snap, live, old_channels, new_channels, cfg.arcl, rng);
          arcl = r.loss;
          row.arcl_classes_used = r.classes_used;
          row.arcl_skipped = r.classes_skipped;
        }
      }
      Var total;
      try {
        total = total_loss(seg, dada_total, arcl, t);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::NumericError) throw;
        throw Error(ErrorCode::NumericError, "step " + std::to_string(t) + " iteration " + std::to_string(iter) +
                                                 ": " + e.detail());
      }
      row.seg = seg.item();
      row.dada_total = dada_total.item();
      row.arcl = arcl.item();
      row.total = total.item();

      optimizer.zero_grad();
      backward(total);
      optimizer.step(row.lr);

      outcome.metrics.push_back(row);
      if (options.on_iteration) options.on_iteration(row);
      ++iter;
    }
  }

  outcome.confusion = evaluate(state.model, val, schedule, t, cfg.batch_size);
  outcome.report = step_report(outcome.confusion, schedule, t, options.include_background);
  state.snapshot = freeze_snapshot(state.model, t);
  state.step = t + 1;
  return outcome;
}

}  // namespace incrseg
