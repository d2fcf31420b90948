#include "incrseg/model.hpp"

#include <cmath>
#include <map>

#include "incrseg/error.hpp"

namespace incrseg {

namespace {

Conv2d make_conv(std::mt19937_64& rng, int cin, int cout, int kernel, ops::ConvGeometry geom, bool with_bias,
                 double std_override = 0.0) {
  const double fan_in = static_cast<double>(cin) * kernel * kernel;
  const double stddev = std_override > 0.0 ? std_override : std::sqrt(2.0 / fan_in);
  std::normal_distribution<double> normal(0.0, stddev);
  Tensor w(Shape{cout, cin, kernel, kernel});
  for (double& v : w.values()) v = normal(rng);
  Conv2d conv;
  conv.weight = Var::parameter(std::move(w));
  if (with_bias) conv.bias = Var::parameter(Tensor(Shape{cout}, 0.0));
  conv.geometry = geom;
  return conv;
}

constexpr double kHeadInitStd = 0.01;

Var pooled_branch(const Conv2d& conv, const Var& x) {
  return ops::broadcast_spatial(conv(ops::global_avg_pool(x)), x.dim(2), x.dim(3));
}

// Appends `count` output channels copied from channel 0 plus noise.
void grow_head(Conv2d& head, int count, std::normal_distribution<double>& noise, std::mt19937_64& rng) {
  const Tensor& w = head.weight.value();
  const int cout = w.dim(0), cin = w.dim(1);
  const std::size_t row = static_cast<std::size_t>(cin) * w.dim(2) * w.dim(3);
  Tensor grown(Shape{cout + count, cin, w.dim(2), w.dim(3)});
  std::copy(w.data(), w.data() + w.size(), grown.data());
  for (int k = 0; k < count; ++k) {
    double* dst = grown.data() + (cout + k) * row;
    for (std::size_t i = 0; i < row; ++i) dst[i] = w[i] + noise(rng);
  }
  const Tensor& b = head.bias.value();
  Tensor grown_bias(Shape{cout + count});
  std::copy(b.data(), b.data() + b.size(), grown_bias.data());
  for (int k = 0; k < count; ++k) grown_bias[cout + k] = b[0];
  head.weight = Var::parameter(std::move(grown));
  head.bias = Var::parameter(std::move(grown_bias));
}

}  // namespace

TapModel::TapModel(ModelConfig config, int num_classes, std::uint64_t init_seed)
    : config_(std::move(config)), num_classes_(num_classes) {
  if (num_classes < 1) throw Error(ErrorCode::ContractError, "model needs at least one foreground class");
  if (config_.stage_widths.size() < 2 || config_.convs_per_stage < 1 || config_.first_tap_stage < 0 ||
      config_.first_tap_stage >= static_cast<int>(config_.stage_widths.size())) {
    throw Error(ErrorCode::ContractError, "invalid model topology");
  }
  std::mt19937_64 rng(init_seed);
  int cin = config_.in_channels;
  for (int width : config_.stage_widths) {
    std::vector<Conv2d> stage;
    stage.push_back(make_conv(rng, cin, width, 3, {2, 1, 1}, false));
    for (int i = 1; i < config_.convs_per_stage; ++i) stage.push_back(make_conv(rng, width, width, 3, {1, 1, 1}, false));
    stages_.push_back(std::move(stage));
    cin = width;
  }
  const int nd = config_.embed_channels;
  aspp_.pointwise = make_conv(rng, cin, nd, 1, {}, false);
  aspp_.rate1 = make_conv(rng, cin, nd, 3, {1, 1, 1}, false);
  aspp_.rate2 = make_conv(rng, cin, nd, 3, {1, 2, 2}, false);
  aspp_.pooled = make_conv(rng, cin, nd, 1, {}, false);
  aspp_.project = make_conv(rng, 4 * nd, nd, 1, {}, false);

  const int n = config_.layer_embed_channels;
  for (std::size_t s = config_.first_tap_stage; s < config_.stage_widths.size(); ++s) {
    const int c = config_.stage_widths[s];
    tap_contexts_.push_back({make_conv(rng, c, n, 1, {}, false), make_conv(rng, c, n, 3, {1, 2, 2}, false),
                             make_conv(rng, c, n, 1, {}, false)});
    layer_heads_.push_back(make_conv(rng, n, num_outputs(), 1, {}, true, kHeadInitStd));
  }
  classifier_ = make_conv(rng, nd, num_outputs(), 1, {}, true, kHeadInitStd);
}

template <typename Fn>
void TapModel::for_each_conv(Fn&& fn) const {
  const_cast<TapModel*>(this)->for_each_conv([&](const std::string& name, Conv2d& conv) {
    fn(name, static_cast<const Conv2d&>(conv));
  });
}

template <typename Fn>
void TapModel::for_each_conv(Fn&& fn) {
  for (std::size_t s = 0; s < stages_.size(); ++s) {
    for (std::size_t i = 0; i < stages_[s].size(); ++i) {
      fn("encoder.stage" + std::to_string(s) + ".conv" + std::to_string(i), stages_[s][i]);
    }
  }
  fn("aspp.pointwise", aspp_.pointwise);
  fn("aspp.rate1", aspp_.rate1);
  fn("aspp.rate2", aspp_.rate2);
  fn("aspp.pooled", aspp_.pooled);
  fn("aspp.project", aspp_.project);
  for (std::size_t l = 0; l < tap_contexts_.size(); ++l) {
    const std::string prefix = "tap" + std::to_string(l);
    fn(prefix + ".context.pointwise", tap_contexts_[l].pointwise);
    fn(prefix + ".context.dilated", tap_contexts_[l].dilated);
    fn(prefix + ".context.pooled", tap_contexts_[l].pooled);
    fn(prefix + ".head", layer_heads_[l]);
  }
  fn("classifier", classifier_);
}

std::vector<NamedParameter> TapModel::parameters() const {
  std::vector<NamedParameter> out;
  for_each_conv([&](const std::string& name, const Conv2d& conv) {
    out.push_back({name + ".weight", conv.weight});
    if (conv.bias.defined()) out.push_back({name + ".bias", conv.bias});
  });
  return out;
}

std::size_t TapModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.value.value().size();
  return n;
}

TapOutputs TapModel::forward(const Var& batch, bool with_taps) const {
  if (batch.value().rank() != 4 || batch.dim(1) != config_.in_channels) {
    throw Error(ErrorCode::ShapeError, "expected N×" + std::to_string(config_.in_channels) + "×H×W input, got " +
                                           shape_string(batch.shape()));
  }
  const int stride = output_stride();
  const int h = batch.dim(2), w = batch.dim(3);
  if (h % stride != 0 || w % stride != 0 || h == 0 || w == 0) {
    throw Error(ErrorCode::ShapeError, "input extent " + std::to_string(h) + "x" + std::to_string(w) +
                                           " is not divisible by " + std::to_string(stride));
  }

  TapOutputs out;
  Var x = batch;
  for (std::size_t s = 0; s < stages_.size(); ++s) {
    for (const Conv2d& conv : stages_[s]) x = ops::relu(conv(x));
    if (with_taps && static_cast<int>(s) >= config_.first_tap_stage) {
      const ContextHead& ctx = tap_contexts_[s - config_.first_tap_stage];
      Var e = ops::relu(ops::add(ops::add(ctx.pointwise(x), ctx.dilated(x)), pooled_branch(ctx.pooled, x)));
      out.layer_logits.push_back(layer_heads_[s - config_.first_tap_stage](e));
      out.layer_embeddings.push_back(std::move(e));
    }
  }
  Var context = ops::concat_channels({ops::relu(aspp_.pointwise(x)), ops::relu(aspp_.rate1(x)),
                                      ops::relu(aspp_.rate2(x)), ops::relu(pooled_branch(aspp_.pooled, x))});
  out.out_embedding = ops::relu(aspp_.project(context));
  out.coarse_logits = classifier_(out.out_embedding);
  out.logits = ops::resize_bilinear(out.coarse_logits, h, w);
  return out;
}

void TapModel::extend_classifier(int count, std::uint64_t noise_seed) {
  if (count < 1) throw Error(ErrorCode::ContractError, "extend_classifier needs new_class_count >= 1");
  std::mt19937_64 rng(noise_seed);
  std::normal_distribution<double> noise(0.0, config_.new_class_noise);
  grow_head(classifier_, count, noise, rng);
  for (Conv2d& head : layer_heads_) grow_head(head, count, noise, rng);
  num_classes_ += count;
}

TapModel TapModel::clone(bool trainable) const {
  TapModel copy = *this;
  copy.for_each_conv([&](const std::string&, Conv2d& conv) {
    conv.weight = trainable ? Var::parameter(conv.weight.value()) : Var::constant(conv.weight.value());
    if (conv.bias.defined()) {
      conv.bias = trainable ? Var::parameter(conv.bias.value()) : Var::constant(conv.bias.value());
    }
  });
  return copy;
}

void TapModel::load_parameters(const std::vector<std::pair<std::string, Tensor>>& values) {
  std::map<std::string, const Tensor*> lookup;
  for (const auto& [name, t] : values) lookup[name] = &t;
  for (auto& p : parameters()) {
    auto it = lookup.find(p.name);
    if (it == lookup.end()) throw Error(ErrorCode::TopologyError, "missing parameter " + p.name);
    if (it->second->shape() != p.value.shape()) {
      throw Error(ErrorCode::TopologyError, "parameter " + p.name + " has shape " + shape_string(it->second->shape()) +
                                                ", expected " + shape_string(p.value.shape()));
    }
    Var handle = p.value;
    handle.mutable_value() = *it->second;
  }
  if (lookup.size() != parameters().size()) throw Error(ErrorCode::TopologyError, "unexpected extra parameters");
}

TapOutputs forward_with_taps(const TapModel& model, const Var& batch) { return model.forward(batch, true); }

TapModel extend_classifier(const TapModel& model, int new_class_count, std::uint64_t noise_seed) {
  TapModel grown = model.clone(true);
  grown.extend_classifier(new_class_count, noise_seed);
  return grown;
}

StepSnapshot freeze_snapshot(const TapModel& model, int step) { return StepSnapshot{model.clone(false), step}; }

}  // namespace incrseg
