#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "incrseg/autograd.hpp"
#include "incrseg/model.hpp"
#include "incrseg/ops.hpp"

namespace testing {

using incrseg::Shape;
using incrseg::Tensor;
using incrseg::Var;

inline Tensor random_tensor(const Shape& shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(shape);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = u(rng);
  return t;
}

// Σ x_i·w_i, a scalar probe that makes every output element matter.
inline Var dot_with(const Var& x, const Tensor& w) {
  double s = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) s += x.value()[i] * w[i];
  return Var::op(Tensor::scalar(s), {x}, [w](Var::Node& node) {
    const double g = node.grad[0];
    Tensor& gx = node.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < w.size(); ++i) gx[i] += g * w[i];
  });
}

// Norm-wise relative error between the reverse-mode gradient and central
// differences of `loss` with respect to every element of `params`.
inline double gradient_error(const std::function<Var()>& loss, std::vector<Var> params, double h = 1e-3) {
  for (Var& p : params) p.zero_grad();
  incrseg::backward(loss());
  double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
  for (Var& p : params) {
    const Tensor analytic = p.grad();
    for (std::size_t i = 0; i < p.value().size(); ++i) {
      const double orig = p.value()[i];
      p.mutable_value()[i] = orig + h;
      const double up = loss().item();
      p.mutable_value()[i] = orig - h;
      const double down = loss().item();
      p.mutable_value()[i] = orig;
      const double numeric = (up - down) / (2.0 * h);
      diff2 += (analytic[i] - numeric) * (analytic[i] - numeric);
      a2 += analytic[i] * analytic[i];
      n2 += numeric * numeric;
    }
  }
  const double scale = std::max({std::sqrt(a2), std::sqrt(n2), 1e-12});
  return std::sqrt(diff2) / scale;
}

// Small network for fast tests: 32×32 input gives a 2×2 deepest map.
inline incrseg::ModelConfig tiny_model_config() {
  incrseg::ModelConfig cfg;
  cfg.stage_widths = {4, 6, 8, 8};
  cfg.embed_channels = 6;
  cfg.layer_embed_channels = 4;
  return cfg;
}

}  // namespace testing
