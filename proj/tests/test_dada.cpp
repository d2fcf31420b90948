#include <doctest.h>

#include <cmath>

#include "incrseg/dada.hpp"
#include "incrseg/error.hpp"
#include "test_support.hpp"

using namespace incrseg;
using testing::gradient_error;
using testing::random_tensor;
using testing::tiny_model_config;

namespace {

// Scalar reimplementation: softmax over the first `width` channels of each
// map, floored KL(old ‖ new) averaged over pixels.
double oracle_divergence(const Tensor& old_logits, const Tensor& new_logits, int width) {
  const int n = old_logits.dim(0), h = old_logits.dim(2), w = old_logits.dim(3);
  double total = 0.0;
  for (int b = 0; b < n; ++b) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        double zo = 0.0, zn = 0.0;
        for (int c = 0; c < width; ++c) {
          zo += std::exp(old_logits.at(b, c, y, x));
          zn += std::exp(new_logits.at(b, c, y, x));
        }
        for (int c = 0; c < width; ++c) {
          const double po = std::exp(old_logits.at(b, c, y, x)) / zo;
          const double pn = std::exp(new_logits.at(b, c, y, x)) / zn;
          total += po * (std::log(std::max(po, 1e-8)) - std::log(std::max(pn, 1e-8)));
        }
      }
    }
  }
  return total / (static_cast<double>(n) * h * w);
}

Tensor probs(int k, std::vector<double> v) { return Tensor(Shape{1, k, 1, 1}, std::move(v)); }

}  // namespace

TEST_CASE("ALW weight values") {
  const AlwConfig cfg{1.0, 0.9, 30, 3};
  CHECK(alw_weight(3, 0, cfg) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(alw_weight(1, 0, cfg) == doctest::Approx(std::log(4.0 / 3.0)).epsilon(1e-12));
  for (int l = 1; l <= 3; ++l) CHECK(alw_weight(l, 30, cfg) == doctest::Approx(0.9 * alw_weight(l, 0, cfg)));
  for (int e = 0; e <= 30; ++e) {
    for (int l = 1; l < 3; ++l) CHECK(alw_weight(l, e, cfg) < alw_weight(l + 1, e, cfg));
  }
  for (int l = 1; l <= 3; ++l) {
    for (int e = 0; e < 30; ++e) CHECK(alw_weight(l, e, cfg) > alw_weight(l, e + 1, cfg));
  }
  CHECK_THROWS_AS(alw_weight(0, 0, cfg), Error);
  CHECK_THROWS_AS(alw_weight(1, 31, cfg), Error);
}

TEST_CASE("pixel KL divergence") {
  CHECK(pixel_kl_divergence(probs(2, {0.3, 0.7}), probs(2, {0.3, 0.7})) == 0.0);
  const double hand = 0.5 * std::log(0.5 / 0.9) + 0.5 * std::log(0.5 / 0.1);
  CHECK(pixel_kl_divergence(probs(2, {0.5, 0.5}), probs(2, {0.9, 0.1})) == doctest::Approx(hand).epsilon(1e-12));
  CHECK(hand == doctest::Approx(0.5108).epsilon(1e-4));

  const double floored = 0.5 * std::log(0.5 / 1.0) + 0.5 * std::log(0.5 / 1e-8);
  const double got = pixel_kl_divergence(probs(2, {0.5, 0.5}), probs(2, {1.0, 0.0}));
  CHECK(std::isfinite(got));
  CHECK(got == doctest::Approx(floored).epsilon(1e-12));

  try {
    pixel_kl_divergence(probs(2, {0.5, 0.6}), probs(2, {0.5, 0.5}));
    FAIL("expected NOT_SIMPLEX");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NotSimplex);
  }
  try {
    pixel_kl_divergence(probs(2, {0.5, 0.5}), probs(3, {0.2, 0.3, 0.5}));
    FAIL("expected SHAPE_ERROR");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ShapeError);
  }
}

TEST_CASE("DADA of hand-set maps matches a scalar loop") {
  std::mt19937_64 rng(21);
  DadaConfig cfg;
  cfg.alw = {1.0, 0.9, 10, 2};
  cfg.lambda_out = 2.0;
  for (int trial = 0; trial < 10; ++trial) {
    TapOutputs snap, live;
    for (int l = 0; l < 2; ++l) {
      snap.layer_logits.push_back(Var::constant(random_tensor({2, 3, 3, 2}, rng, -3, 3)));
      live.layer_logits.push_back(Var::constant(random_tensor({2, 4, 3, 2}, rng, -3, 3)));
    }
    snap.coarse_logits = Var::constant(random_tensor({2, 3, 2, 2}, rng, -3, 3));
    live.coarse_logits = Var::constant(random_tensor({2, 4, 2, 2}, rng, -3, 3));
    const int epoch = trial % 10;
    const DadaTerms terms = dada_loss(snap, live, epoch, cfg);

    double il = 0.0;
    for (int l = 0; l < 2; ++l) {
      const double eta = std::log(1.0 + (l + 1) / 2.0) * std::pow(0.9, epoch / 10.0);
      il += eta * oracle_divergence(snap.layer_logits[l].value(), live.layer_logits[l].value(), 3);
    }
    il /= 2.0;
    const double ol = oracle_divergence(snap.coarse_logits.value(), live.coarse_logits.value(), 3);
    CHECK(terms.il_d.item() == doctest::Approx(il).epsilon(1e-10));
    CHECK(terms.ol_d.item() == doctest::Approx(ol).epsilon(1e-10));
    CHECK(terms.total.item() == doctest::Approx(il + 2.0 * ol).epsilon(1e-10));
    CHECK(terms.total.item() >= 0.0);
  }
}

TEST_CASE("DADA on real models") {
  const TapModel base(tiny_model_config(), 2, 31);
  const StepSnapshot snap = freeze_snapshot(base, 0);
  std::mt19937_64 rng(22);
  const Var x = Var::constant(random_tensor({2, 3, 32, 32}, rng));

  SUBCASE("identical parameters give zero") {
    const TapModel same = base.clone(true);
    const DadaTerms t = dada_loss(snap, same, x, 0, DadaConfig{});
    CHECK(std::fabs(t.total.item()) <= 1e-9);
  }
  SUBCASE("identical old channels after extension still give zero") {
    const TapModel grown = extend_classifier(base, 2, 5);
    CHECK(std::fabs(dada_loss(snap, grown, x, 3, DadaConfig{}).total.item()) <= 1e-9);
  }
  SUBCASE("lambda zero leaves the intermediate term") {
    const TapModel other(tiny_model_config(), 2, 32);
    DadaConfig cfg;
    cfg.lambda_out = 0.0;
    const DadaTerms t = dada_loss(snap, other, x, 1, cfg);
    CHECK(t.total.item() == t.il_d.item());
    CHECK(t.il_d.item() > 0.0);
  }
  SUBCASE("tap count mismatch") {
    ModelConfig two_taps = tiny_model_config();
    two_taps.first_tap_stage = 2;
    const TapModel other(two_taps, 2, 33);
    try {
      dada_loss(snap, other, x, 0, DadaConfig{});
      FAIL("expected TOPOLOGY_ERROR");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::TopologyError);
    }
  }
}

TEST_CASE("DADA gradients match finite differences") {
  // 32×32 input: the deepest map holds 2×2 = 4 pixels.
  const TapModel snapshot_model(tiny_model_config(), 2, 41);
  const StepSnapshot snap = freeze_snapshot(snapshot_model, 0);
  const TapModel live = extend_classifier(TapModel(tiny_model_config(), 2, 42), 1, 43);
  std::mt19937_64 rng(23);
  const Var x = Var::constant(random_tensor({1, 3, 32, 32}, rng));
  std::vector<Var> params;
  for (const auto& p : live.parameters()) {
    if (p.name.rfind("classifier", 0) == 0 || p.name.find(".head.") != std::string::npos ||
        p.name.rfind("aspp.project", 0) == 0 || p.name.rfind("tap2.context.pointwise", 0) == 0) {
      params.push_back(p.value);
    }
  }
  DadaConfig il_only;
  il_only.output = false;
  DadaConfig ol_only;
  ol_only.intermediate = false;
  CHECK(gradient_error([&] { return dada_loss(snap, live, x, 2, il_only).il_d; }, params) < 1e-3);
  CHECK(gradient_error([&] { return dada_loss(snap, live, x, 2, ol_only).ol_d; }, params) < 1e-3);
}
