#include <doctest.h>

#include "incrseg/dada.hpp"
#include "incrseg/error.hpp"
#include "incrseg/model.hpp"
#include "test_support.hpp"

using namespace incrseg;
using testing::random_tensor;
using testing::tiny_model_config;

namespace {

std::size_t count_params(const TapModel& m, const std::string& prefix) {
  std::size_t n = 0;
  for (const auto& p : m.parameters()) {
    if (p.name.rfind(prefix, 0) == 0) n += p.value.value().size();
  }
  return n;
}

bool is_layer_head(const std::string& name) { return name.find(".head.") != std::string::npos; }

}  // namespace

TEST_CASE("forward shapes on a 64x64 batch") {
  const TapModel model(ModelConfig{}, 3, 1);
  std::mt19937_64 rng(1);
  const TapOutputs out = model.forward(Var::constant(random_tensor({2, 3, 64, 64}, rng)), true);
  REQUIRE(out.layer_embeddings.size() == 3);
  REQUIRE(out.layer_logits.size() == 3);
  const int strides[3] = {4, 8, 16};
  for (int l = 0; l < 3; ++l) {
    CHECK(out.layer_embeddings[l].dim(2) == 64 / strides[l]);
    CHECK(out.layer_embeddings[l].dim(3) == 64 / strides[l]);
    CHECK(out.layer_logits[l].dim(1) == 4);
  }
  CHECK(out.out_embedding.shape() == Shape{2, 64, 4, 4});
  CHECK(out.coarse_logits.shape() == Shape{2, 4, 4, 4});
  CHECK(out.logits.shape() == Shape{2, 4, 64, 64});
  CHECK(model.output_stride() == 16);
  CHECK(model.num_taps() == 3);
}

TEST_CASE("inputs not divisible by the output stride are rejected") {
  const TapModel model(tiny_model_config(), 2, 1);
  try {
    model.forward(Var::constant(Tensor(Shape{1, 3, 40, 32})), false);
    FAIL("expected SHAPE_ERROR");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ShapeError);
  }
}

TEST_CASE("forward is deterministic") {
  const TapModel model(tiny_model_config(), 2, 5);
  std::mt19937_64 rng(2);
  const Var x = Var::constant(random_tensor({2, 3, 32, 32}, rng));
  const TapOutputs a = model.forward(x, true);
  const TapOutputs b = model.forward(x, true);
  CHECK(a.logits.value().storage() == b.logits.value().storage());
  for (std::size_t l = 0; l < a.layer_logits.size(); ++l) {
    CHECK(a.layer_logits[l].value().storage() == b.layer_logits[l].value().storage());
  }
  const TapModel same_seed(tiny_model_config(), 2, 5);
  CHECK(same_seed.forward(x, false).logits.value().storage() == a.logits.value().storage());
}

TEST_CASE("an all-zero input yields the classifier bias everywhere") {
  TapModel model(tiny_model_config(), 3, 9);
  for (auto& p : model.parameters()) {
    if (p.name == "classifier.bias") {
      Var handle = p.value;
      for (int c = 0; c < 4; ++c) handle.mutable_value()[c] = 0.1 * (c + 1);
    }
  }
  const TapOutputs out = model.forward(Var::constant(Tensor(Shape{1, 3, 32, 32})), false);
  const Tensor& logits = out.logits.value();
  for (int c = 0; c < 4; ++c) {
    for (int y = 0; y < 32; ++y) {
      for (int x = 0; x < 32; ++x) CHECK(logits.at(0, c, y, x) == doctest::Approx(0.1 * (c + 1)).epsilon(1e-15));
    }
  }
}

TEST_CASE("classifier extension") {
  const TapModel base(tiny_model_config(), 15, 3);
  const TapModel grown = extend_classifier(base, 1, 77);
  CHECK(grown.num_classes() == 16);
  CHECK(grown.num_outputs() == 17);

  std::mt19937_64 rng(4);
  const Var x = Var::constant(random_tensor({1, 3, 32, 32}, rng));
  const TapOutputs before = base.forward(x, true);
  const TapOutputs after = grown.forward(x, true);
  const Tensor& a = before.logits.value();
  const Tensor& b = after.logits.value();
  for (int c = 0; c < 16; ++c) {
    for (int y = 0; y < 32; ++y) {
      for (int xx = 0; xx < 32; ++xx) CHECK(a.at(0, c, y, xx) == b.at(0, c, y, xx));
    }
  }
  for (std::size_t l = 0; l < before.layer_logits.size(); ++l) {
    CHECK(after.layer_logits[l].dim(1) == 17);
  }

  SUBCASE("new channel starts near the background channel") {
    for (const auto& p : grown.parameters()) {
      if (p.name != "classifier.weight") continue;
      const Tensor& w = p.value.value();
      const std::size_t row = w.size() / 17;
      for (std::size_t k = 0; k < row; ++k) CHECK(std::fabs(w[16 * row + k] - w[k]) < 1e-2);
    }
  }
  SUBCASE("encoder untouched, heads grow linearly") {
    CHECK(count_params(grown, "encoder.") == count_params(base, "encoder."));
    CHECK(count_params(grown, "aspp.") == count_params(base, "aspp."));
    const TapModel grown2 = extend_classifier(grown, 1, 78);
    std::size_t h0 = 0, h1 = 0, h2 = 0;
    for (const auto& p : base.parameters()) h0 += is_layer_head(p.name) ? p.value.value().size() : 0;
    for (const auto& p : grown.parameters()) h1 += is_layer_head(p.name) ? p.value.value().size() : 0;
    for (const auto& p : grown2.parameters()) h2 += is_layer_head(p.name) ? p.value.value().size() : 0;
    CHECK(h1 > h0);
    CHECK(h2 - h1 == h1 - h0);
  }
  SUBCASE("zero new classes is a contract violation") {
    try {
      extend_classifier(base, 0, 1);
      FAIL("expected CONTRACT_ERROR");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::ContractError);
    }
  }
}

TEST_CASE("snapshots are isolated from the live model") {
  TapModel model(tiny_model_config(), 2, 11);
  const StepSnapshot snap = freeze_snapshot(model, 0);
  CHECK(snap.step_index == 0);
  std::mt19937_64 rng(5);
  const Var x = Var::constant(random_tensor({2, 3, 32, 32}, rng));
  const Tensor at_copy = snap.model.forward(x, false).logits.value();
  CHECK(at_copy.storage() == model.forward(x, false).logits.value().storage());

  LabelBatch labels(2, 32, 32, 1);
  for (int it = 0; it < 10; ++it) {
    backward(ops::cross_entropy(model.forward(x, false).logits, labels));
    for (auto& p : model.parameters()) {
      Var handle = p.value;
      const Tensor g = handle.grad();
      for (std::size_t k = 0; k < g.size(); ++k) handle.mutable_value()[k] -= 0.1 * g[k];
      handle.zero_grad();
    }
  }
  CHECK(snap.model.forward(x, false).logits.value().storage() == at_copy.storage());
  CHECK(model.forward(x, false).logits.value().storage() != at_copy.storage());
  for (const auto& p : snap.model.parameters()) {
    CHECK_FALSE(p.value.requires_grad());
    CHECK_FALSE(p.value.has_grad());
  }
}

TEST_CASE("snapshot parameters receive no gradient from distillation") {
  const TapModel model = extend_classifier(TapModel(tiny_model_config(), 2, 12), 1, 3);
  const StepSnapshot snap = freeze_snapshot(TapModel(tiny_model_config(), 2, 13), 0);
  std::mt19937_64 rng(6);
  const Var x = Var::constant(random_tensor({1, 3, 32, 32}, rng));
  DadaConfig cfg;
  backward(dada_loss(snap, model, x, 0, cfg).total);
  bool live_grad = false;
  for (const auto& p : model.parameters()) live_grad = live_grad || p.value.has_grad();
  CHECK(live_grad);
  for (const auto& p : snap.model.parameters()) CHECK_FALSE(p.value.has_grad());
}

TEST_CASE("load_parameters checks topology") {
  TapModel a(tiny_model_config(), 2, 1);
  const TapModel b(tiny_model_config(), 2, 2);
  std::vector<std::pair<std::string, Tensor>> values;
  for (const auto& p : b.parameters()) values.emplace_back(p.name, p.value.value());
  a.load_parameters(values);
  std::mt19937_64 rng(7);
  const Var x = Var::constant(random_tensor({1, 3, 32, 32}, rng));
  CHECK(a.forward(x, true).logits.value().storage() == b.forward(x, true).logits.value().storage());

  values.pop_back();
  try {
    a.load_parameters(values);
    FAIL("expected TOPOLOGY_ERROR");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::TopologyError);
  }
}
