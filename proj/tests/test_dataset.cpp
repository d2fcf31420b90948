#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <set>

#include "incrseg/dataset.hpp"
#include "incrseg/error.hpp"
#include "incrseg/png_io.hpp"

using namespace incrseg;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("incrseg_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

SyntheticSpec small_spec() {
  SyntheticSpec spec;
  spec.num_classes = 5;
  spec.images_per_class = 20;
  spec.height = 48;
  spec.width = 48;
  spec.min_radius = 6;
  spec.max_radius = 12;
  return spec;
}

}  // namespace

TEST_CASE("generator is deterministic per seed") {
  const auto a = generate_synthetic_dataset(7, small_spec());
  const auto b = generate_synthetic_dataset(7, small_spec());
  const auto c = generate_synthetic_dataset(8, small_spec());
  REQUIRE(a.size() == b.size());
  bool any_difference = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].name == b[i].name);
    CHECK(a[i].mask == b[i].mask);
    CHECK(a[i].image.storage() == b[i].image.storage());
    any_difference = any_difference || a[i].mask != c[i].mask;
  }
  CHECK(any_difference);
}

TEST_CASE("every class appears in at least images_per_class masks") {
  const SyntheticSpec spec = small_spec();
  const auto samples = generate_synthetic_dataset(3, spec);
  CHECK(samples.size() == static_cast<std::size_t>(spec.num_classes * spec.images_per_class));
  std::map<int, int> images_with;
  for (const auto& s : samples) {
    const std::set<int> present(s.mask.begin(), s.mask.end());
    for (int c : present) {
      CHECK(c >= 0);
      CHECK(c <= spec.num_classes);
      ++images_with[c];
    }
    const auto [lo, hi] = std::minmax_element(s.image.values().begin(), s.image.values().end());
    CHECK(*lo >= 0.0);
    CHECK(*hi <= 1.0);
  }
  for (int c = 1; c <= spec.num_classes; ++c) CHECK(images_with[c] >= spec.images_per_class);
}

TEST_CASE("mask areas match analytic shape areas within the perimeter") {
  SyntheticSpec spec = small_spec();
  spec.num_classes = 6;
  spec.images_per_class = 5;
  for (const auto& scene : generate_synthetic_scenes(5, spec)) {
    for (const ShapeInstance& shape : scene.shapes) {
      const auto& m = scene.sample.mask;
      const double count = static_cast<double>(std::count(m.begin(), m.end(), shape.class_id));
      CHECK(std::fabs(count - shape.area()) <= shape.perimeter());
    }
  }
}

TEST_CASE("shapes do not overlap and classes are distinct per image") {
  for (const auto& scene : generate_synthetic_scenes(9, small_spec())) {
    std::set<int> classes;
    for (std::size_t i = 0; i < scene.shapes.size(); ++i) {
      CHECK(classes.insert(scene.shapes[i].class_id).second);
      for (std::size_t j = i + 1; j < scene.shapes.size(); ++j) {
        const auto& a = scene.shapes[i];
        const auto& b = scene.shapes[j];
        CHECK(std::hypot(a.cx - b.cx, a.cy - b.cy) >= a.radius + b.radius);
      }
    }
  }
}

TEST_CASE("infeasible specs are rejected") {
  SyntheticSpec spec;
  spec.height = 16;
  spec.width = 16;
  spec.max_shapes = 3;
  spec.min_radius = 8;
  spec.max_radius = 8;
  try {
    generate_synthetic_dataset(1, spec);
    FAIL("expected SPEC_INFEASIBLE");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::SpecInfeasible);
  }
}

TEST_CASE("VOC-format round trip") {
  const fs::path root = scratch_dir("voc_roundtrip");
  SyntheticSpec spec = small_spec();
  spec.images_per_class = 1;
  const auto samples = generate_synthetic_dataset(4, spec);
  save_voc_format(samples, root);
  const auto loaded = load_voc_format(root, std::vector<int>{1, 2, 3, 4, 5});
  REQUIRE(loaded.size() == samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    CHECK(loaded[i].name == samples[i].name);
    CHECK(loaded[i].mask == samples[i].mask);
    double worst = 0.0;
    for (std::size_t k = 0; k < samples[i].image.size(); ++k) {
      worst = std::max(worst, std::fabs(loaded[i].image[k] - samples[i].image[k]));
    }
    CHECK(worst <= 0.5 / 255.0 + 1e-12);
  }
  fs::remove_all(root);
}

TEST_CASE("VOC loader errors") {
  const fs::path root = scratch_dir("voc_errors");
  fs::create_directories(root / "images");
  fs::create_directories(root / "masks");
  RasterImage rgb{4, 4, 3, std::vector<std::uint8_t>(48, 100)};
  RasterImage mask{4, 4, 1, std::vector<std::uint8_t>(16, 0)};
  write_png(root / "images" / "a.png", rgb);
  write_png(root / "masks" / "a.png", mask);
  write_png(root / "images" / "b.png", rgb);
  write_png(root / "masks" / "b.png", mask);
  CHECK(load_voc_format(root, std::vector<int>{1}).size() == 2);

  SUBCASE("image without mask") {
    write_png(root / "images" / "c.png", rgb);
    try {
      load_voc_format(root, std::vector<int>{1});
      FAIL("expected PAIR_MISMATCH");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::PairMismatch);
      CHECK(std::string(e.what()).find("'c'") != std::string::npos);
    }
  }
  SUBCASE("unknown mask value") {
    mask.pixels[5] = 255;
    write_png(root / "masks" / "b.png", mask);
    try {
      load_voc_format(root, std::vector<int>{1, 2, 3});
      FAIL("expected INVALID_MASK");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::InvalidMask);
    }
  }
  SUBCASE("extent mismatch") {
    write_png(root / "masks" / "b.png", RasterImage{3, 4, 1, std::vector<std::uint8_t>(12, 0)});
    try {
      load_voc_format(root, std::vector<int>{1});
      FAIL("expected PAIR_MISMATCH");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::PairMismatch);
    }
  }
  SUBCASE("missing directory") {
    try {
      load_voc_format(root / "nowhere", std::vector<int>{1});
      FAIL("expected IO_ERROR");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::IoError);
    }
  }
  fs::remove_all(root);
}
