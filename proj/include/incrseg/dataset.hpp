#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "incrseg/schedule.hpp"

namespace incrseg {

struct SyntheticSpec {
  int num_classes = 5;
  int images_per_class = 20;
  int height = 64;
  int width = 64;
  int max_shapes = 3;
  int min_radius = 8;
  int max_radius = 16;
};

enum class ShapeFamily { disk, square, triangle, diamond, ellipse, ring };

const char* to_string(ShapeFamily family);

// Each class owns one family and one colour; family = (class_id - 1) mod 6.
ShapeFamily family_of_class(int class_id);

struct ShapeInstance {
  int class_id = 0;
  ShapeFamily family = ShapeFamily::disk;
  double cx = 0.0;
  double cy = 0.0;
  double radius = 0.0;  // radius of the bounding disk

  bool contains(double x, double y) const;
  double area() const;
  double perimeter() const;
};

struct SyntheticScene {
  LabeledSample sample;
  std::vector<ShapeInstance> shapes;
};

// Deterministic for a fixed seed. Every class is the primary shape of
// `images_per_class` images; each image holds 1..max_shapes non-overlapping
// shapes of distinct classes on a textured background. Masks are the exact
// pixel-centre rasterisation of the shapes. Image values lie in [0, 1].
std::vector<SyntheticScene> generate_synthetic_scenes(std::uint64_t seed, const SyntheticSpec& spec);
std::vector<LabeledSample> generate_synthetic_dataset(std::uint64_t seed, const SyntheticSpec& spec);

// Reads `root/images/*.png` and `root/masks/*.png` (single-channel indexed),
// paired by file stem and returned in stem order. Mask values must belong to
// {0} ∪ valid_classes.
std::vector<LabeledSample> load_voc_format(const std::filesystem::path& root, const std::vector<int>& valid_classes);
std::vector<LabeledSample> load_voc_format(const std::filesystem::path& root, const TaskSchedule& schedule);

// Writes samples in the layout read by load_voc_format.
void save_voc_format(const std::vector<LabeledSample>& samples, const std::filesystem::path& root);

}  // namespace incrseg
