#include "incrseg/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numbers>
#include <random>
#include <set>

#include "incrseg/error.hpp"
#include "incrseg/png_io.hpp"

namespace incrseg {

namespace fs = std::filesystem;

const char* to_string(ShapeFamily family) {
  switch (family) {
    case ShapeFamily::disk: return "disk";
    case ShapeFamily::square: return "square";
    case ShapeFamily::triangle: return "triangle";
    case ShapeFamily::diamond: return "diamond";
    case ShapeFamily::ellipse: return "ellipse";
    case ShapeFamily::ring: return "ring";
  }
  return "unknown";
}

ShapeFamily family_of_class(int class_id) { return static_cast<ShapeFamily>((class_id - 1) % 6); }

namespace {

constexpr double kSquareHalf = 0.8;
constexpr double kEllipseMinor = 0.55;
constexpr double kRingInner = 0.5;
const double kSqrt3 = std::sqrt(3.0);

double edge(double ax, double ay, double bx, double by, double px, double py) {
  return (bx - ax) * (py - ay) - (by - ay) * (px - ax);
}

std::array<double, 3> class_colour(int class_id) {
  // Golden-ratio hue walk keeps neighbouring IDs far apart on the colour wheel.
  const double hue = std::fmod((class_id - 1) * 0.618033988749895, 1.0) * 6.0;
  const double value = 0.95, saturation = 0.85;
  const double c = value * saturation;
  const double x = c * (1.0 - std::fabs(std::fmod(hue, 2.0) - 1.0));
  const double m = value - c;
  std::array<double, 3> rgb{};
  switch (static_cast<int>(hue)) {
    case 0: rgb = {c, x, 0}; break;
    case 1: rgb = {x, c, 0}; break;
    case 2: rgb = {0, c, x}; break;
    case 3: rgb = {0, x, c}; break;
    case 4: rgb = {x, 0, c}; break;
    default: rgb = {c, 0, x}; break;
  }
  for (double& v : rgb) v += m;
  return rgb;
}

void check_spec(const SyntheticSpec& spec) {
  if (spec.num_classes < 2 || spec.height < 16 || spec.width < 16 || spec.images_per_class < 1 ||
      spec.max_shapes < 1 || spec.min_radius < 1 || spec.max_radius < spec.min_radius) {
    throw Error(ErrorCode::ContractError, "synthetic spec needs num_classes >= 2, H,W >= 16, positive counts and "
                                          "min_radius <= max_radius");
  }
  const double r = spec.min_radius;
  if (2 * spec.min_radius > std::min(spec.height, spec.width)) {
    throw Error(ErrorCode::SpecInfeasible, "a shape of radius " + std::to_string(spec.min_radius) + " does not fit " +
                                               std::to_string(spec.height) + "x" + std::to_string(spec.width));
  }
  const int shapes = std::min(spec.max_shapes, spec.num_classes);
  if (shapes * std::numbers::pi * r * r > static_cast<double>(spec.height) * spec.width) {
    throw Error(ErrorCode::SpecInfeasible, std::to_string(shapes) + " disjoint shapes of radius " +
                                               std::to_string(spec.min_radius) + " exceed the image area");
  }
}

SyntheticScene render_scene(std::mt19937_64& rng, const SyntheticSpec& spec, int primary, int index) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 1.0);

  // Class list: primary first, then distinct extras.
  std::vector<int> classes{primary};
  const int extra = std::uniform_int_distribution<int>(0, std::min(spec.max_shapes, spec.num_classes) - 1)(rng);
  std::vector<int> pool;
  for (int c = 1; c <= spec.num_classes; ++c) {
    if (c != primary) pool.push_back(c);
  }
  std::shuffle(pool.begin(), pool.end(), rng);
  classes.insert(classes.end(), pool.begin(), pool.begin() + extra);

  SyntheticScene scene;
  for (int cls : classes) {
    constexpr int kAttempts = 64;
    for (int attempt = 0; attempt < kAttempts; ++attempt) {
      const double r = spec.min_radius + unit(rng) * (spec.max_radius - spec.min_radius);
      const double rr = std::min(r, 0.5 * std::min(spec.height, spec.width));
      const double cx = rr + unit(rng) * (spec.width - 2 * rr);
      const double cy = rr + unit(rng) * (spec.height - 2 * rr);
      bool clear = true;
      for (const ShapeInstance& s : scene.shapes) {
        if (std::hypot(cx - s.cx, cy - s.cy) < s.radius + rr + 1.0) clear = false;
      }
      if (clear) {
        scene.shapes.push_back({cls, family_of_class(cls), cx, cy, rr});
        break;
      }
    }
  }

  const int h = spec.height, w = spec.width;
  LabeledSample& sample = scene.sample;
  sample.name = "synth_" + std::to_string(index);
  sample.height = h;
  sample.width = w;
  sample.mask.assign(static_cast<std::size_t>(h) * w, kBackground);
  sample.image = Tensor(Shape{3, h, w});

  // Background: grey level, oriented stripes and per-pixel noise.
  const double base = 0.35 + 0.3 * unit(rng);
  const double freq = 0.2 + 0.6 * unit(rng);
  const double angle = unit(rng) * std::numbers::pi;
  const double phase = unit(rng) * 2.0 * std::numbers::pi;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double stripe = 0.08 * std::sin(freq * (x * std::cos(angle) + y * std::sin(angle)) + phase);
      for (int c = 0; c < 3; ++c) sample.image.at(c, y, x) = base + stripe + 0.04 * noise(rng);
    }
  }
  for (const ShapeInstance& s : scene.shapes) {
    const auto colour = class_colour(s.class_id);
    const int y0 = std::max(0, static_cast<int>(std::floor(s.cy - s.radius)));
    const int y1 = std::min(h - 1, static_cast<int>(std::ceil(s.cy + s.radius)));
    const int x0 = std::max(0, static_cast<int>(std::floor(s.cx - s.radius)));
    const int x1 = std::min(w - 1, static_cast<int>(std::ceil(s.cx + s.radius)));
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        if (!s.contains(x + 0.5, y + 0.5)) continue;
        sample.mask[static_cast<std::size_t>(y) * w + x] = s.class_id;
        for (int c = 0; c < 3; ++c) sample.image.at(c, y, x) = colour[c] + 0.05 * noise(rng);
      }
    }
  }
  for (double& v : sample.image.values()) v = std::clamp(v, 0.0, 1.0);
  return scene;
}

}  // namespace

bool ShapeInstance::contains(double x, double y) const {
  const double dx = x - cx, dy = y - cy, r = radius;
  switch (family) {
    case ShapeFamily::disk: return dx * dx + dy * dy <= r * r;
    case ShapeFamily::square: return std::fabs(dx) <= kSquareHalf * r && std::fabs(dy) <= kSquareHalf * r;
    case ShapeFamily::triangle: {
      const double ax = 0, ay = -r, bx = r * kSqrt3 / 2, by = r / 2, qx = -r * kSqrt3 / 2, qy = r / 2;
      return edge(ax, ay, bx, by, dx, dy) >= 0 && edge(bx, by, qx, qy, dx, dy) >= 0 &&
             edge(qx, qy, ax, ay, dx, dy) >= 0;
    }
    case ShapeFamily::diamond: return std::fabs(dx) + std::fabs(dy) <= r;
    case ShapeFamily::ellipse: {
      const double ex = dx / r, ey = dy / (kEllipseMinor * r);
      return ex * ex + ey * ey <= 1.0;
    }
    case ShapeFamily::ring: {
      const double d2 = dx * dx + dy * dy;
      return d2 <= r * r && d2 >= kRingInner * kRingInner * r * r;
    }
  }
  return false;
}

double ShapeInstance::area() const {
  const double r = radius;
  switch (family) {
    case ShapeFamily::disk: return std::numbers::pi * r * r;
    case ShapeFamily::square: return 4.0 * kSquareHalf * kSquareHalf * r * r;
    case ShapeFamily::triangle: return 3.0 * kSqrt3 / 4.0 * r * r;
    case ShapeFamily::diamond: return 2.0 * r * r;
    case ShapeFamily::ellipse: return std::numbers::pi * kEllipseMinor * r * r;
    case ShapeFamily::ring: return std::numbers::pi * (1.0 - kRingInner * kRingInner) * r * r;
  }
  return 0.0;
}

double ShapeInstance::perimeter() const {
  const double r = radius;
  switch (family) {
    case ShapeFamily::disk: return 2.0 * std::numbers::pi * r;
    case ShapeFamily::square: return 8.0 * kSquareHalf * r;
    case ShapeFamily::triangle: return 3.0 * kSqrt3 * r;
    case ShapeFamily::diamond: return 4.0 * std::sqrt(2.0) * r;
    case ShapeFamily::ellipse: {
      const double a = r, b = kEllipseMinor * r;
      return std::numbers::pi * (3 * (a + b) - std::sqrt((3 * a + b) * (a + 3 * b)));
    }
    case ShapeFamily::ring: return 2.0 * std::numbers::pi * (1.0 + kRingInner) * r;
  }
  return 0.0;
}

std::vector<SyntheticScene> generate_synthetic_scenes(std::uint64_t seed, const SyntheticSpec& spec) {
  check_spec(spec);
  std::mt19937_64 rng(seed);
  std::vector<SyntheticScene> scenes;
  scenes.reserve(static_cast<std::size_t>(spec.num_classes) * spec.images_per_class);
  for (int c = 1; c <= spec.num_classes; ++c) {
    for (int i = 0; i < spec.images_per_class; ++i) {
      scenes.push_back(render_scene(rng, spec, c, static_cast<int>(scenes.size())));
    }
  }
  // Interleave classes so that any prefix of the list mixes primaries.
  std::shuffle(scenes.begin(), scenes.end(), rng);
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "synth_%05zu", i);
    scenes[i].sample.name = name;
  }
  return scenes;
}

std::vector<LabeledSample> generate_synthetic_dataset(std::uint64_t seed, const SyntheticSpec& spec) {
  std::vector<LabeledSample> out;
  for (auto& scene : generate_synthetic_scenes(seed, spec)) out.push_back(std::move(scene.sample));
  return out;
}

namespace {

std::map<std::string, fs::path> png_stems(const fs::path& dir) {
  std::map<std::string, fs::path> stems;
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw Error(ErrorCode::IoError, "missing directory " + dir.string());
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".png") stems[entry.path().stem().string()] = entry.path();
  }
  return stems;
}

}  // namespace

std::vector<LabeledSample> load_voc_format(const fs::path& root, const std::vector<int>& valid_classes) {
  const auto images = png_stems(root / "images");
  const auto masks = png_stems(root / "masks");
  for (const auto& [stem, path] : images) {
    if (!masks.count(stem)) throw Error(ErrorCode::PairMismatch, "image '" + stem + "' has no mask");
  }
  for (const auto& [stem, path] : masks) {
    if (!images.count(stem)) throw Error(ErrorCode::PairMismatch, "mask '" + stem + "' has no image");
  }
  std::set<int> allowed(valid_classes.begin(), valid_classes.end());
  allowed.insert(kBackground);

  std::vector<LabeledSample> samples;
  for (const auto& [stem, image_path] : images) {
    const RasterImage rgb = read_png_rgb(image_path);
    const RasterImage idx = read_png_indexed(masks.at(stem));
    if (rgb.width != idx.width || rgb.height != idx.height) {
      throw Error(ErrorCode::PairMismatch, "image and mask extents differ for '" + stem + "'");
    }
    LabeledSample s;
    s.name = stem;
    s.height = rgb.height;
    s.width = rgb.width;
    s.image = Tensor(Shape{3, rgb.height, rgb.width});
    for (int y = 0; y < rgb.height; ++y) {
      for (int x = 0; x < rgb.width; ++x) {
        for (int c = 0; c < 3; ++c) {
          s.image.at(c, y, x) = rgb.pixels[(static_cast<std::size_t>(y) * rgb.width + x) * 3 + c] / 255.0;
        }
      }
    }
    s.mask.assign(idx.pixels.begin(), idx.pixels.end());
    for (int v : s.mask) {
      if (!allowed.count(v)) {
        throw Error(ErrorCode::InvalidMask, masks.at(stem).string() + " contains unknown class value " +
                                                std::to_string(v));
      }
    }
    samples.push_back(std::move(s));
  }
  return samples;
}

std::vector<LabeledSample> load_voc_format(const fs::path& root, const TaskSchedule& schedule) {
  return load_voc_format(root, schedule.class_order);
}

void save_voc_format(const std::vector<LabeledSample>& samples, const fs::path& root) {
  fs::create_directories(root / "images");
  fs::create_directories(root / "masks");
  for (const LabeledSample& s : samples) {
    RasterImage rgb{s.width, s.height, 3, {}};
    rgb.pixels.resize(static_cast<std::size_t>(s.width) * s.height * 3);
    for (int y = 0; y < s.height; ++y) {
      for (int x = 0; x < s.width; ++x) {
        for (int c = 0; c < 3; ++c) {
          const double v = std::clamp(s.image.at(c, y, x), 0.0, 1.0);
          rgb.pixels[(static_cast<std::size_t>(y) * s.width + x) * 3 + c] =
              static_cast<std::uint8_t>(std::lround(v * 255.0));
        }
      }
    }
    RasterImage mask{s.width, s.height, 1, {}};
    mask.pixels.reserve(s.mask.size());
    for (int v : s.mask) {
      if (v < 0 || v > 255) throw Error(ErrorCode::InvalidMask, "class " + std::to_string(v) + " does not fit 8 bits");
      mask.pixels.push_back(static_cast<std::uint8_t>(v));
    }
    write_png(root / "images" / (s.name + ".png"), rgb);
    write_png(root / "masks" / (s.name + ".png"), mask);
  }
}

}  // namespace incrseg
