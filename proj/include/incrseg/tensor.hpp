#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace incrseg {

using Shape = std::vector<int>;

std::string shape_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

// Dense row-major double tensor. Layout for images and feature maps is
// N×C×H×W; label maps are kept separately as integer buffers.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor scalar(double value) { return Tensor(Shape{1}, value); }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  int dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  const std::vector<double>& storage() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  // 4-D accessors (N×C×H×W).
  double& at(int n, int c, int h, int w) { return data_[offset(n, c, h, w)]; }
  double at(int n, int c, int h, int w) const { return data_[offset(n, c, h, w)]; }

  // 3-D accessors (C×H×W).
  double& at(int c, int h, int w) {
    return data_[(static_cast<std::size_t>(c) * shape_[1] + h) * shape_[2] + w];
  }
  double at(int c, int h, int w) const {
    return data_[(static_cast<std::size_t>(c) * shape_[1] + h) * shape_[2] + w];
  }

  void fill(double value);
  Tensor reshaped(Shape shape) const;

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

 private:
  std::size_t offset(int n, int c, int h, int w) const {
    return ((static_cast<std::size_t>(n) * shape_[1] + c) * shape_[2] + h) * shape_[3] + w;
  }

  Shape shape_;
  std::vector<double> data_;
};

// Integer map over a batch of images, B×H×W row-major.
struct LabelBatch {
  int batch = 0;
  int height = 0;
  int width = 0;
  std::vector<int> labels;

  LabelBatch() = default;
  LabelBatch(int b, int h, int w, int fill = 0)
      : batch(b), height(h), width(w), labels(static_cast<std::size_t>(b) * h * w, fill) {}

  std::size_t size() const { return labels.size(); }
  int& at(int n, int y, int x) { return labels[(static_cast<std::size_t>(n) * height + y) * width + x]; }
  int at(int n, int y, int x) const { return labels[(static_cast<std::size_t>(n) * height + y) * width + x]; }
};

}  // namespace incrseg
