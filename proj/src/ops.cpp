#include "incrseg/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <memory>

#include "incrseg/error.hpp"

namespace incrseg::ops {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

void require_rank4(const Var& x, const char* what) {
  if (x.value().rank() != 4) {
    throw Error(ErrorCode::ShapeError, std::string(what) + " expects N×C×H×W, got " + shape_string(x.shape()));
  }
}

void require_same_shape(const Var& a, const Var& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw Error(ErrorCode::ShapeError, std::string(what) + ": " + shape_string(a.shape()) + " vs " +
                                           shape_string(b.shape()));
  }
}

struct ConvDims {
  int n, cin, h, w, cout, kh, kw, hout, wout;
  int patch() const { return cin * kh * kw; }
  int pixels() const { return hout * wout; }
};

void im2col(const double* image, const ConvDims& d, const ConvGeometry& g, double* cols) {
  const int pixels = d.pixels();
  for (int c = 0; c < d.cin; ++c) {
    const double* plane = image + static_cast<std::size_t>(c) * d.h * d.w;
    for (int ki = 0; ki < d.kh; ++ki) {
      for (int kj = 0; kj < d.kw; ++kj) {
        double* row = cols + static_cast<std::size_t>((c * d.kh + ki) * d.kw + kj) * pixels;
        for (int oy = 0; oy < d.hout; ++oy) {
          const int iy = oy * g.stride - g.padding + ki * g.dilation;
          double* dst = row + static_cast<std::size_t>(oy) * d.wout;
          if (iy < 0 || iy >= d.h) {
            std::fill(dst, dst + d.wout, 0.0);
            continue;
          }
          const double* src = plane + static_cast<std::size_t>(iy) * d.w;
          for (int ox = 0; ox < d.wout; ++ox) {
            const int ix = ox * g.stride - g.padding + kj * g.dilation;
            dst[ox] = (ix >= 0 && ix < d.w) ? src[ix] : 0.0;
          }
        }
      }
    }
  }
}

void col2im_add(const double* cols, const ConvDims& d, const ConvGeometry& g, double* image) {
  const int pixels = d.pixels();
  for (int c = 0; c < d.cin; ++c) {
    double* plane = image + static_cast<std::size_t>(c) * d.h * d.w;
    for (int ki = 0; ki < d.kh; ++ki) {
      for (int kj = 0; kj < d.kw; ++kj) {
        const double* row = cols + static_cast<std::size_t>((c * d.kh + ki) * d.kw + kj) * pixels;
        for (int oy = 0; oy < d.hout; ++oy) {
          const int iy = oy * g.stride - g.padding + ki * g.dilation;
          if (iy < 0 || iy >= d.h) continue;
          const double* src = row + static_cast<std::size_t>(oy) * d.wout;
          double* dst = plane + static_cast<std::size_t>(iy) * d.w;
          for (int ox = 0; ox < d.wout; ++ox) {
            const int ix = ox * g.stride - g.padding + kj * g.dilation;
            if (ix >= 0 && ix < d.w) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

// Per-axis bilinear sampling table (half-pixel centres, clamped at edges).
struct AxisTaps {
  std::vector<int> lo, hi;
  std::vector<double> frac;
};

AxisTaps axis_taps(int in, int out) {
  AxisTaps taps;
  taps.lo.resize(out);
  taps.hi.resize(out);
  taps.frac.resize(out);
  const double ratio = static_cast<double>(in) / out;
  for (int o = 0; o < out; ++o) {
    double src = (o + 0.5) * ratio - 0.5;
    if (src < 0.0) src = 0.0;
    int lo = static_cast<int>(std::floor(src));
    if (lo > in - 1) lo = in - 1;
    taps.lo[o] = lo;
    taps.hi[o] = std::min(lo + 1, in - 1);
    taps.frac[o] = src - lo;
  }
  return taps;
}

}  // namespace

Var conv2d(const Var& x, const Var& weight, const Var& bias, ConvGeometry geom) {
  require_rank4(x, "conv2d input");
  if (weight.value().rank() != 4 || weight.dim(1) != x.dim(1)) {
    throw Error(ErrorCode::ShapeError, "conv2d weight " + shape_string(weight.shape()) + " incompatible with input " +
                                           shape_string(x.shape()));
  }
  ConvDims d{};
  d.n = x.dim(0);
  d.cin = x.dim(1);
  d.h = x.dim(2);
  d.w = x.dim(3);
  d.cout = weight.dim(0);
  d.kh = weight.dim(2);
  d.kw = weight.dim(3);
  d.hout = (d.h + 2 * geom.padding - geom.dilation * (d.kh - 1) - 1) / geom.stride + 1;
  d.wout = (d.w + 2 * geom.padding - geom.dilation * (d.kw - 1) - 1) / geom.stride + 1;
  if (d.hout <= 0 || d.wout <= 0) throw Error(ErrorCode::ShapeError, "conv2d output would be empty");
  if (bias.defined() && bias.value().size() != static_cast<std::size_t>(d.cout)) {
    throw Error(ErrorCode::ShapeError, "conv2d bias size mismatch");
  }

  const bool keep_cols = x.requires_grad() || weight.requires_grad();
  const std::size_t col_size = static_cast<std::size_t>(d.patch()) * d.pixels();
  auto cols = std::make_shared<std::vector<double>>(keep_cols ? col_size * d.n : col_size);

  Tensor out(Shape{d.n, d.cout, d.hout, d.wout});
  ConstMatrixMap wmat(weight.value().data(), d.cout, d.patch());
  const std::size_t in_stride = static_cast<std::size_t>(d.cin) * d.h * d.w;
  const std::size_t out_stride = static_cast<std::size_t>(d.cout) * d.pixels();
  for (int n = 0; n < d.n; ++n) {
    double* col = cols->data() + (keep_cols ? col_size * n : 0);
    im2col(x.value().data() + in_stride * n, d, geom, col);
    MatrixMap y(out.data() + out_stride * n, d.cout, d.pixels());
    y.noalias() = wmat * ConstMatrixMap(col, d.patch(), d.pixels());
    if (bias.defined()) {
      for (int c = 0; c < d.cout; ++c) y.row(c).array() += bias.value()[c];
    }
  }

  const bool has_bias = bias.defined();
  return Var::op(std::move(out), {x, weight, bias.defined() ? bias : Var::constant(Tensor())},
                 [d, geom, cols, col_size, in_stride, out_stride, has_bias](Var::Node& node) {
                   auto& xin = *node.parents[0];
                   auto& w = *node.parents[1];
                   ConstMatrixMap wmat(w.value.data(), d.cout, d.patch());
                   std::vector<double> dcol(xin.requires_grad ? col_size : 0);
                   for (int n = 0; n < d.n; ++n) {
                     ConstMatrixMap dy(node.grad.data() + out_stride * n, d.cout, d.pixels());
                     ConstMatrixMap col(cols->data() + col_size * n, d.patch(), d.pixels());
                     if (w.requires_grad) {
                       MatrixMap dw(w.grad_buffer().data(), d.cout, d.patch());
                       dw.noalias() += dy * col.transpose();
                     }
                     if (has_bias && node.parents[2]->requires_grad) {
                       Tensor& db = node.parents[2]->grad_buffer();
                       for (int c = 0; c < d.cout; ++c) db[c] += dy.row(c).sum();
                     }
                     if (xin.requires_grad) {
                       MatrixMap dc(dcol.data(), d.patch(), d.pixels());
                       dc.noalias() = wmat.transpose() * dy;
                       col2im_add(dcol.data(), d, geom, xin.grad_buffer().data() + in_stride * n);
                     }
                   }
                 });
}

Var relu(const Var& x) {
  Tensor out = x.value();
  for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
  return Var::op(std::move(out), {x}, [](Var::Node& node) {
    auto& in = *node.parents[0];
    if (!in.requires_grad) return;
    Tensor& g = in.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (in.value[i] > 0.0) g[i] += node.grad[i];
    }
  });
}

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  return Var::op(std::move(out), {a, b}, [](Var::Node& node) {
    for (auto& p : node.parents) {
      if (!p->requires_grad) continue;
      Tensor& g = p->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += node.grad[i];
    }
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  return Var::op(std::move(out), {a, b}, [](Var::Node& node) {
    for (std::size_t k = 0; k < 2; ++k) {
      auto& p = node.parents[k];
      if (!p->requires_grad) continue;
      const double sign = k == 0 ? 1.0 : -1.0;
      Tensor& g = p->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += sign * node.grad[i];
    }
  });
}

Var scale(const Var& x, double factor) {
  Tensor out = x.value();
  for (double& v : out.values()) v *= factor;
  return Var::op(std::move(out), {x}, [factor](Var::Node& node) {
    Tensor& g = node.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += factor * node.grad[i];
  });
}

Var add_scalar(const Var& x, double value) {
  Tensor out = x.value();
  for (double& v : out.values()) v += value;
  return Var::op(std::move(out), {x}, [](Var::Node& node) {
    Tensor& g = node.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += node.grad[i];
  });
}

Var sum(const Var& x) {
  double total = 0.0;
  for (double v : x.value().values()) total += v;
  return Var::op(Tensor::scalar(total), {x}, [](Var::Node& node) {
    Tensor& g = node.parents[0]->grad_buffer();
    const double up = node.grad[0];
    for (double& v : g.values()) v += up;
  });
}

Var mean(const Var& x) {
  const std::size_t n = x.value().size();
  if (n == 0) throw Error(ErrorCode::ShapeError, "mean of empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(n));
}

Var concat_channels(const std::vector<Var>& inputs) {
  if (inputs.empty()) throw Error(ErrorCode::ShapeError, "concat of nothing");
  const Var& first = inputs.front();
  require_rank4(first, "concat_channels");
  const int n = first.dim(0), h = first.dim(2), w = first.dim(3);
  int channels = 0;
  for (const Var& in : inputs) {
    require_rank4(in, "concat_channels");
    if (in.dim(0) != n || in.dim(2) != h || in.dim(3) != w) {
      throw Error(ErrorCode::ShapeError, "concat_channels extent mismatch");
    }
    channels += in.dim(1);
  }
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  Tensor out(Shape{n, channels, h, w});
  std::vector<int> offsets;
  int offset = 0;
  for (const Var& in : inputs) {
    offsets.push_back(offset);
    const int c = in.dim(1);
    for (int b = 0; b < n; ++b) {
      const double* src = in.value().data() + static_cast<std::size_t>(b) * c * plane;
      std::copy(src, src + c * plane, out.data() + (static_cast<std::size_t>(b) * channels + offset) * plane);
    }
    offset += c;
  }
  return Var::op(std::move(out), inputs, [offsets, channels, n, plane](Var::Node& node) {
    for (std::size_t k = 0; k < node.parents.size(); ++k) {
      auto& p = *node.parents[k];
      if (!p.requires_grad) continue;
      const int c = p.value.dim(1);
      Tensor& g = p.grad_buffer();
      for (int b = 0; b < n; ++b) {
        const double* src = node.grad.data() + (static_cast<std::size_t>(b) * channels + offsets[k]) * plane;
        double* dst = g.data() + static_cast<std::size_t>(b) * c * plane;
        for (std::size_t i = 0; i < c * plane; ++i) dst[i] += src[i];
      }
    }
  });
}

Var slice_channels(const Var& x, int begin, int end) {
  require_rank4(x, "slice_channels");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (begin < 0 || end > c || begin >= end) {
    throw Error(ErrorCode::ShapeError, "slice_channels range [" + std::to_string(begin) + "," + std::to_string(end) +
                                           ") outside " + std::to_string(c) + " channels");
  }
  const int k = end - begin;
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  Tensor out(Shape{n, k, h, w});
  for (int b = 0; b < n; ++b) {
    const double* src = x.value().data() + (static_cast<std::size_t>(b) * c + begin) * plane;
    std::copy(src, src + k * plane, out.data() + static_cast<std::size_t>(b) * k * plane);
  }
  return Var::op(std::move(out), {x}, [n, c, k, begin, plane](Var::Node& node) {
    Tensor& g = node.parents[0]->grad_buffer();
    for (int b = 0; b < n; ++b) {
      const double* src = node.grad.data() + static_cast<std::size_t>(b) * k * plane;
      double* dst = g.data() + (static_cast<std::size_t>(b) * c + begin) * plane;
      for (std::size_t i = 0; i < k * plane; ++i) dst[i] += src[i];
    }
  });
}

Var global_avg_pool(const Var& x) {
  require_rank4(x, "global_avg_pool");
  const int n = x.dim(0), c = x.dim(1);
  const std::size_t plane = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
  Tensor out(Shape{n, c, 1, 1});
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double* src = x.value().data() + i * plane;
    double s = 0.0;
    for (std::size_t j = 0; j < plane; ++j) s += src[j];
    out[i] = s / static_cast<double>(plane);
  }
  return Var::op(std::move(out), {x}, [plane](Var::Node& node) {
    Tensor& g = node.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < node.grad.size(); ++i) {
      const double share = node.grad[i] / static_cast<double>(plane);
      double* dst = g.data() + i * plane;
      for (std::size_t j = 0; j < plane; ++j) dst[j] += share;
    }
  });
}

Var broadcast_spatial(const Var& x, int height, int width) {
  require_rank4(x, "broadcast_spatial");
  if (x.dim(2) != 1 || x.dim(3) != 1) throw Error(ErrorCode::ShapeError, "broadcast_spatial expects N×C×1×1");
  const int n = x.dim(0), c = x.dim(1);
  const std::size_t plane = static_cast<std::size_t>(height) * width;
  Tensor out(Shape{n, c, height, width});
  for (std::size_t i = 0; i < x.value().size(); ++i) {
    std::fill(out.data() + i * plane, out.data() + (i + 1) * plane, x.value()[i]);
  }
  return Var::op(std::move(out), {x}, [plane](Var::Node& node) {
    Tensor& g = node.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double* src = node.grad.data() + i * plane;
      double s = 0.0;
      for (std::size_t j = 0; j < plane; ++j) s += src[j];
      g[i] += s;
    }
  });
}

Var resize_bilinear(const Var& x, int height, int width) {
  require_rank4(x, "resize_bilinear");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  auto ty = std::make_shared<AxisTaps>(axis_taps(h, height));
  auto tx = std::make_shared<AxisTaps>(axis_taps(w, width));
  Tensor out(Shape{n, c, height, width});
  const std::size_t in_plane = static_cast<std::size_t>(h) * w;
  const std::size_t out_plane = static_cast<std::size_t>(height) * width;
  for (std::size_t p = 0; p < static_cast<std::size_t>(n) * c; ++p) {
    const double* src = x.value().data() + p * in_plane;
    double* dst = out.data() + p * out_plane;
    for (int oy = 0; oy < height; ++oy) {
      const double* r0 = src + static_cast<std::size_t>(ty->lo[oy]) * w;
      const double* r1 = src + static_cast<std::size_t>(ty->hi[oy]) * w;
      const double fy = ty->frac[oy];
      for (int ox = 0; ox < width; ++ox) {
        const int x0 = tx->lo[ox], x1 = tx->hi[ox];
        const double fx = tx->frac[ox];
        const double top = r0[x0] + fx * (r0[x1] - r0[x0]);
        const double bottom = r1[x0] + fx * (r1[x1] - r1[x0]);
        dst[static_cast<std::size_t>(oy) * width + ox] = top + fy * (bottom - top);
      }
    }
  }
  return Var::op(std::move(out), {x}, [ty, tx, n, c, w, width, height, in_plane, out_plane](Var::Node& node) {
    Tensor& g = node.parents[0]->grad_buffer();
    for (std::size_t p = 0; p < static_cast<std::size_t>(n) * c; ++p) {
      const double* up = node.grad.data() + p * out_plane;
      double* dst = g.data() + p * in_plane;
      for (int oy = 0; oy < height; ++oy) {
        double* r0 = dst + static_cast<std::size_t>(ty->lo[oy]) * w;
        double* r1 = dst + static_cast<std::size_t>(ty->hi[oy]) * w;
        const double fy = ty->frac[oy];
        for (int ox = 0; ox < width; ++ox) {
          const double gv = up[static_cast<std::size_t>(oy) * width + ox];
          const int x0 = tx->lo[ox], x1 = tx->hi[ox];
          const double fx = tx->frac[ox];
          r0[x0] += gv * (1.0 - fy) * (1.0 - fx);
          r0[x1] += gv * (1.0 - fy) * fx;
          r1[x0] += gv * fy * (1.0 - fx);
          r1[x1] += gv * fy * fx;
        }
      }
    }
  });
}

Tensor softmax_channels(const Tensor& x) {
  if (x.rank() != 4) throw Error(ErrorCode::ShapeError, "softmax_channels expects N×C×H×W");
  const int n = x.dim(0), c = x.dim(1);
  const std::size_t plane = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
  Tensor out(x.shape());
  for (int b = 0; b < n; ++b) {
    const double* src = x.data() + static_cast<std::size_t>(b) * c * plane;
    double* dst = out.data() + static_cast<std::size_t>(b) * c * plane;
    for (std::size_t i = 0; i < plane; ++i) {
      double mx = src[i];
      for (int k = 1; k < c; ++k) mx = std::max(mx, src[k * plane + i]);
      double z = 0.0;
      for (int k = 0; k < c; ++k) {
        const double e = std::exp(src[k * plane + i] - mx);
        dst[k * plane + i] = e;
        z += e;
      }
      for (int k = 0; k < c; ++k) dst[k * plane + i] /= z;
    }
  }
  return out;
}

Var softmax_channels(const Var& x) {
  require_rank4(x, "softmax_channels");
  Tensor out = softmax_channels(x.value());
  const int n = x.dim(0), c = x.dim(1);
  const std::size_t plane = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
  return Var::op(out, {x}, [out, n, c, plane](Var::Node& node) {
    Tensor& g = node.parents[0]->grad_buffer();
    for (int b = 0; b < n; ++b) {
      const std::size_t base = static_cast<std::size_t>(b) * c * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        double dot = 0.0;
        for (int k = 0; k < c; ++k) dot += node.grad[base + k * plane + i] * out[base + k * plane + i];
        for (int k = 0; k < c; ++k) {
          const std::size_t j = base + k * plane + i;
          g[j] += out[j] * (node.grad[j] - dot);
        }
      }
    }
  });
}

Var kl_divergence(const Tensor& target, const Var& probs, double floor) {
  if (target.shape() != probs.shape() || target.rank() != 4) {
    throw Error(ErrorCode::ShapeError, "kl_divergence shapes " + shape_string(target.shape()) + " vs " +
                                           shape_string(probs.shape()));
  }
  const int n = target.dim(0), c = target.dim(1);
  const std::size_t plane = static_cast<std::size_t>(target.dim(2)) * target.dim(3);
  const double pixels = static_cast<double>(n) * static_cast<double>(plane);
  double total = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    const double t = target[i];
    if (t <= 0.0) continue;
    total += t * (std::log(std::max(t, floor)) - std::log(std::max(probs.value()[i], floor)));
  }
  (void)c;
  return Var::op(Tensor::scalar(total / pixels), {probs}, [target, floor, pixels](Var::Node& node) {
    auto& in = *node.parents[0];
    Tensor& g = in.grad_buffer();
    const double up = node.grad[0] / pixels;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double p = in.value[i];
      if (target[i] > 0.0 && p > floor) g[i] -= up * target[i] / p;
    }
  });
}

Var cross_entropy(const Var& logits, const LabelBatch& labels) {
  require_rank4(logits, "cross_entropy");
  const int n = logits.dim(0), c = logits.dim(1), h = logits.dim(2), w = logits.dim(3);
  if (labels.batch != n || labels.height != h || labels.width != w) {
    throw Error(ErrorCode::ShapeError, "cross_entropy labels do not match logits " + shape_string(logits.shape()));
  }
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels.labels[i] < 0 || labels.labels[i] >= c) {
      throw Error(ErrorCode::LabelRange, "label " + std::to_string(labels.labels[i]) + " outside [0," +
                                             std::to_string(c) + ")");
    }
  }
  Tensor probs = softmax_channels(logits.value());
  double total = 0.0;
  for (int b = 0; b < n; ++b) {
    const double* src = logits.value().data() + static_cast<std::size_t>(b) * c * plane;
    for (std::size_t i = 0; i < plane; ++i) {
      double mx = src[i];
      for (int k = 1; k < c; ++k) mx = std::max(mx, src[k * plane + i]);
      double z = 0.0;
      for (int k = 0; k < c; ++k) z += std::exp(src[k * plane + i] - mx);
      const int y = labels.labels[static_cast<std::size_t>(b) * plane + i];
      total -= src[y * plane + i] - mx - std::log(z);
    }
  }
  const double pixels = static_cast<double>(n) * static_cast<double>(plane);
  auto target = std::make_shared<std::vector<int>>(labels.labels);
  return Var::op(Tensor::scalar(total / pixels), {logits},
                 [probs = std::move(probs), target, n, c, plane, pixels](Var::Node& node) {
                   Tensor& g = node.parents[0]->grad_buffer();
                   const double up = node.grad[0] / pixels;
                   for (int b = 0; b < n; ++b) {
                     const std::size_t base = static_cast<std::size_t>(b) * c * plane;
                     for (std::size_t i = 0; i < plane; ++i) {
                       const int y = (*target)[static_cast<std::size_t>(b) * plane + i];
                       for (int k = 0; k < c; ++k) {
                         const std::size_t j = base + k * plane + i;
                         g[j] += up * (probs[j] - (k == y ? 1.0 : 0.0));
                       }
                     }
                   }
                 });
}

Var gather_pixels(const Var& x, const std::vector<PixelIndex>& pixels) {
  require_rank4(x, "gather_pixels");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  for (const PixelIndex& p : pixels) {
    if (p.n < 0 || p.n >= n || p.y < 0 || p.y >= h || p.x < 0 || p.x >= w) {
      throw Error(ErrorCode::ShapeError, "gather_pixels index outside " + shape_string(x.shape()));
    }
  }
  Tensor out(Shape{static_cast<int>(pixels.size()) * c});
  for (std::size_t j = 0; j < pixels.size(); ++j) {
    for (int k = 0; k < c; ++k) out[j * c + k] = x.value().at(pixels[j].n, k, pixels[j].y, pixels[j].x);
  }
  return Var::op(std::move(out), {x}, [pixels, c](Var::Node& node) {
    Tensor& g = node.parents[0]->grad_buffer();
    for (std::size_t j = 0; j < pixels.size(); ++j) {
      for (int k = 0; k < c; ++k) g.at(pixels[j].n, k, pixels[j].y, pixels[j].x) += node.grad[j * c + k];
    }
  });
}

Var l2_distance(const Var& a, const Var& b) {
  if (a.value().size() != b.value().size()) {
    throw Error(ErrorCode::ShapeError, "l2_distance length mismatch");
  }
  double ss = 0.0;
  for (std::size_t i = 0; i < a.value().size(); ++i) {
    const double d = a.value()[i] - b.value()[i];
    ss += d * d;
  }
  const double dist = std::sqrt(ss);
  return Var::op(Tensor::scalar(dist), {a, b}, [dist](Var::Node& node) {
    // The norm is not differentiable at 0; the zero subgradient is used there.
    if (dist == 0.0) return;
    auto& pa = *node.parents[0];
    auto& pb = *node.parents[1];
    const double up = node.grad[0] / dist;
    for (std::size_t i = 0; i < pa.value.size(); ++i) {
      const double d = pa.value[i] - pb.value[i];
      if (pa.requires_grad) pa.grad_buffer()[i] += up * d;
      if (pb.requires_grad) pb.grad_buffer()[i] -= up * d;
    }
  });
}

}  // namespace incrseg::ops
