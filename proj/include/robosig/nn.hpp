#pragma once

// Layer primitives with hand-written backward passes. Every backward
// accumulates (+=) into parameter gradients and overwrites input gradients.

#include <Eigen/Core>
#include <cmath>
#include <algorithm>
#include <cstddef>
#include <utility>
#include <vector>

#include "robosig/tensor.hpp"

namespace robosig::nn {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct ConvGeometry {
  std::size_t kernel = 3;
  std::size_t stride = 1;
  std::size_t pad = 1;

  std::size_t out_extent(std::size_t in) const {
    return (in + 2 * pad - kernel) / stride + 1;
  }
};

namespace detail {

// Output columns [lo, hi) whose input column ow * stride + offset is in range.
inline std::pair<long, long> valid_range(long offset, std::size_t stride, std::size_t in,
                                         std::size_t out) {
  const long s = static_cast<long>(stride);
  long lo = offset >= 0 ? 0 : (-offset + s - 1) / s;
  long hi = (static_cast<long>(in) - 1 - offset) / s + 1;
  if (static_cast<long>(in) - 1 - offset < 0) hi = 0;
  hi = std::min<long>(hi, static_cast<long>(out));
  return {std::min(lo, hi), hi};
}

template <typename T>
void im2col(const T* x, std::size_t channels, std::size_t height, std::size_t width,
            const ConvGeometry& g, std::size_t out_h, std::size_t out_w, T* cols) {
  const std::size_t k = g.kernel;
  const std::size_t plane = out_h * out_w;
  const long pad = static_cast<long>(g.pad);
  for (std::size_t ki = 0; ki < k; ++ki) {
    const auto [oh_lo, oh_hi] = valid_range(static_cast<long>(ki) - pad, g.stride, height, out_h);
    for (std::size_t kj = 0; kj < k; ++kj) {
      const long col_off = static_cast<long>(kj) - pad;
      const auto [ow_lo, ow_hi] = valid_range(col_off, g.stride, width, out_w);
      for (std::size_t c = 0; c < channels; ++c) {
        const T* xc = x + c * height * width;
        T* row = cols + ((c * k + ki) * k + kj) * plane;
        std::fill_n(row, static_cast<std::size_t>(oh_lo) * out_w, T(0));
        for (long oh = oh_lo; oh < oh_hi; ++oh) {
          const long ih = oh * static_cast<long>(g.stride) + static_cast<long>(ki) - pad;
          const T* src = xc + ih * static_cast<long>(width) + col_off;
          T* dst = row + oh * static_cast<long>(out_w);
          std::fill(dst, dst + ow_lo, T(0));
          if (g.stride == 1) {
            std::copy(src + ow_lo, src + ow_hi, dst + ow_lo);
          } else {
            for (long ow = ow_lo; ow < ow_hi; ++ow) dst[ow] = src[ow * static_cast<long>(g.stride)];
          }
          std::fill(dst + ow_hi, dst + out_w, T(0));
        }
        std::fill(row + oh_hi * static_cast<long>(out_w), row + plane, T(0));
      }
    }
  }
}

template <typename T>
void col2im(const T* cols, std::size_t channels, std::size_t height, std::size_t width,
            const ConvGeometry& g, std::size_t out_h, std::size_t out_w, T* x) {
  const std::size_t k = g.kernel;
  const std::size_t plane = out_h * out_w;
  const long pad = static_cast<long>(g.pad);
  for (std::size_t ki = 0; ki < k; ++ki) {
    const auto [oh_lo, oh_hi] = valid_range(static_cast<long>(ki) - pad, g.stride, height, out_h);
    for (std::size_t kj = 0; kj < k; ++kj) {
      const long col_off = static_cast<long>(kj) - pad;
      const auto [ow_lo, ow_hi] = valid_range(col_off, g.stride, width, out_w);
      for (std::size_t c = 0; c < channels; ++c) {
        T* xc = x + c * height * width;
        const T* row = cols + ((c * k + ki) * k + kj) * plane;
        for (long oh = oh_lo; oh < oh_hi; ++oh) {
          const long ih = oh * static_cast<long>(g.stride) + static_cast<long>(ki) - pad;
          T* dst = xc + ih * static_cast<long>(width) + col_off;
          const T* src = row + oh * static_cast<long>(out_w);
          if (g.stride == 1) {
            for (long ow = ow_lo; ow < ow_hi; ++ow) dst[ow] += src[ow];
          } else {
            for (long ow = ow_lo; ow < ow_hi; ++ow) dst[ow * static_cast<long>(g.stride)] += src[ow];
          }
        }
      }
    }
  }
}

}  // namespace detail

// x: (N, C, H, W), weight: (O, C, k, k), bias: (O) -> (N, O, H', W')
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight,
                 const Tensor<T>& bias, const ConvGeometry& g) {
  require(x.rank() == 4 && weight.rank() == 4, "conv2d expects rank-4 input and weight");
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t o = weight.dim(0);
  require(weight.dim(1) == c && weight.dim(2) == g.kernel && weight.dim(3) == g.kernel,
          "conv2d weight shape " + shape_string(weight.shape()) +
              " does not match input " + shape_string(x.shape()));
  require(bias.size() == o, "conv2d bias size mismatch");
  const std::size_t oh = g.out_extent(h), ow = g.out_extent(w);
  const std::size_t plane = oh * ow, patch = c * g.kernel * g.kernel;

  Tensor<T> y({n, o, oh, ow});
  Eigen::Map<const RowMatrix<T>> wm(weight.data(), o, patch);
  Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> bv(bias.data(), o);
  RowMatrix<T> cols(patch, plane);
  for (std::size_t i = 0; i < n; ++i) {
    detail::im2col(x.data() + i * c * h * w, c, h, w, g, oh, ow, cols.data());
    Eigen::Map<RowMatrix<T>> ym(y.data() + i * o * plane, o, plane);
    ym.noalias() = wm * cols;
    ym.colwise() += bv;
  }
  return y;
}

// grad_input may be null when the input gradient is not needed.
template <typename T>
void conv2d_backward(const Tensor<T>& x, const Tensor<T>& weight,
                     const ConvGeometry& g, const Tensor<T>& grad_out,
                     Tensor<T>* grad_input, Tensor<T>& grad_weight,
                     Tensor<T>& grad_bias) {
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t o = weight.dim(0);
  const std::size_t oh = grad_out.dim(2), ow = grad_out.dim(3);
  const std::size_t plane = oh * ow, patch = c * g.kernel * g.kernel;

  Eigen::Map<const RowMatrix<T>> wm(weight.data(), o, patch);
  Eigen::Map<RowMatrix<T>> gw(grad_weight.data(), o, patch);
  if (grad_input) *grad_input = Tensor<T>(x.shape());

  RowMatrix<T> cols(patch, plane);
  RowMatrix<T> grad_cols(patch, plane);
  for (std::size_t i = 0; i < n; ++i) {
    Eigen::Map<const RowMatrix<T>> gy(grad_out.data() + i * o * plane, o, plane);
    detail::im2col(x.data() + i * c * h * w, c, h, w, g, oh, ow, cols.data());
    gw.noalias() += gy * cols.transpose();
    for (std::size_t r = 0; r < o; ++r) {
      const T* row = grad_out.data() + i * o * plane + r * plane;
      T acc = 0;
      for (std::size_t q = 0; q < plane; ++q) acc += row[q];
      grad_bias[r] += acc;
    }
    if (grad_input) {
      grad_cols.noalias() = wm.transpose() * gy;
      detail::col2im(grad_cols.data(), c, h, w, g, oh, ow,
                     grad_input->data() + i * c * h * w);
    }
  }
}

template <typename T>
Tensor<T> upsample2x(const Tensor<T>& x) {
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  Tensor<T> y({n, c, 2 * h, 2 * w});
  for (std::size_t p = 0; p < n * c; ++p) {
    const T* src = x.data() + p * h * w;
    T* dst = y.data() + p * 4 * h * w;
    for (std::size_t i = 0; i < 2 * h; ++i)
      for (std::size_t j = 0; j < 2 * w; ++j)
        dst[i * 2 * w + j] = src[(i / 2) * w + j / 2];
  }
  return y;
}

template <typename T>
Tensor<T> upsample2x_backward(const Tensor<T>& grad_out) {
  const std::size_t n = grad_out.dim(0), c = grad_out.dim(1);
  const std::size_t h = grad_out.dim(2) / 2, w = grad_out.dim(3) / 2;
  Tensor<T> gx({n, c, h, w});
  for (std::size_t p = 0; p < n * c; ++p) {
    const T* src = grad_out.data() + p * 4 * h * w;
    T* dst = gx.data() + p * h * w;
    for (std::size_t i = 0; i < 2 * h; ++i)
      for (std::size_t j = 0; j < 2 * w; ++j)
        dst[(i / 2) * w + j / 2] += src[i * 2 * w + j];
  }
  return gx;
}

inline constexpr double kLeakySlope = 0.2;

template <typename T>
void leaky_relu_inplace(Tensor<T>& x) {
  for (auto& v : x.values()) v = v > T(0) ? v : T(kLeakySlope) * v;
}

// Uses the activation output; its sign equals the input's sign.
template <typename T>
void leaky_relu_backward_inplace(const Tensor<T>& out, Tensor<T>& grad) {
  for (std::size_t i = 0; i < grad.size(); ++i)
    if (!(out[i] > T(0))) grad[i] *= T(kLeakySlope);
}

template <typename T>
void sigmoid_inplace(Tensor<T>& x) {
  for (auto& v : x.values()) v = T(1) / (T(1) + std::exp(-v));
}

template <typename T>
void sigmoid_backward_inplace(const Tensor<T>& out, Tensor<T>& grad) {
  for (std::size_t i = 0; i < grad.size(); ++i) grad[i] *= out[i] * (T(1) - out[i]);
}

template <typename T>
void tanh_inplace(Tensor<T>& x) {
  for (auto& v : x.values()) v = std::tanh(v);
}

template <typename T>
void tanh_backward_inplace(const Tensor<T>& out, Tensor<T>& grad) {
  for (std::size_t i = 0; i < grad.size(); ++i) grad[i] *= T(1) - out[i] * out[i];
}

// (N, C, H, W) -> (N, C)
template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
  const std::size_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  Tensor<T> y({n, c});
  for (std::size_t p = 0; p < n * c; ++p) {
    T acc = 0;
    for (std::size_t i = 0; i < hw; ++i) acc += x[p * hw + i];
    y[p] = acc / T(hw);
  }
  return y;
}

template <typename T>
Tensor<T> global_avg_pool_backward(const Tensor<T>& grad_out, const Shape& in_shape) {
  Tensor<T> gx(in_shape);
  const std::size_t hw = in_shape[2] * in_shape[3];
  for (std::size_t p = 0; p < grad_out.size(); ++p) {
    const T g = grad_out[p] / T(hw);
    std::fill_n(gx.data() + p * hw, hw, g);
  }
  return gx;
}

// x: (N, in), weight: (out, in), bias: (out) -> (N, out)
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
  const std::size_t n = x.dim(0), in = x.dim(1), out = weight.dim(0);
  require(weight.dim(1) == in && bias.size() == out, "linear shape mismatch");
  Tensor<T> y({n, out});
  Eigen::Map<const RowMatrix<T>> xm(x.data(), n, in);
  Eigen::Map<const RowMatrix<T>> wm(weight.data(), out, in);
  Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> bv(bias.data(), out);
  Eigen::Map<RowMatrix<T>> ym(y.data(), n, out);
  ym.noalias() = xm * wm.transpose();
  ym.rowwise() += bv;
  return y;
}

template <typename T>
void linear_backward(const Tensor<T>& x, const Tensor<T>& weight,
                     const Tensor<T>& grad_out, Tensor<T>* grad_input,
                     Tensor<T>& grad_weight, Tensor<T>& grad_bias) {
  const std::size_t n = x.dim(0), in = x.dim(1), out = weight.dim(0);
  Eigen::Map<const RowMatrix<T>> xm(x.data(), n, in);
  Eigen::Map<const RowMatrix<T>> wm(weight.data(), out, in);
  Eigen::Map<const RowMatrix<T>> gy(grad_out.data(), n, out);
  Eigen::Map<RowMatrix<T>> gw(grad_weight.data(), out, in);
  gw.noalias() += gy.transpose() * xm;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < out; ++j) grad_bias[j] += grad_out[i * out + j];
  if (grad_input) {
    *grad_input = Tensor<T>({n, in});
    Eigen::Map<RowMatrix<T>> gx(grad_input->data(), n, in);
    gx.noalias() = gy * wm;
  }
}

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  require(a.dim(0) == b.dim(0) && a.dim(2) == b.dim(2) && a.dim(3) == b.dim(3),
          "concat_channels shape mismatch");
  const std::size_t n = a.dim(0), ca = a.dim(1), cb = b.dim(1);
  const std::size_t hw = a.dim(2) * a.dim(3);
  Tensor<T> y({n, ca + cb, a.dim(2), a.dim(3)});
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(a.data() + i * ca * hw, ca * hw, y.data() + i * (ca + cb) * hw);
    std::copy_n(b.data() + i * cb * hw, cb * hw, y.data() + (i * (ca + cb) + ca) * hw);
  }
  return y;
}

// Splits a concatenated gradient back into its leading `ca` channels and the rest.
template <typename T>
std::pair<Tensor<T>, Tensor<T>> split_channels(const Tensor<T>& g, std::size_t ca) {
  const std::size_t n = g.dim(0), c = g.dim(1), cb = c - ca;
  const std::size_t hw = g.dim(2) * g.dim(3);
  Tensor<T> a({n, ca, g.dim(2), g.dim(3)});
  Tensor<T> b({n, cb, g.dim(2), g.dim(3)});
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(g.data() + i * c * hw, ca * hw, a.data() + i * ca * hw);
    std::copy_n(g.data() + (i * c + ca) * hw, cb * hw, b.data() + i * cb * hw);
  }
  return {std::move(a), std::move(b)};
}

}  // namespace robosig::nn
