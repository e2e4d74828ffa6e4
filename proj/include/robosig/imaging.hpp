#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "robosig/keys.hpp"
#include "robosig/tensor.hpp"

namespace robosig {

inline constexpr std::size_t kImageChannels = 3;
inline constexpr double kPsnrCapDb = 99.0;

// (batch, 3, size, size) with values in [0, 1].
template <typename T>
using ImageBatch = Tensor<T>;

template <typename T>
void check_image_batch(const ImageBatch<T>& x) {
  require(x.rank() == 4 && x.dim(1) == kImageChannels,
          "image batch must be (N, 3, H, W), got " + shape_string(x.shape()));
  for (T v : x.values())
    require(std::isfinite(static_cast<double>(v)) && v >= T(0) && v <= T(1),
            "image batch values must be finite and within [0, 1]");
}

template <typename T>
void clamp_unit(Tensor<T>& x) {
  for (auto& v : x.values()) v = std::clamp(v, T(0), T(1));
}

template <typename T>
double mse(const Tensor<T>& a, const Tensor<T>& b) {
  require(a.same_shape(b), "mse shape mismatch");
  double acc = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    acc += d * d;
  }
  return acc / static_cast<double>(a.size());
}

// Batch mean of per-image PSNR in dB; images closer than 1e-10 MSE score 99 dB.
template <typename T>
double psnr(const ImageBatch<T>& reference, const ImageBatch<T>& candidate,
            double peak = 1.0) {
  require(reference.same_shape(candidate),
          "psnr shape mismatch: " + shape_string(reference.shape()) + " vs " +
              shape_string(candidate.shape()));
  require(peak > 0, "psnr peak must be positive");
  require(reference.rank() >= 1 && reference.dim(0) > 0, "psnr on empty batch");
  const std::size_t n = reference.dim(0);
  const std::size_t per = reference.size() / n;
  double total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0;
    const auto r = reference.item(i);
    const auto c = candidate.item(i);
    for (std::size_t j = 0; j < per; ++j) {
      const double d = static_cast<double>(r[j]) - static_cast<double>(c[j]);
      acc += d * d;
    }
    const double m = acc / static_cast<double>(per);
    total += m < 1e-10 ? kPsnrCapDb
                       : std::min(kPsnrCapDb, 10.0 * std::log10(peak * peak / m));
  }
  return total / static_cast<double>(n);
}

// clamp(original + alpha * residual, 0, 1)
template <typename T>
ImageBatch<T> apply_residual(const ImageBatch<T>& original, const Tensor<T>& residual,
                             T alpha) {
  require(original.same_shape(residual), "apply_residual shape mismatch");
  require(alpha >= T(0), "apply_residual requires alpha >= 0");
  ImageBatch<T> out(original.shape());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = std::clamp(original[i] + alpha * residual[i], T(0), T(1));
  return out;
}

// Gradient w.r.t. the residual; zero where the clamp was active.
template <typename T>
Tensor<T> apply_residual_backward(const ImageBatch<T>& original, const Tensor<T>& residual,
                                  T alpha, const Tensor<T>& grad_out) {
  Tensor<T> g(residual.shape());
  for (std::size_t i = 0; i < g.size(); ++i) {
    const T v = original[i] + alpha * residual[i];
    g[i] = (v > T(0) && v < T(1)) ? alpha * grad_out[i] : T(0);
  }
  return g;
}

// ---------------------------------------------------------------------------
// Transformations

enum class TransformKind {
  identity,
  center_crop,
  gaussian_noise,
  jpeg_proxy,
  resize_roundtrip,
  brightness
};

enum class TransformContext { eval, differentiable };

struct Transformation {
  TransformKind kind = TransformKind::identity;
  double param = 0.0;

  static Transformation identity() { return {TransformKind::identity, 0.0}; }
  static Transformation center_crop(double fraction) {
    require(fraction > 0 && fraction <= 1, "center_crop fraction must be in (0, 1]");
    return {TransformKind::center_crop, fraction};
  }
  static Transformation gaussian_noise(double sigma) {
    require(sigma >= 0, "gaussian_noise sigma must be >= 0");
    return {TransformKind::gaussian_noise, sigma};
  }
  static Transformation jpeg_proxy(double quality) {
    require(quality >= 1 && quality <= 100, "jpeg_proxy quality must be in [1, 100]");
    return {TransformKind::jpeg_proxy, quality};
  }
  static Transformation resize_roundtrip(double fraction) {
    require(fraction > 0 && fraction <= 1, "resize_roundtrip fraction must be in (0, 1]");
    return {TransformKind::resize_roundtrip, fraction};
  }
  static Transformation brightness(double delta) {
    return {TransformKind::brightness, delta};
  }

  bool eval_only() const noexcept { return kind == TransformKind::jpeg_proxy; }

  std::string name() const {
    std::ostringstream oss;
    switch (kind) {
      case TransformKind::identity: return "identity";
      case TransformKind::center_crop: oss << "center_crop(" << param << ')'; break;
      case TransformKind::gaussian_noise: oss << "gaussian_noise(" << param << ')'; break;
      case TransformKind::jpeg_proxy: oss << "jpeg_proxy(" << param << ')'; break;
      case TransformKind::resize_roundtrip: oss << "resize_roundtrip(" << param << ')'; break;
      case TransformKind::brightness: oss << "brightness(" << param << ')'; break;
    }
    return oss.str();
  }

  // Inverse of name(); accepts e.g. "center_crop(0.5)".
  static Transformation parse(const std::string& text) {
    const auto open = text.find('(');
    const std::string head = text.substr(0, open);
    double value = 0.0;
    if (open != std::string::npos) {
      const auto close = text.find(')', open);
      require(close != std::string::npos, "malformed transformation: " + text);
      value = std::stod(text.substr(open + 1, close - open - 1));
    }
    if (head == "identity") return identity();
    if (head == "center_crop") return center_crop(value);
    if (head == "gaussian_noise") return gaussian_noise(value);
    if (head == "jpeg_proxy") return jpeg_proxy(value);
    if (head == "resize_roundtrip") return resize_roundtrip(value);
    if (head == "brightness") return brightness(value);
    throw ContractViolation("unknown transformation: " + text);
  }

  bool operator==(const Transformation&) const = default;
};

// Training set used while fitting the extractor; jpeg_proxy stays eval-only.
inline std::vector<Transformation> training_transformations() {
  return {Transformation::identity(),          Transformation::center_crop(0.7),
          Transformation::gaussian_noise(0.05), Transformation::resize_roundtrip(0.7),
          Transformation::brightness(0.1),      Transformation::brightness(-0.1)};
}

namespace detail {

// Separable bilinear resampling table for one axis (half-pixel centres).
struct AxisResample {
  std::vector<std::size_t> lo, hi;
  std::vector<double> frac;
};

inline AxisResample make_axis(std::size_t offset, std::size_t extent, std::size_t out) {
  AxisResample a;
  a.lo.resize(out);
  a.hi.resize(out);
  a.frac.resize(out);
  const double scale = static_cast<double>(extent) / static_cast<double>(out);
  for (std::size_t i = 0; i < out; ++i) {
    double s = (static_cast<double>(i) + 0.5) * scale - 0.5;
    s = std::clamp(s, 0.0, static_cast<double>(extent - 1));
    const auto l = static_cast<std::size_t>(std::floor(s));
    const std::size_t h = std::min(l + 1, extent - 1);
    a.lo[i] = offset + l;
    a.hi[i] = offset + h;
    a.frac[i] = s - static_cast<double>(l);
  }
  return a;
}

// Samples window [y0, y0+hs) x [x0, x0+ws) of x into an (oh, ow) grid.
template <typename T>
Tensor<T> resample(const Tensor<T>& x, std::size_t y0, std::size_t hs, std::size_t x0,
                   std::size_t ws, std::size_t oh, std::size_t ow) {
  const auto ay = make_axis(y0, hs, oh);
  const auto ax = make_axis(x0, ws, ow);
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  Tensor<T> y({n, c, oh, ow});
  for (std::size_t p = 0; p < n * c; ++p) {
    const T* src = x.data() + p * h * w;
    T* dst = y.data() + p * oh * ow;
    for (std::size_t i = 0; i < oh; ++i) {
      const T fy = static_cast<T>(ay.frac[i]);
      const T* r0 = src + ay.lo[i] * w;
      const T* r1 = src + ay.hi[i] * w;
      for (std::size_t j = 0; j < ow; ++j) {
        const T fx = static_cast<T>(ax.frac[j]);
        const T top = r0[ax.lo[j]] * (T(1) - fx) + r0[ax.hi[j]] * fx;
        const T bot = r1[ax.lo[j]] * (T(1) - fx) + r1[ax.hi[j]] * fx;
        dst[i * ow + j] = top * (T(1) - fy) + bot * fy;
      }
    }
  }
  return y;
}

// Adjoint of resample(): scatters grad (N, C, oh, ow) back onto an (h, w) grid.
template <typename T>
Tensor<T> resample_adjoint(const Tensor<T>& grad, std::size_t h, std::size_t w,
                           std::size_t y0, std::size_t hs, std::size_t x0, std::size_t ws) {
  const std::size_t n = grad.dim(0), c = grad.dim(1), oh = grad.dim(2), ow = grad.dim(3);
  const auto ay = make_axis(y0, hs, oh);
  const auto ax = make_axis(x0, ws, ow);
  Tensor<T> gx({n, c, h, w});
  for (std::size_t p = 0; p < n * c; ++p) {
    const T* src = grad.data() + p * oh * ow;
    T* dst = gx.data() + p * h * w;
    for (std::size_t i = 0; i < oh; ++i) {
      const T fy = static_cast<T>(ay.frac[i]);
      T* r0 = dst + ay.lo[i] * w;
      T* r1 = dst + ay.hi[i] * w;
      for (std::size_t j = 0; j < ow; ++j) {
        const T fx = static_cast<T>(ax.frac[j]);
        const T g = src[i * ow + j];
        r0[ax.lo[j]] += g * (T(1) - fy) * (T(1) - fx);
        r0[ax.hi[j]] += g * (T(1) - fy) * fx;
        r1[ax.lo[j]] += g * fy * (T(1) - fx);
        r1[ax.hi[j]] += g * fy * fx;
      }
    }
  }
  return gx;
}

inline std::size_t scaled_extent(std::size_t extent, double fraction) {
  return std::max<std::size_t>(
      1, static_cast<std::size_t>(std::lround(fraction * static_cast<double>(extent))));
}

// Standard JPEG quantisation tables (luma, chroma).
inline constexpr std::array<int, 64> kLumaQuant = {
    16, 11, 10, 16, 24,  40,  51,  61,  12, 12, 14, 19, 26,  58,  60,  55,
    14, 13, 16, 24, 40,  57,  69,  56,  14, 17, 22, 29, 51,  87,  80,  62,
    18, 22, 37, 56, 68,  109, 103, 77,  24, 35, 55, 64, 81,  104, 113, 92,
    49, 64, 78, 87, 103, 121, 120, 101, 72, 92, 95, 98, 112, 100, 103, 99};
inline constexpr std::array<int, 64> kChromaQuant = {
    17, 18, 24, 47, 99, 99, 99, 99, 18, 21, 26, 66, 99, 99, 99, 99,
    24, 26, 56, 99, 99, 99, 99, 99, 47, 66, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99};

inline std::array<double, 64> scaled_quant(const std::array<int, 64>& base, double quality) {
  const double scale = quality < 50 ? 5000.0 / quality : 200.0 - 2.0 * quality;
  std::array<double, 64> q{};
  for (std::size_t i = 0; i < 64; ++i)
    q[i] = std::clamp(std::floor((base[i] * scale + 50.0) / 100.0), 1.0, 255.0);
  return q;
}

// Orthonormal 8x8 DCT-II basis: basis[u][x].
inline const std::array<std::array<double, 8>, 8>& dct_basis() {
  static const auto basis = [] {
    std::array<std::array<double, 8>, 8> b{};
    for (std::size_t u = 0; u < 8; ++u) {
      const double cu = u == 0 ? std::sqrt(1.0 / 8.0) : std::sqrt(2.0 / 8.0);
      for (std::size_t x = 0; x < 8; ++x)
        b[u][x] = cu * std::cos((2.0 * x + 1.0) * u * std::numbers::pi / 16.0);
    }
    return b;
  }();
  return basis;
}

// Quantises one plane (values on a 0..255 scale, level-shifted) in 8x8 blocks.
inline void quantize_plane(std::vector<double>& plane, std::size_t h, std::size_t w,
                           const std::array<double, 64>& q) {
  const auto& b = dct_basis();
  for (std::size_t by = 0; by < h; by += 8) {
    for (std::size_t bx = 0; bx < w; bx += 8) {
      double block[8][8];
      for (std::size_t y = 0; y < 8; ++y)
        for (std::size_t x = 0; x < 8; ++x)
          block[y][x] = plane[std::min(by + y, h - 1) * w + std::min(bx + x, w - 1)] - 128.0;
      double coef[8][8];
      for (std::size_t u = 0; u < 8; ++u)
        for (std::size_t v = 0; v < 8; ++v) {
          double acc = 0;
          for (std::size_t y = 0; y < 8; ++y)
            for (std::size_t x = 0; x < 8; ++x) acc += b[u][y] * b[v][x] * block[y][x];
          coef[u][v] = std::round(acc / q[u * 8 + v]) * q[u * 8 + v];
        }
      for (std::size_t y = 0; y < 8 && by + y < h; ++y)
        for (std::size_t x = 0; x < 8 && bx + x < w; ++x) {
          double acc = 0;
          for (std::size_t u = 0; u < 8; ++u)
            for (std::size_t v = 0; v < 8; ++v) acc += b[u][y] * b[v][x] * coef[u][v];
          plane[(by + y) * w + bx + x] = acc + 128.0;
        }
    }
  }
}

template <typename T>
Tensor<T> jpeg_proxy(const Tensor<T>& x, double quality) {
  const std::size_t n = x.dim(0), h = x.dim(2), w = x.dim(3), hw = h * w;
  const auto qy = scaled_quant(kLumaQuant, quality);
  const auto qc = scaled_quant(kChromaQuant, quality);
  Tensor<T> out(x.shape());
  std::vector<double> yp(hw), cb(hw), cr(hw);
  for (std::size_t i = 0; i < n; ++i) {
    const T* r = x.data() + (i * 3 + 0) * hw;
    const T* g = x.data() + (i * 3 + 1) * hw;
    const T* bl = x.data() + (i * 3 + 2) * hw;
    for (std::size_t p = 0; p < hw; ++p) {
      const double R = 255.0 * r[p], G = 255.0 * g[p], B = 255.0 * bl[p];
      yp[p] = 0.299 * R + 0.587 * G + 0.114 * B;
      cb[p] = 128.0 - 0.168736 * R - 0.331264 * G + 0.5 * B;
      cr[p] = 128.0 + 0.5 * R - 0.418688 * G - 0.081312 * B;
    }
    quantize_plane(yp, h, w, qy);
    quantize_plane(cb, h, w, qc);
    quantize_plane(cr, h, w, qc);
    T* ro = out.data() + (i * 3 + 0) * hw;
    T* go = out.data() + (i * 3 + 1) * hw;
    T* bo = out.data() + (i * 3 + 2) * hw;
    for (std::size_t p = 0; p < hw; ++p) {
      const double R = yp[p] + 1.402 * (cr[p] - 128.0);
      const double G = yp[p] - 0.344136 * (cb[p] - 128.0) - 0.714136 * (cr[p] - 128.0);
      const double B = yp[p] + 1.772 * (cb[p] - 128.0);
      ro[p] = static_cast<T>(std::clamp(R / 255.0, 0.0, 1.0));
      go[p] = static_cast<T>(std::clamp(G / 255.0, 0.0, 1.0));
      bo[p] = static_cast<T>(std::clamp(B / 255.0, 0.0, 1.0));
    }
  }
  return out;
}

}  // namespace detail

// Output of a transformation plus what its backward pass needs.
template <typename T>
struct TransformedBatch {
  Transformation transformation;
  ImageBatch<T> images;
  Tensor<T> pass_mask;  // 1 where an additive op's clamp was inactive
};

template <typename T>
TransformedBatch<T> transform_forward(const Transformation& t, const ImageBatch<T>& x,
                                      std::uint64_t rng_seed, TransformContext ctx) {
  require(x.rank() == 4, "transformations expect (N, C, H, W) images");
  if (ctx == TransformContext::differentiable && t.eval_only())
    throw ContractViolation(t.name() + " is eval-only and cannot be used in a differentiable step");
  const std::size_t h = x.dim(2), w = x.dim(3);
  TransformedBatch<T> out{t, {}, {}};
  switch (t.kind) {
    case TransformKind::identity:
      out.images = x;
      break;
    case TransformKind::center_crop: {
      const std::size_t ch = detail::scaled_extent(h, t.param);
      const std::size_t cw = detail::scaled_extent(w, t.param);
      out.images = detail::resample(x, (h - ch) / 2, ch, (w - cw) / 2, cw, h, w);
      break;
    }
    case TransformKind::resize_roundtrip: {
      const std::size_t sh = detail::scaled_extent(h, t.param);
      const std::size_t sw = detail::scaled_extent(w, t.param);
      const auto small = detail::resample(x, 0, h, 0, w, sh, sw);
      out.images = detail::resample(small, 0, sh, 0, sw, h, w);
      break;
    }
    case TransformKind::gaussian_noise:
    case TransformKind::brightness: {
      out.images = x;
      out.pass_mask = Tensor<T>(x.shape());
      std::mt19937_64 rng(rng_seed);
      std::normal_distribution<double> normal(0.0, 1.0);
      for (std::size_t i = 0; i < x.size(); ++i) {
        const double shift =
            t.kind == TransformKind::brightness ? t.param : t.param * normal(rng);
        const T v = x[i] + static_cast<T>(shift);
        const T c = std::clamp(v, T(0), T(1));
        out.images[i] = c;
        out.pass_mask[i] = (c == v) ? T(1) : T(0);
      }
      break;
    }
    case TransformKind::jpeg_proxy:
      out.images = detail::jpeg_proxy(x, t.param);
      break;
  }
  return out;
}

template <typename T>
ImageBatch<T> apply_transformation(const Transformation& t, const ImageBatch<T>& x,
                                   std::uint64_t rng_seed,
                                   TransformContext ctx = TransformContext::eval) {
  return transform_forward(t, x, rng_seed, ctx).images;
}

template <typename T>
Tensor<T> transform_backward(const TransformedBatch<T>& fwd, const Tensor<T>& grad_out) {
  const Transformation& t = fwd.transformation;
  const std::size_t h = grad_out.dim(2), w = grad_out.dim(3);
  switch (t.kind) {
    case TransformKind::identity:
      return grad_out;
    case TransformKind::center_crop: {
      const std::size_t ch = detail::scaled_extent(h, t.param);
      const std::size_t cw = detail::scaled_extent(w, t.param);
      return detail::resample_adjoint(grad_out, h, w, (h - ch) / 2, ch, (w - cw) / 2, cw);
    }
    case TransformKind::resize_roundtrip: {
      const std::size_t sh = detail::scaled_extent(h, t.param);
      const std::size_t sw = detail::scaled_extent(w, t.param);
      const auto g_small = detail::resample_adjoint(grad_out, sh, sw, 0, sh, 0, sw);
      return detail::resample_adjoint(g_small, h, w, 0, h, 0, w);
    }
    case TransformKind::gaussian_noise:
    case TransformKind::brightness: {
      Tensor<T> g(grad_out.shape());
      for (std::size_t i = 0; i < g.size(); ++i) g[i] = grad_out[i] * fwd.pass_mask[i];
      return g;
    }
    case TransformKind::jpeg_proxy:
      break;
  }
  throw ContractViolation("no backward pass for " + t.name());
}

}  // namespace robosig
