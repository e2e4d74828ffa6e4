#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "robosig/error.hpp"

namespace robosig {

inline constexpr std::size_t kDefaultKeyBits = 48;

// Fixed-length watermark message. Immutable once built.
class MessageKey {
 public:
  MessageKey() = default;  // empty placeholder; every operation needs a real key

  explicit MessageKey(std::vector<std::uint8_t> bits) : bits_(std::move(bits)) {
    require(!bits_.empty(), "message key must have at least one bit");
    for (auto b : bits_) require(b <= 1, "message key bits must be 0 or 1");
  }

  static MessageKey from_string(std::string_view text) {
    std::vector<std::uint8_t> bits;
    bits.reserve(text.size());
    for (char ch : text) {
      require(ch == '0' || ch == '1',
              "key string may only contain '0' and '1': " + std::string(text));
      bits.push_back(static_cast<std::uint8_t>(ch - '0'));
    }
    return MessageKey(std::move(bits));
  }

  std::size_t size() const noexcept { return bits_.size(); }
  std::uint8_t operator[](std::size_t i) const noexcept { return bits_[i]; }
  std::span<const std::uint8_t> bits() const noexcept { return bits_; }

  std::string to_string() const {
    std::string s(bits_.size(), '0');
    for (std::size_t i = 0; i < bits_.size(); ++i) s[i] = bits_[i] ? '1' : '0';
    return s;
  }

  MessageKey complement() const {
    std::vector<std::uint8_t> flipped(bits_);
    for (auto& b : flipped) b ^= 1u;
    return MessageKey(std::move(flipped));
  }

  bool operator==(const MessageKey&) const = default;

 private:
  std::vector<std::uint8_t> bits_;
};

// Pre-sigmoid extractor output for one image.
struct SoftMessage {
  std::vector<double> logits;
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

}  // namespace detail

// Derives an independent stream seed from a base seed and a tag.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) {
  return detail::splitmix64(seed ^ detail::splitmix64(tag + 0x5851F42D4C957F2Dull));
}

template <typename Rng>
MessageKey random_key(std::size_t k, Rng& rng) {
  require(k >= 1, "random_key requires k >= 1");
  std::vector<std::uint8_t> bits(k);
  for (auto& b : bits) b = static_cast<std::uint8_t>(rng() >> 63);
  return MessageKey(std::move(bits));
}

inline MessageKey random_key(std::size_t k, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return random_key(k, rng);
}

inline double bit_accuracy(const MessageKey& target, const MessageKey& decoded) {
  require(target.size() == decoded.size(), "bit_accuracy length mismatch: " +
                                               std::to_string(target.size()) + " vs " +
                                               std::to_string(decoded.size()));
  std::size_t matches = 0;
  for (std::size_t i = 0; i < target.size(); ++i) matches += target[i] == decoded[i];
  return static_cast<double>(matches) / static_cast<double>(target.size());
}

inline std::size_t hamming_distance(const MessageKey& a, const MessageKey& b) {
  require(a.size() == b.size(), "hamming_distance length mismatch");
  std::size_t d = 0;
  for (std::size_t i = 0; i < a.size(); ++i) d += a[i] != b[i];
  return d;
}

// bit_i = 1 iff logit_i > 0; a zero logit decodes to 0.
template <typename T>
MessageKey harden(std::span<const T> logits) {
  std::vector<std::uint8_t> bits(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) bits[i] = logits[i] > T(0) ? 1 : 0;
  return MessageKey(std::move(bits));
}

inline MessageKey harden(const SoftMessage& soft) {
  return harden(std::span<const double>(soft.logits));
}

// Binary cross-entropy summed over bits:
//   -sum m_i log sigmoid(l_i) + (1 - m_i) log(1 - sigmoid(l_i))
// evaluated as softplus(l) - m * l. When `grad` is non-empty it receives
// d loss / d logit = sigmoid(l) - m.
template <typename T>
T message_loss(std::span<const T> logits, const MessageKey& target,
               std::span<T> grad = {}) {
  require(logits.size() == target.size(), "message_loss length mismatch");
  require(grad.empty() || grad.size() == logits.size(), "message_loss grad size mismatch");
  T loss = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const T l = logits[i];
    require(std::isfinite(static_cast<double>(l)), "message_loss: non-finite logit at bit " +
                                                       std::to_string(i));
    const T softplus = std::max(l, T(0)) + std::log1p(std::exp(-std::abs(l)));
    const T m = static_cast<T>(target[i]);
    loss += softplus - m * l;
    if (!grad.empty()) grad[i] = T(1) / (T(1) + std::exp(-l)) - m;
  }
  return loss;
}

inline double message_loss(const SoftMessage& soft, const MessageKey& target) {
  return message_loss(std::span<const double>(soft.logits), target);
}

// Number of positions perturbed at `step` of a `total_steps` gradual schedule.
inline std::size_t gradual_flip_count(std::size_t k, long step, long total_steps) {
  const auto n = static_cast<std::size_t>(
      std::ceil(static_cast<double>(k) * static_cast<double>(step) /
                static_cast<double>(total_steps)));
  return std::clamp<std::size_t>(n, 1, k);
}

// Interpolates from a one-bit perturbation of `base` (step 0) to a uniformly
// random key (step == total_steps). Positions are hard-flipped before the last
// step and re-sampled on it. Each step is derived from `base` afresh.
inline MessageKey gradual_key(const MessageKey& base, long step, long total_steps,
                              std::uint64_t seed) {
  require(total_steps >= 1, "gradual_key requires total_steps >= 1");
  require(step >= 0 && step <= total_steps, "gradual_key step out of range");
  const std::size_t k = base.size();
  const std::size_t n = gradual_flip_count(k, step, total_steps);
  std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(step)));

  std::vector<std::size_t> positions(k);
  std::iota(positions.begin(), positions.end(), std::size_t{0});
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng() % (k - i));
    std::swap(positions[i], positions[j]);
  }

  std::vector<std::uint8_t> bits(base.bits().begin(), base.bits().end());
  const bool resample = step == total_steps;
  for (std::size_t i = 0; i < n; ++i) {
    auto& b = bits[positions[i]];
    b = resample ? static_cast<std::uint8_t>(rng() >> 63) : static_cast<std::uint8_t>(b ^ 1u);
  }
  return MessageKey(std::move(bits));
}

// P[Binomial(k, 1/2) >= matched_bits], summed term by term.
inline double detection_pvalue(std::size_t matched_bits, std::size_t k) {
  require(matched_bits <= k, "detection_pvalue requires matched_bits <= k");
  long double coeff = 1.0L;  // C(k, j)
  long double tail = 0.0L;
  for (std::size_t j = 0; j <= k; ++j) {
    if (j >= matched_bits) tail += coeff;
    coeff = coeff * static_cast<long double>(k - j) / static_cast<long double>(j + 1);
  }
  return static_cast<double>(std::ldexp(tail, -static_cast<int>(k)));
}

}  // namespace robosig
