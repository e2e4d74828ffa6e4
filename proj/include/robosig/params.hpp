#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "robosig/tensor.hpp"

namespace robosig {

enum class ParamRole { autoencoder, decoder_only, embedder, extractor };

inline std::string to_string(ParamRole role) {
  switch (role) {
    case ParamRole::autoencoder: return "autoencoder";
    case ParamRole::decoder_only: return "decoder_only";
    case ParamRole::embedder: return "embedder";
    case ParamRole::extractor: return "extractor";
  }
  return "unknown";
}

inline ParamRole parse_role(std::string_view text) {
  if (text == "autoencoder") return ParamRole::autoencoder;
  if (text == "decoder_only") return ParamRole::decoder_only;
  if (text == "embedder") return ParamRole::embedder;
  if (text == "extractor") return ParamRole::extractor;
  throw ContractViolation("unknown parameter role: " + std::string(text));
}

template <typename T>
struct ParamEntry {
  std::string name;
  Tensor<T> value;

  bool operator==(const ParamEntry&) const = default;
};

// Ordered, uniquely named parameter arrays of one network. Gradients use the
// same container with identical names and shapes.
template <typename T>
class ParamSet {
 public:
  ParamSet() = default;
  ParamSet(std::string architecture_id, ParamRole role)
      : architecture_id_(std::move(architecture_id)), role_(role) {}

  const std::string& architecture_id() const noexcept { return architecture_id_; }
  ParamRole role() const noexcept { return role_; }
  std::size_t size() const noexcept { return entries_.size(); }
  const std::vector<ParamEntry<T>>& entries() const noexcept { return entries_; }
  std::vector<ParamEntry<T>>& entries() noexcept { return entries_; }

  void add(std::string name, Tensor<T> value) {
    require(find(name) == nullptr, "duplicate parameter name: " + name);
    entries_.push_back({std::move(name), std::move(value)});
  }

  const Tensor<T>* find(std::string_view name) const {
    for (const auto& e : entries_)
      if (e.name == name) return &e.value;
    return nullptr;
  }
  Tensor<T>* find(std::string_view name) {
    for (auto& e : entries_)
      if (e.name == name) return &e.value;
    return nullptr;
  }

  const Tensor<T>& get(std::string_view name) const {
    const Tensor<T>* t = find(name);
    require(t != nullptr, "missing parameter '" + std::string(name) + "' in " + architecture_id_);
    return *t;
  }
  Tensor<T>& get(std::string_view name) {
    Tensor<T>* t = find(name);
    require(t != nullptr, "missing parameter '" + std::string(name) + "' in " + architecture_id_);
    return *t;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.value.size();
    return n;
  }

  // Same architecture, same names in the same order, same shapes.
  bool combinable(const ParamSet& other) const {
    if (architecture_id_ != other.architecture_id_ || entries_.size() != other.entries_.size())
      return false;
    for (std::size_t i = 0; i < entries_.size(); ++i)
      if (entries_[i].name != other.entries_[i].name ||
          !entries_[i].value.same_shape(other.entries_[i].value))
        return false;
    return true;
  }

  ParamSet zeros_like() const {
    ParamSet out(architecture_id_, role_);
    for (const auto& e : entries_) out.add(e.name, Tensor<T>(e.value.shape()));
    return out;
  }

  template <typename U>
  ParamSet<U> cast() const {
    ParamSet<U> out(architecture_id_, role_);
    for (const auto& e : entries_) out.add(e.name, e.value.template cast<U>());
    return out;
  }

  // Entries whose names start with `prefix`, relabelled with `role`.
  ParamSet subset(std::string_view prefix, ParamRole role) const {
    ParamSet out(architecture_id_, role);
    for (const auto& e : entries_)
      if (std::string_view(e.name).starts_with(prefix)) out.add(e.name, e.value);
    return out;
  }

  // this += scale * other
  void axpy(T scale, const ParamSet& other) {
    require(combinable(other), "axpy on incompatible parameter sets");
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      auto& dst = entries_[i].value;
      const auto& src = other.entries_[i].value;
      for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += scale * src[j];
    }
  }

  void scale(T s) {
    for (auto& e : entries_) e.value *= s;
  }

  bool operator==(const ParamSet&) const = default;

 private:
  std::string architecture_id_;
  ParamRole role_ = ParamRole::autoencoder;
  std::vector<ParamEntry<T>> entries_;
};

template <typename T>
bool all_finite(const ParamSet<T>& p) {
  for (const auto& e : p.entries())
    if (!all_finite(e.value)) return false;
  return true;
}

template <typename T>
double squared_norm(const ParamSet<T>& p) {
  double acc = 0;
  for (const auto& e : p.entries())
    for (T v : e.value.values()) acc += static_cast<double>(v) * static_cast<double>(v);
  return acc;
}

template <typename T>
double max_abs_difference(const ParamSet<T>& a, const ParamSet<T>& b) {
  require(a.combinable(b), "max_abs_difference on incompatible parameter sets");
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto& x = a.entries()[i].value;
    const auto& y = b.entries()[i].value;
    for (std::size_t j = 0; j < x.size(); ++j)
      m = std::max(m, std::abs(static_cast<double>(x[j]) - static_cast<double>(y[j])));
  }
  return m;
}

// Element-wise arithmetic mean. Accumulates in double and divides once, so
// the result does not depend on argument order.
template <typename T>
ParamSet<T> average_params(std::span<const ParamSet<T>> models) {
  require(!models.empty(), "average_params needs at least one model");
  const ParamSet<T>& first = models.front();
  for (const auto& m : models)
    require(first.combinable(m), "average_params: incompatible architectures (" +
                                     first.architecture_id() + " vs " + m.architecture_id() + ")");
  ParamSet<T> out = first.zeros_like();
  const double count = static_cast<double>(models.size());
  std::vector<double> column(models.size());
  for (std::size_t i = 0; i < first.size(); ++i) {
    auto& dst = out.entries()[i].value;
    // Sum in sorted order per element so permutations give identical bits.
    for (std::size_t j = 0; j < dst.size(); ++j) {
      for (std::size_t m = 0; m < models.size(); ++m)
        column[m] = static_cast<double>(models[m].entries()[i].value[j]);
      std::sort(column.begin(), column.end());
      double s = 0;
      for (double v : column) s += v;
      dst[j] = static_cast<T>(s / count);
    }
  }
  return out;
}

template <typename T>
ParamSet<T> average_params(const std::vector<ParamSet<T>>& models) {
  return average_params(std::span<const ParamSet<T>>(models));
}

}  // namespace robosig
