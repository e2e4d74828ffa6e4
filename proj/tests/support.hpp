#pragma once

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>
#include <string>

#include <unistd.h>

#include "robosig/params.hpp"

namespace robosig::testing {

// |a - n| <= tol * max(|a|, |n|), with a small absolute floor for
// entries whose true gradient is essentially zero.
inline ::testing::AssertionResult gradients_agree(double analytic, double numeric, double tol = 1e-3,
                                                  double floor = 1e-9) {
  const double scale = std::max(std::abs(analytic), std::abs(numeric));
  if (std::abs(analytic - numeric) <= tol * scale + floor) return ::testing::AssertionSuccess();
  return ::testing::AssertionFailure() << "analytic " << analytic << " vs numeric " << numeric;
}

// Central difference of `loss` w.r.t. entry `index` of parameter `name`.
template <typename Loss>
double central_difference(ParamSet<double>& p, const std::string& name, std::size_t index, Loss&& loss,
                          double h = 1e-6) {
  auto& v = p.get(name)[index];
  const double saved = v;
  v = saved + h;
  const double up = loss(p);
  v = saved - h;
  const double down = loss(p);
  v = saved;
  return (up - down) / (2 * h);
}

// Checks `samples` random entries of every parameter array.
template <typename Loss>
void check_param_gradients(ParamSet<double> p, const ParamSet<double>& grads, Loss&& loss, std::size_t samples,
                           std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (const auto& e : grads.entries()) {
    for (std::size_t s = 0; s < samples; ++s) {
      const std::size_t i = rng() % e.value.size();
      const double numeric = central_difference(p, e.name, i, loss);
      EXPECT_TRUE(gradients_agree(e.value[i], numeric)) << e.name << "[" << i << "]";
    }
  }
}

class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("robosig-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace robosig::testing
