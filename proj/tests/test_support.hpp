#pragma once

#include <gtest/gtest.h>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "glgat/graph_data.hpp"
#include "glgat/tensor.hpp"

namespace glgat::testing {

// Scratch directory named after the running test, removed on destruction.
class TempDir {
 public:
  TempDir() {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    path_ = std::filesystem::temp_directory_path() /
            ("glgat_" + std::string(info->test_suite_name()) + "_" + info->name());
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() { std::filesystem::remove_all(path_); }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::filesystem::path file(const std::string& name, const std::string& content) const {
    std::ofstream(path_ / name) << content;
    return path_ / name;
  }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

// Single-feature series from per-sensor value lists; NaN marks a missing reading.
inline TrafficSeries series_from_columns(const std::vector<std::vector<double>>& columns) {
  TrafficSeries s;
  s.sensors = columns.size();
  s.steps = columns.empty() ? 0 : columns.front().size();
  s.features = 1;
  s.data.assign(s.steps * s.sensors, 0.0);
  s.mask.assign(s.steps * s.sensors, 0);
  for (std::size_t t = 0; t < s.steps; ++t) {
    s.timestamps.push_back(1330560000 + static_cast<std::int64_t>(t) * 300);
    for (std::size_t v = 0; v < s.sensors; ++v) {
      if (std::isnan(columns[v][t])) continue;
      s.data[s.index(t, v, 0)] = columns[v][t];
      s.mask[s.index(t, v, 0)] = 1;
    }
  }
  return s;
}

inline Tensor random_tensor(const Shape& shape, std::mt19937_64& rng, double lo = -2.0, double hi = 2.0,
                            bool requires_grad = true) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = u(rng);
  return Tensor::from(shape, std::move(v), requires_grad);
}

// Scalarizes `f` with fixed random weights and compares the analytic
// gradient of every input against central differences.
inline void expect_gradients_match(const std::vector<Tensor>& inputs,
                                   const std::function<Tensor(const std::vector<Tensor>&)>& f,
                                   double rel_tol = 1e-6, double abs_tol = 1e-4, double small = 1e-3,
                                   double h = 1e-5) {
  std::mt19937_64 rng(99);
  const Tensor probe = f(inputs);
  const Tensor weights = random_tensor(probe.shape(), rng, -1.0, 1.0, false);
  const auto objective = [&] { return reduce_sum(mul(f(inputs), weights)); };
  for (const auto& t : inputs) {
    Tensor x = t;
    x.zero_grad();
  }
  objective().backward();
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    Tensor x = inputs[k];
    if (!x.requires_grad()) continue;
    ASSERT_TRUE(x.has_grad()) << "input " << k << " received no gradient";
    const std::vector<double> analytic(x.grad().begin(), x.grad().end());
    for (std::size_t i = 0; i < x.numel(); ++i) {
      const double saved = x.values()[i];
      x.mutable_values()[i] = saved + h;
      const double up = objective().item();
      x.mutable_values()[i] = saved - h;
      const double down = objective().item();
      x.mutable_values()[i] = saved;
      const double numeric = (up - down) / (2 * h);
      const double scale = std::max(std::abs(analytic[i]), std::abs(numeric));
      if (scale < small) {
        EXPECT_LT(std::abs(analytic[i] - numeric), abs_tol) << "input " << k << " entry " << i;
      } else {
        EXPECT_LT(std::abs(analytic[i] - numeric) / scale, rel_tol)
            << "input " << k << " entry " << i << " analytic " << analytic[i] << " numeric " << numeric;
      }
    }
  }
}

inline void expect_values(const Tensor& t, const std::vector<double>& expected, double tol = 0.0) {
  ASSERT_EQ(t.numel(), expected.size());
  for (std::size_t i = 0; i < expected.size(); ++i) {
    EXPECT_NEAR(t.values()[i], expected[i], tol) << "entry " << i;
  }
}

}  // namespace glgat::testing
