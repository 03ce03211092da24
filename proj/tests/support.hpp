#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "pcan/core.hpp"
#include "pcan/gmm.hpp"

namespace pcan::testing {

inline Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed, double scale = 1.0) {
  RngStream rng(seed);
  Matrix m(rows, cols);
  for (auto& x : m.data()) x = scale * rng.normal();
  return m;
}

inline FeatureMap random_map(std::size_t h, std::size_t w, std::size_t c, std::uint64_t seed, double scale = 1.0) {
  return FeatureMap(h, w, random_matrix(h * w, c, seed, scale));
}

inline PrototypeSet random_protos(std::size_t n, std::size_t d, std::size_t cv, std::uint64_t seed,
                                  double sigma2 = 0.5) {
  PrototypeSet p;
  p.key_means = random_matrix(n, d, seed);
  p.value_protos = random_matrix(n, cv, seed + 1);
  p.sigma2 = sigma2;
  return p;
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace pcan::testing
