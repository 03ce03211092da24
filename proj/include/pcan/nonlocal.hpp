#pragma once

#include <vector>

#include "pcan/core.hpp"
#include "pcan/cost.hpp"

namespace pcan {

// Similarity used by dense attention: exp(q . k) or exp(-||q - k||^2 / 2 sigma^2).
struct KernelSpec {
  enum class Kind { dot, gaussian };
  Kind kind = Kind::dot;
  double sigma2 = 0.5;

  static KernelSpec dot() { return {Kind::dot, 0.0}; }
  static KernelSpec gaussian(double sigma2) { return {Kind::gaussian, sigma2}; }
  void validate() const;
};

// Dense cross-attention: every query pixel attends to all H*W*T memory positions.
FeatureMap nonlocal_attend(const FeatureMap& query_keys, const std::vector<FeatureMap>& memory_keys,
                           const std::vector<FeatureMap>& memory_values, const KernelSpec& kernel);

// Analytic cost of nonlocal_attend for one H x W query against T memory frames.
CostReport nonlocal_cost(const CostDims& dims);

}  // namespace pcan
