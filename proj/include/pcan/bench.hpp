#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pcan/cost.hpp"
#include "pcan/nonlocal.hpp"

namespace pcan {

// Prototypical read over T memory frames: per frame one EM fit
// (em_iters E+M steps and a final E-step), its value prototypes and one
// prototype read of the query, followed by the temporal aggregation over the
// T reconstructions and the current value map.
CostReport pca_cost(const CostDims& dims);

// Multi-head self-attention over all H*W*T tube tokens (analytic only):
// Q/K/V and output projections plus per-head scores and value mixing.
CostReport mhsa_cost(const CostDims& dims);

CostReport analytic_cost(Mechanism mechanism, const CostDims& dims);

// Runs the real kernels on Counted scalars over random inputs of the given
// dims and returns the report with measured_* filled in. mhsa is rejected.
CostReport instrumented_cost(Mechanism mechanism, const CostDims& dims, std::uint64_t seed = 0);

struct BenchConfig {
  std::vector<Mechanism> mechanisms;
  std::vector<std::uint64_t> heights{45};
  std::vector<std::uint64_t> widths{80};  // paired with heights by position
  std::vector<std::uint64_t> frames{2, 4, 8};
  std::uint64_t key_dim = 64;
  std::uint64_t value_dim = 64;
  std::uint64_t n_protos = 64;
  std::uint64_t em_iters = 6;
  std::uint64_t heads = 8;
  bool instrumented = false;
  std::uint64_t seed = 0;
};

struct BenchResult {
  std::vector<CostReport> rows;  // config order: mechanism, resolution, T
  std::string csv;
  std::string svg;
};

BenchResult run_suite(const BenchConfig& config);

std::string cost_csv_header();
std::string cost_csv(const std::vector<CostReport>& rows);
// Line chart of analytic multiplies against T, one series per
// (mechanism, resolution), log-scaled y axis.
std::string cost_svg(const std::vector<CostReport>& rows);

}  // namespace pcan
