#pragma once

#include <cstdint>
#include <optional>
#include <string_view>

namespace pcan {

enum class Mechanism { pca, nonlocal, mhsa };

std::string_view to_string(Mechanism m);
Mechanism parse_mechanism(std::string_view name);

// Problem size for one attention read. T counts memory frames; the query is a
// single H x W frame.
struct CostDims {
  std::uint64_t height = 1;
  std::uint64_t width = 1;
  std::uint64_t frames = 1;     // T
  std::uint64_t key_dim = 64;   // D
  std::uint64_t value_dim = 64; // C_v
  std::uint64_t n_protos = 64;  // N (pca only)
  std::uint64_t em_iters = 6;   // pca only
  std::uint64_t heads = 8;      // mhsa only

  std::uint64_t pixels() const;
  void validate() const;
  bool operator==(const CostDims&) const = default;
};

// Counting convention: a multiply-accumulate is one multiply plus one add,
// exp is one unit, divisions are not counted. Adds are the logical adds of
// the algorithm (accumulations, softmax sums, max subtraction); compensation
// terms of the summation are not included. Memory is in elements, not bytes.
struct CostReport {
  Mechanism mechanism = Mechanism::pca;
  CostDims dims;
  std::uint64_t analytic_multiplies = 0;
  std::uint64_t analytic_adds = 0;
  std::uint64_t analytic_exps = 0;
  std::optional<std::uint64_t> measured_multiplies;
  std::optional<std::uint64_t> measured_exps;
  std::uint64_t peak_elements = 0;
};

namespace checked {
// Overflow-checked unsigned arithmetic; throws Errc::dimension_overflow.
std::uint64_t mul(std::uint64_t a, std::uint64_t b);
std::uint64_t add(std::uint64_t a, std::uint64_t b);
}  // namespace checked

}  // namespace pcan
