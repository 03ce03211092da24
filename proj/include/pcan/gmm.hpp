#pragma once

#include <filesystem>
#include <iosfwd>
#include <string_view>
#include <vector>

#include "pcan/core.hpp"

namespace pcan {

// N key prototypes (mixture means), their value prototypes and the shared
// isotropic variance of the mixture.
struct PrototypeSet {
  Matrix key_means;     // N x D
  Matrix value_protos;  // N x C_v
  double sigma2 = 0.5;

  std::size_t n_protos() const noexcept { return key_means.rows(); }
  std::size_t key_dim() const noexcept { return key_means.cols(); }
  std::size_t value_dim() const noexcept { return value_protos.cols(); }
  void validate() const;

  bool operator==(const PrototypeSet&) const = default;
};

// Row-stochastic posterior p(z=j | k_i) plus log Z_i, where
// Z_i = sum_j exp(-||k_i - mu_j||^2 / 2 sigma^2). The log is kept because Z_i
// itself underflows for keys far from every mean.
struct AssignmentMap {
  Matrix posteriors;  // M x N
  std::vector<double> log_normalizers;
};

enum class InitKind { subsample, farthest_point, warm_start };

struct EmConfig {
  std::size_t n_protos = 64;
  double sigma2 = 0.5;
  std::size_t n_iters = 6;
  InitKind init = InitKind::subsample;
  Matrix warm_means;  // used when init == warm_start
  std::uint64_t seed = 0;

  void validate(std::size_t samples, std::size_t dim) const;
};

enum class ValueMode {
  literal,     // v_j = sum_i p_ij v_i
  normalized,  // literal divided by the component mass sum_i p_ij
  hard,        // each v_i added in full to its argmax-posterior component
};

struct GmmFit {
  Matrix means;
  std::vector<double> likelihood_trace;  // n_iters + 1 entries, initialization first
  AssignmentMap assignments;             // posteriors at the returned means
  std::size_t reseeds = 0;               // empty components recovered during EM
};

AssignmentMap posterior(const Matrix& keys, const Matrix& means, double sigma2);
// One M-step. `reseeded`, when given, receives the number of components that
// had no mass and were moved to the worst-covered key.
Matrix m_step(const Matrix& keys, const AssignmentMap& assignments, std::size_t* reseeded = nullptr);
double log_likelihood(const Matrix& keys, const Matrix& means, double sigma2);
Matrix initial_means(const Matrix& keys, const EmConfig& config);
GmmFit fit_gmm(const Matrix& keys, const EmConfig& config);
Matrix value_prototypes(const AssignmentMap& assignments, const Matrix& values, ValueMode mode);

// fit_gmm on `keys` followed by value_prototypes on `values` at the fitted means.
PrototypeSet build_prototypes(const Matrix& keys, const Matrix& values, const EmConfig& config, ValueMode mode,
                              std::vector<double>* trace = nullptr);

InitKind parse_init_kind(std::string_view name);
std::string_view to_string(InitKind kind);
ValueMode parse_value_mode(std::string_view name);
std::string_view to_string(ValueMode mode);

// PCAP layout: "PCAP", u16 version (1), u32 N, u32 D, u32 C_v, f64 sigma2,
// then key_means and value_protos as row-major float32, little-endian.
inline constexpr std::uint16_t kProtoVersion = 1;
void write_protos(std::ostream& os, const PrototypeSet& protos);
PrototypeSet read_protos(std::istream& is);
void write_protos(const std::filesystem::path& path, const PrototypeSet& protos);
PrototypeSet read_protos(const std::filesystem::path& path);

}  // namespace pcan
