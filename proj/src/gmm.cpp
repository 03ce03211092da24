#include "pcan/gmm.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <string>

#include "pcan/detail/binary.hpp"
#include "pcan/detail/kernels.hpp"

namespace pcan {

void PrototypeSet::validate() const {
  require(key_means.rows() >= 1, Errc::invalid_argument, "prototype set needs at least one prototype");
  require(value_protos.rows() == key_means.rows(), Errc::dimension_mismatch,
          "key and value prototype counts differ");
  require(sigma2 > 0.0 && std::isfinite(sigma2), Errc::invalid_argument, "sigma2 must be positive and finite");
  auto finite = [](const Matrix& m) {
    for (double v : m.data())
      if (!std::isfinite(v)) return false;
    return true;
  };
  require(finite(key_means) && finite(value_protos), Errc::numeric, "prototype set contains non-finite values");
}

void EmConfig::validate(std::size_t samples, std::size_t dim) const {
  require(sigma2 > 0.0 && std::isfinite(sigma2), Errc::invalid_argument, "EM sigma2 must be positive");
  require(n_protos >= 1, Errc::invalid_argument, "EM needs at least one prototype");
  if (init == InitKind::warm_start) {
    require(warm_means.rows() == n_protos && warm_means.cols() == dim, Errc::dimension_mismatch,
            "warm-start means must be n_protos x key_dim");
  } else {
    require(n_protos <= samples, Errc::invalid_argument,
            "n_protos (" + std::to_string(n_protos) + ") exceeds the number of samples (" + std::to_string(samples) +
                ")");
  }
}

namespace {

void check_sigma(double sigma2) {
  require(sigma2 > 0.0 && std::isfinite(sigma2), Errc::invalid_argument, "sigma2 must be positive");
}

}  // namespace

AssignmentMap posterior(const Matrix& keys, const Matrix& means, double sigma2) {
  check_sigma(sigma2);
  require(means.rows() >= 1, Errc::invalid_argument, "posterior needs at least one mean");
  require(keys.cols() == means.cols(), Errc::dimension_mismatch, "posterior: key and mean dimensions differ");
  AssignmentMap out;
  kernels::posterior<double>(keys, means, sigma2, out.posteriors, out.log_normalizers);
  return out;
}

Matrix m_step(const Matrix& keys, const AssignmentMap& assignments, std::size_t* reseeded) {
  require(assignments.posteriors.rows() == keys.rows(), Errc::dimension_mismatch,
          "m_step: posterior rows must match key count");
  require(keys.rows() >= 1, Errc::invalid_argument, "m_step needs at least one key");
  Matrix means;
  const auto n = kernels::m_step<double>(keys, assignments.posteriors, means);
  if (reseeded) *reseeded = n;
  return means;
}

double log_likelihood(const Matrix& keys, const Matrix& means, double sigma2) {
  const auto a = posterior(keys, means, sigma2);
  return kernels::log_likelihood_from_norms(a.log_normalizers, means.rows(), keys.cols(), sigma2);
}

Matrix initial_means(const Matrix& keys, const EmConfig& config) {
  config.validate(keys.rows(), keys.cols());
  if (config.init == InitKind::warm_start) return config.warm_means;

  const std::size_t m = keys.rows();
  const std::size_t n = config.n_protos;
  RngStream rng(config.seed);
  std::vector<std::size_t> chosen;
  chosen.reserve(n);

  if (config.init == InitKind::subsample) {
    // Partial Fisher-Yates: the first n slots are a uniform sample without replacement.
    std::vector<std::size_t> idx(m);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t j = i + rng.below(m - i);
      std::swap(idx[i], idx[j]);
      chosen.push_back(idx[i]);
    }
  } else {
    chosen.push_back(rng.below(m));
    std::vector<double> nearest(m, std::numeric_limits<double>::infinity());
    while (chosen.size() < n) {
      const auto last = keys.row(chosen.back());
      std::size_t best = 0;
      double best_d = -1.0;
      for (std::size_t i = 0; i < m; ++i) {
        nearest[i] = std::min(nearest[i], kernels::sq_dist<double>(keys.row(i), last));
        if (nearest[i] > best_d) {
          best_d = nearest[i];
          best = i;
        }
      }
      chosen.push_back(best);
    }
  }

  Matrix means(n, keys.cols());
  for (std::size_t j = 0; j < n; ++j) {
    const auto src = keys.row(chosen[j]);
    std::copy(src.begin(), src.end(), means.row(j).begin());
  }
  return means;
}

GmmFit fit_gmm(const Matrix& keys, const EmConfig& config) {
  require(keys.rows() >= 1, Errc::invalid_argument, "fit_gmm needs at least one key");
  auto run = kernels::run_em<double>(keys, initial_means(keys, config), config.sigma2, config.n_iters);
  GmmFit fit;
  fit.means = std::move(run.means);
  fit.likelihood_trace = std::move(run.trace);
  fit.assignments.posteriors = std::move(run.post);
  fit.assignments.log_normalizers = std::move(run.log_norm);
  fit.reseeds = run.reseeds;
  return fit;
}

Matrix value_prototypes(const AssignmentMap& assignments, const Matrix& values, ValueMode mode) {
  const Matrix& post = assignments.posteriors;
  require(post.rows() == values.rows(), Errc::dimension_mismatch,
          "value_prototypes: posterior rows must match value count");
  switch (mode) {
    case ValueMode::literal:
      return kernels::weighted_sums<double>(post, values, nullptr);
    case ValueMode::normalized: {
      const auto mass = kernels::column_mass(post);
      for (std::size_t j = 0; j < mass.size(); ++j)
        require(mass[j] >= kernels::kEmptyMass, Errc::numeric,
                "normalized value prototypes: component " + std::to_string(j) + " has zero mass");
      return kernels::weighted_sums<double>(post, values, &mass);
    }
    case ValueMode::hard: {
      Matrix out(post.cols(), values.cols());
      for (std::size_t i = 0; i < post.rows(); ++i) {
        const auto p = post.row(i);
        const std::size_t j = static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
        const auto v = values.row(i);
        for (std::size_t c = 0; c < v.size(); ++c) out(j, c) += v[c];
      }
      return out;
    }
  }
  fail(Errc::invalid_argument, "unknown value mode");
}

PrototypeSet build_prototypes(const Matrix& keys, const Matrix& values, const EmConfig& config, ValueMode mode,
                              std::vector<double>* trace) {
  require(keys.rows() == values.rows(), Errc::dimension_mismatch, "keys and values must have the same row count");
  auto fit = fit_gmm(keys, config);
  PrototypeSet set;
  set.value_protos = value_prototypes(fit.assignments, values, mode);
  set.key_means = std::move(fit.means);
  set.sigma2 = config.sigma2;
  if (trace) *trace = std::move(fit.likelihood_trace);
  return set;
}

InitKind parse_init_kind(std::string_view name) {
  if (name == "subsample" || name == "seeded-subsample") return InitKind::subsample;
  if (name == "farthest" || name == "farthest-point") return InitKind::farthest_point;
  if (name == "warm" || name == "warm-start") return InitKind::warm_start;
  fail(Errc::invalid_argument, "unknown EM init '" + std::string(name) + "' (subsample|farthest|warm)");
}

std::string_view to_string(InitKind kind) {
  switch (kind) {
    case InitKind::subsample: return "subsample";
    case InitKind::farthest_point: return "farthest";
    case InitKind::warm_start: return "warm";
  }
  return "?";
}

ValueMode parse_value_mode(std::string_view name) {
  if (name == "literal") return ValueMode::literal;
  if (name == "normalized") return ValueMode::normalized;
  if (name == "hard") return ValueMode::hard;
  fail(Errc::invalid_argument, "unknown value mode '" + std::string(name) + "' (literal|normalized|hard)");
}

std::string_view to_string(ValueMode mode) {
  switch (mode) {
    case ValueMode::literal: return "literal";
    case ValueMode::normalized: return "normalized";
    case ValueMode::hard: return "hard";
  }
  return "?";
}

void write_protos(std::ostream& os, const PrototypeSet& protos) {
  protos.validate();
  binary::put_magic(os, "PCAP");
  binary::put_le<std::uint16_t>(os, kProtoVersion);
  binary::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(protos.n_protos()));
  binary::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(protos.key_dim()));
  binary::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(protos.value_dim()));
  binary::put_f64(os, protos.sigma2);
  for (double v : protos.key_means.data()) binary::put_f32(os, v);
  for (double v : protos.value_protos.data()) binary::put_f32(os, v);
}

PrototypeSet read_protos(std::istream& is) {
  binary::expect_magic(is, "PCAP", "prototype");
  const auto version = binary::get_le<std::uint16_t>(is, "PCAP version");
  require(version == kProtoVersion, Errc::unsupported, "unsupported PCAP version " + std::to_string(version));
  const std::uint64_t n = binary::get_le<std::uint32_t>(is, "PCAP N");
  const std::uint64_t d = binary::get_le<std::uint32_t>(is, "PCAP D");
  const std::uint64_t cv = binary::get_le<std::uint32_t>(is, "PCAP C_v");
  require(n * (d + cv) <= (std::uint64_t{1} << 31), Errc::dimension_overflow, "PCAP dimensions too large");
  PrototypeSet set;
  set.sigma2 = binary::get_f64(is, "PCAP sigma2");
  set.key_means = Matrix(n, d);
  set.value_protos = Matrix(n, cv);
  for (auto& v : set.key_means.data()) v = binary::get_f32(is, "PCAP key means");
  for (auto& v : set.value_protos.data()) v = binary::get_f32(is, "PCAP value prototypes");
  set.validate();
  return set;
}

void write_protos(const std::filesystem::path& path, const PrototypeSet& protos) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(os), Errc::io, "cannot open for writing: " + path.string());
  write_protos(os, protos);
  os.flush();
  require(static_cast<bool>(os), Errc::io, "write failed: " + path.string());
}

PrototypeSet read_protos(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  require(static_cast<bool>(is), Errc::io, "cannot open for reading: " + path.string());
  return read_protos(is);
}

}  // namespace pcan
