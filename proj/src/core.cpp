#include "pcan/core.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numbers>
#include <thread>

#include "pcan/detail/kernels.hpp"

namespace pcan {

const char* errc_name(Errc code) {
  switch (code) {
    case Errc::invalid_argument: return "invalid argument";
    case Errc::dimension_mismatch: return "dimension mismatch";
    case Errc::bad_magic: return "bad magic";
    case Errc::truncated: return "truncated payload";
    case Errc::dimension_overflow: return "dimension overflow";
    case Errc::io: return "io error";
    case Errc::numeric: return "numeric failure";
    case Errc::unsupported: return "unsupported";
    case Errc::empty_instance: return "empty instance";
  }
  return "unknown";
}

FeatureMap::FeatureMap(std::size_t height, std::size_t width, std::size_t channels, double fill)
    : height_(height), width_(width), pixels_(height * width, channels, fill) {
  validate();
}

FeatureMap::FeatureMap(std::size_t height, std::size_t width, std::size_t channels, std::vector<double> data)
    : height_(height), width_(width) {
  require(data.size() == height * width * channels, Errc::dimension_mismatch,
          "feature map data length must equal height*width*channels");
  pixels_ = Matrix(height * width, channels, std::move(data));
  validate();
}

FeatureMap::FeatureMap(std::size_t height, std::size_t width, Matrix pixels)
    : height_(height), width_(width), pixels_(std::move(pixels)) {
  require(pixels_.rows() == height * width, Errc::dimension_mismatch, "pixel matrix rows must equal height*width");
  validate();
}

void FeatureMap::validate() const {
  require(height_ > 0 && width_ > 0 && pixels_.cols() > 0, Errc::invalid_argument,
          "feature map dimensions must be positive");
  require(all_finite(), Errc::numeric, "feature map contains non-finite values");
}

bool FeatureMap::all_finite() const {
  return std::all_of(data().begin(), data().end(), [](double v) { return std::isfinite(v); });
}

RngStream::RngStream(std::uint64_t seed) : seed_(seed), engine_(seed) {}

std::uint64_t RngStream::next_u64() { return engine_(); }

double RngStream::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

std::size_t RngStream::below(std::size_t n) {
  require(n > 0, Errc::invalid_argument, "RngStream::below requires n > 0");
  // Rejection sampling keeps the draw unbiased.
  const std::uint64_t bound = static_cast<std::uint64_t>(n);
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t x;
  do {
    x = next_u64();
  } while (x >= limit);
  return static_cast<std::size_t>(x % bound);
}

double RngStream::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

RngStream RngStream::derive(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  // splitmix64 finalizer over the combined words
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return RngStream(mix(mix(mix(seed) ^ a) ^ b));
}

ProjectionParams ProjectionParams::seeded(std::size_t input_dim, std::size_t key_dim, std::size_t value_dim,
                                          std::uint64_t seed, double scale) {
  require(input_dim > 0 && key_dim > 0 && value_dim > 0, Errc::invalid_argument,
          "projection dimensions must be positive");
  ProjectionParams p;
  p.seed = seed;
  RngStream rng(seed);
  auto fill = [&](std::size_t cols) {
    Matrix m(input_dim, cols);
    const double sd = scale / std::sqrt(static_cast<double>(cols));
    for (auto& w : m.data()) w = sd * rng.normal();
    return m;
  };
  p.key_weights = fill(key_dim);
  p.value_weights = fill(value_dim);
  return p;
}

ProjectionParams ProjectionParams::identity(std::size_t dim) {
  ProjectionParams p;
  p.key_weights = Matrix(dim, dim);
  for (std::size_t i = 0; i < dim; ++i) p.key_weights(i, i) = 1.0;
  p.value_weights = p.key_weights;
  return p;
}

std::vector<double> softmax(std::span<const double> logits) {
  require(!logits.empty(), Errc::invalid_argument, "softmax of an empty vector");
  for (double v : logits) require(!std::isnan(v), Errc::numeric, "softmax input contains NaN");
  std::vector<double> out(logits.begin(), logits.end());
  kernels::softmax_inplace<double>(out);
  return out;
}

double sq_dist(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), Errc::dimension_mismatch, "sq_dist: vector lengths differ");
  return kernels::sq_dist<double>(a, b);
}

FeatureMap project(const FeatureMap& frame, const Matrix& weights) {
  require(frame.channels() == weights.rows(), Errc::dimension_mismatch,
          "projection input dimension does not match frame channels");
  Matrix out(frame.pixel_count(), weights.cols());
  parallel_for(frame.pixel_count(), [&](std::size_t begin, std::size_t end) {
    std::vector<CompensatedSum<double>> acc(weights.cols());
    for (std::size_t i = begin; i < end; ++i) {
      std::fill(acc.begin(), acc.end(), CompensatedSum<double>{});
      const auto px = frame.pixel(i);
      for (std::size_t c = 0; c < px.size(); ++c) {
        const auto w = weights.row(c);
        for (std::size_t d = 0; d < w.size(); ++d) acc[d].add(px[c] * w[d]);
      }
      for (std::size_t d = 0; d < acc.size(); ++d) out(i, d) = acc[d].value();
    }
  });
  return FeatureMap(frame.height(), frame.width(), std::move(out));
}

KeyValueMaps encode_keys_values(const FeatureMap& frame, const ProjectionParams& params) {
  require(frame.channels() == params.input_dim() && params.value_weights.rows() == params.input_dim(),
          Errc::dimension_mismatch, "encode_keys_values: frame channels do not match projection input dimension");
  return {project(frame, params.key_weights), project(frame, params.value_weights)};
}

namespace {
std::atomic<std::size_t> g_threads{1};
}

void set_thread_count(std::size_t n) { g_threads = std::max<std::size_t>(1, n); }

std::size_t thread_count() { return g_threads.load(); }

void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body) {
  const std::size_t workers = std::min(thread_count(), n);
  if (workers <= 1) {
    if (n > 0) body(0, n);
    return;
  }
  const std::size_t chunk = (n + workers - 1) / workers;
  std::vector<std::jthread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t begin = w * chunk;
    const std::size_t end = std::min(n, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back([&body, begin, end] { body(begin, end); });
  }
}

}  // namespace pcan
