#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "pcan/error.hpp"

namespace pcan {

// Dense row-major matrix. Rows are pixels or samples, columns are channels.
template <class T>
class Mat {
 public:
  Mat() = default;
  Mat(std::size_t rows, std::size_t cols, T fill = T(0)) : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Mat(std::size_t rows, std::size_t cols, std::vector<T> data) : rows_(rows), cols_(cols), data_(std::move(data)) {
    require(data_.size() == rows_ * cols_, Errc::dimension_mismatch, "matrix data size does not match rows*cols");
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool empty() const noexcept { return data_.empty(); }

  std::span<T> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
  std::span<const T> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }

  T& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  const T& operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  std::vector<T>& data() noexcept { return data_; }
  const std::vector<T>& data() const noexcept { return data_; }

  bool operator==(const Mat&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

using Matrix = Mat<double>;

// H x W x C grid, row-major over (y, x, c). Pixel i = y * width + x.
class FeatureMap {
 public:
  FeatureMap() = default;
  FeatureMap(std::size_t height, std::size_t width, std::size_t channels, double fill = 0.0);
  FeatureMap(std::size_t height, std::size_t width, std::size_t channels, std::vector<double> data);
  // Wraps a pixel matrix (rows = height * width).
  FeatureMap(std::size_t height, std::size_t width, Matrix pixels);

  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t channels() const noexcept { return pixels_.cols(); }
  std::size_t pixel_count() const noexcept { return height_ * width_; }

  double& at(std::size_t y, std::size_t x, std::size_t c) { return pixels_(y * width_ + x, c); }
  double at(std::size_t y, std::size_t x, std::size_t c) const { return pixels_(y * width_ + x, c); }

  std::span<double> pixel(std::size_t i) { return pixels_.row(i); }
  std::span<const double> pixel(std::size_t i) const { return pixels_.row(i); }

  const Matrix& pixels() const noexcept { return pixels_; }
  Matrix& pixels() noexcept { return pixels_; }
  const std::vector<double>& data() const noexcept { return pixels_.data(); }

  bool same_grid(const FeatureMap& other) const noexcept {
    return height_ == other.height_ && width_ == other.width_;
  }
  bool all_finite() const;

  bool operator==(const FeatureMap&) const = default;

 private:
  void validate() const;

  std::size_t height_ = 0;
  std::size_t width_ = 0;
  Matrix pixels_;
};

// std::mt19937_64 (its output sequence is fixed by the standard) drives the stream.
// Uniform and normal draws are derived here rather than through <random>
// distributions, whose algorithms differ between standard libraries.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed);

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t next_u64();
  // Uniform on [0, 1) with 53 bits of resolution.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer on [0, n). n must be > 0.
  std::size_t below(std::size_t n);
  // Standard normal via Box-Muller.
  double normal();

  // Child stream for a sub-task; independent of how much of the parent was consumed.
  static RngStream derive(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0);

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

struct ProjectionParams {
  Matrix key_weights;    // C_in x D
  Matrix value_weights;  // C_in x C_v
  std::uint64_t seed = 0;

  std::size_t input_dim() const noexcept { return key_weights.rows(); }
  std::size_t key_dim() const noexcept { return key_weights.cols(); }
  std::size_t value_dim() const noexcept { return value_weights.cols(); }

  // Entries drawn N(0, scale^2 / C_out); scale 1 keeps squared distances roughly intact.
  static ProjectionParams seeded(std::size_t input_dim, std::size_t key_dim, std::size_t value_dim,
                                 std::uint64_t seed, double scale = 1.0);
  static ProjectionParams identity(std::size_t dim);
};

struct KeyValueMaps {
  FeatureMap keys;
  FeatureMap values;
};

std::vector<double> softmax(std::span<const double> logits);
double sq_dist(std::span<const double> a, std::span<const double> b);
KeyValueMaps encode_keys_values(const FeatureMap& frame, const ProjectionParams& params);
// Per-pixel product with a C_in x C_out matrix.
FeatureMap project(const FeatureMap& frame, const Matrix& weights);

// Worker count used by the pixel-parallel kernels. Results never depend on it.
void set_thread_count(std::size_t n);
std::size_t thread_count();
void parallel_for(std::size_t n, const std::function<void(std::size_t begin, std::size_t end)>& body);

// Neumaier-compensated accumulator.
template <class T>
class CompensatedSum {
 public:
  void add(const T& x) {
    const T t = sum_ + x;
    // select instead of branching; the sign of the larger term is data dependent
    const bool sum_larger = magnitude(sum_) >= magnitude(x);
    const T big = sum_larger ? sum_ : x;
    const T small = sum_larger ? x : sum_;
    comp_ = comp_ + ((big - t) + small);
    sum_ = t;
  }
  T value() const { return sum_ + comp_; }

 private:
  static T magnitude(const T& v) { return v < T(0) ? -v : v; }
  T sum_ = T(0);
  T comp_ = T(0);
};

}  // namespace pcan
