#pragma once

// Numeric kernels shared by every attention path. They are templates over the
// scalar so the cost benchmark can run them on pcan::Counted and tally the
// exact work the double-precision library performs.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <span>
#include <type_traits>
#include <vector>

#include "pcan/core.hpp"
#include "pcan/counting.hpp"

namespace pcan::kernels {

using std::exp;
using std::log;

inline constexpr double kEmptyMass = 1e-12;

// Channel reductions are short (D terms) and use plain summation; the long
// reductions over pixels and memory positions are compensated.
template <class T>
T sq_dist(std::span<const T> a, std::span<const T> b) {
  T acc = T(0);
  for (std::size_t c = 0; c < a.size(); ++c) {
    const T diff = a[c] - b[c];
    acc = acc + diff * diff;
  }
  return acc;
}

template <class T>
T dot(std::span<const T> a, std::span<const T> b) {
  T acc = T(0);
  for (std::size_t c = 0; c < a.size(); ++c) acc = acc + a[c] * b[c];
  return acc;
}

// In-place softmax with max subtraction. Returns log(sum_j exp(logit_j)).
template <class T>
T softmax_inplace(std::span<T> v) {
  T top = v[0];
  for (std::size_t j = 1; j < v.size(); ++j)
    if (v[j] > top) top = v[j];
  CompensatedSum<T> z;
  for (auto& x : v) {
    x = exp(x - top);
    z.add(x);
  }
  const T total = z.value();
  for (auto& x : v) x = x / total;
  return top + log(total);
}

// Gaussian logits -||k - mu_j||^2 / (2 sigma^2) for one key against all means.
template <class T>
void gaussian_logits(std::span<const T> key, const Mat<T>& means, double sigma2, std::span<T> out) {
  const T scale = T(2.0 * sigma2);
  for (std::size_t j = 0; j < means.rows(); ++j) out[j] = -(sq_dist<T>(key, means.row(j)) / scale);
}

// E-step: posterior p(z=j|k_i) for every key and log-normalizer log Z_i.
template <class T>
void posterior(const Mat<T>& keys, const Mat<T>& means, double sigma2, Mat<T>& post, std::vector<T>& log_norm) {
  post = Mat<T>(keys.rows(), means.rows());
  log_norm.assign(keys.rows(), T(0));
  parallel_for(keys.rows(), [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      auto row = post.row(i);
      gaussian_logits<T>(keys.row(i), means, sigma2, row);
      log_norm[i] = softmax_inplace<T>(row);
    }
  });
}

// Mixture log-likelihood from the log-normalizers of an E-step.
template <class T>
double log_likelihood_from_norms(const std::vector<T>& log_norm, std::size_t n_protos, std::size_t dim,
                                 double sigma2) {
  const double per_key = std::log(static_cast<double>(n_protos)) +
                         0.5 * static_cast<double>(dim) * std::log(2.0 * std::numbers::pi * sigma2);
  CompensatedSum<double> acc;
  for (const auto& z : log_norm) acc.add(value_of(z) - per_key);
  return acc.value();
}

// Column masses sum_i p_ij.
template <class T>
std::vector<T> column_mass(const Mat<T>& post) {
  std::vector<T> mass(post.cols(), T(0));
  parallel_for(post.cols(), [&](std::size_t begin, std::size_t end) {
    std::vector<CompensatedSum<T>> acc(end - begin);
    for (std::size_t i = 0; i < post.rows(); ++i)
      for (std::size_t j = begin; j < end; ++j) acc[j - begin].add(post(i, j));
    for (std::size_t j = begin; j < end; ++j) mass[j] = acc[j - begin].value();
  });
  return mass;
}

// Weighted column sums sum_i p_ij x_i, optionally divided by the column mass.
template <class T>
Mat<T> weighted_sums(const Mat<T>& post, const Mat<T>& samples, const std::vector<T>* mass) {
  Mat<T> out(post.cols(), samples.cols());
  const std::size_t c_dim = samples.cols();
  parallel_for(post.cols(), [&](std::size_t begin, std::size_t end) {
    // rows outer for cache locality; each accumulator still sees i in order
    if constexpr (std::is_same_v<T, double>) {
      // Same Neumaier steps as CompensatedSum, laid out so the channel loop
      // vectorizes. A zero weight adds exactly nothing and is skipped.
      std::vector<double> sum((end - begin) * c_dim, 0.0), comp((end - begin) * c_dim, 0.0);
      for (std::size_t i = 0; i < post.rows(); ++i) {
        const double* x = samples.row(i).data();
        for (std::size_t j = begin; j < end; ++j) {
          const double p = post(i, j);
          if (p == 0.0) continue;
          double* s = &sum[(j - begin) * c_dim];
          double* e = &comp[(j - begin) * c_dim];
          for (std::size_t c = 0; c < c_dim; ++c) {
            const double v = p * x[c];
            const double t = s[c] + v;
            const bool s_larger = std::abs(s[c]) >= std::abs(v);
            const double big = s_larger ? s[c] : v;
            const double small = s_larger ? v : s[c];
            e[c] += (big - t) + small;
            s[c] = t;
          }
        }
      }
      for (std::size_t j = begin; j < end; ++j)
        for (std::size_t c = 0; c < c_dim; ++c) {
          const double v = sum[(j - begin) * c_dim + c] + comp[(j - begin) * c_dim + c];
          out(j, c) = mass ? v / (*mass)[j] : v;
        }
    } else {
      std::vector<CompensatedSum<T>> acc((end - begin) * c_dim);
      for (std::size_t i = 0; i < post.rows(); ++i) {
        const auto x = samples.row(i);
        for (std::size_t j = begin; j < end; ++j) {
          const T p = post(i, j);
          auto* a = &acc[(j - begin) * c_dim];
          for (std::size_t c = 0; c < c_dim; ++c) a[c].add(p * x[c]);
        }
      }
      for (std::size_t j = begin; j < end; ++j)
        for (std::size_t c = 0; c < c_dim; ++c) {
          const T v = acc[(j - begin) * c_dim + c].value();
          out(j, c) = mass ? v / (*mass)[j] : v;
        }
    }
  });
  return out;
}

// M-step with empty-component recovery: a component whose mass falls below
// kEmptyMass is re-seeded at the key farthest from its nearest prototype.
// Returns the number of re-seeded components.
template <class T>
std::size_t m_step(const Mat<T>& keys, const Mat<T>& post, Mat<T>& means) {
  const auto mass = column_mass(post);
  std::vector<std::size_t> empty;
  std::vector<T> safe_mass = mass;
  for (std::size_t j = 0; j < mass.size(); ++j) {
    if (value_of(mass[j]) < kEmptyMass) {
      empty.push_back(j);
      safe_mass[j] = T(1);
    }
  }
  means = weighted_sums(post, keys, &safe_mass);
  for (std::size_t j : empty) {
    std::vector<bool> live(means.rows(), true);
    for (std::size_t e : empty)
      if (e >= j) live[e] = false;
    std::size_t best = 0;
    double best_dist = -1.0;
    for (std::size_t i = 0; i < keys.rows(); ++i) {
      double nearest = std::numeric_limits<double>::infinity();
      for (std::size_t l = 0; l < means.rows(); ++l) {
        if (!live[l]) continue;
        nearest = std::min(nearest, value_of(sq_dist<T>(keys.row(i), means.row(l))));
      }
      if (nearest > best_dist) {
        best_dist = nearest;
        best = i;
      }
    }
    std::copy(keys.row(best).begin(), keys.row(best).end(), means.row(j).begin());
  }
  return empty.size();
}

template <class T>
struct EmRun {
  Mat<T> means;
  Mat<T> post;  // posteriors at the final means
  std::vector<T> log_norm;
  std::vector<double> trace;
  std::size_t reseeds = 0;
};

// Alternates E and M steps; iteration count n gives n + 1 E-steps and a
// likelihood trace of n + 1 entries (initialization first).
template <class T>
EmRun<T> run_em(const Mat<T>& keys, Mat<T> init_means, double sigma2, std::size_t iters) {
  EmRun<T> run;
  run.means = std::move(init_means);
  for (std::size_t it = 0;; ++it) {
    posterior(keys, run.means, sigma2, run.post, run.log_norm);
    run.trace.push_back(log_likelihood_from_norms(run.log_norm, run.means.rows(), keys.cols(), sigma2));
    if (it == iters) break;
    run.reseeds += m_step(keys, run.post, run.means);
  }
  return run;
}

// Prototype read: y_i = sum_j p(z=j|q_i) v_j.
template <class T>
Mat<T> attend(const Mat<T>& query, const Mat<T>& means, const Mat<T>& value_protos, double sigma2) {
  Mat<T> out(query.rows(), value_protos.cols());
  parallel_for(query.rows(), [&](std::size_t begin, std::size_t end) {
    std::vector<T> w(means.rows());
    std::vector<CompensatedSum<T>> acc(value_protos.cols());
    for (std::size_t i = begin; i < end; ++i) {
      gaussian_logits<T>(query.row(i), means, sigma2, w);
      softmax_inplace<T>(std::span<T>(w));
      std::fill(acc.begin(), acc.end(), CompensatedSum<T>{});
      for (std::size_t j = 0; j < means.rows(); ++j) {
        const auto v = value_protos.row(j);
        for (std::size_t c = 0; c < v.size(); ++c) acc[c].add(w[j] * v[c]);
      }
      for (std::size_t c = 0; c < acc.size(); ++c) out(i, c) = acc[c].value();
    }
  });
  return out;
}

// Similarity-weighted temporal fusion. weights has one column per
// reconstruction followed by one for the current value map.
template <class T>
void aggregate(const std::vector<const Mat<T>*>& recons, const Mat<T>& current, Mat<T>& fused, Mat<T>& weights) {
  const std::size_t terms = recons.size() + 1;
  fused = Mat<T>(current.rows(), current.cols());
  weights = Mat<T>(current.rows(), terms);
  parallel_for(current.rows(), [&](std::size_t begin, std::size_t end) {
    std::vector<CompensatedSum<T>> acc(current.cols());
    for (std::size_t i = begin; i < end; ++i) {
      const auto v = current.row(i);
      auto w = weights.row(i);
      for (std::size_t r = 0; r < recons.size(); ++r) w[r] = dot<T>(v, recons[r]->row(i));
      w[recons.size()] = dot<T>(v, v);
      softmax_inplace<T>(w);
      std::fill(acc.begin(), acc.end(), CompensatedSum<T>{});
      for (std::size_t r = 0; r < terms; ++r) {
        const auto y = r < recons.size() ? recons[r]->row(i) : v;
        for (std::size_t c = 0; c < y.size(); ++c) acc[c].add(w[r] * y[c]);
      }
      for (std::size_t c = 0; c < acc.size(); ++c) fused(i, c) = acc[c].value();
    }
  });
}

enum class KernelKind { dot, gaussian };

// Dense attention over every memory position of every memory frame.
template <class T>
Mat<T> nonlocal(const Mat<T>& query, const std::vector<const Mat<T>*>& mem_keys,
                const std::vector<const Mat<T>*>& mem_values, KernelKind kind, double sigma2) {
  std::size_t positions = 0;
  for (const auto* k : mem_keys) positions += k->rows();
  const std::size_t cv = mem_values.front()->cols();
  Mat<T> out(query.rows(), cv);
  parallel_for(query.rows(), [&](std::size_t begin, std::size_t end) {
    std::vector<T> w(positions);
    std::vector<CompensatedSum<T>> acc(cv);
    const T scale = T(2.0 * sigma2);
    for (std::size_t i = begin; i < end; ++i) {
      const auto q = query.row(i);
      std::size_t p = 0;
      for (const auto* keys : mem_keys) {
        for (std::size_t m = 0; m < keys->rows(); ++m, ++p) {
          w[p] = kind == KernelKind::dot ? dot<T>(q, keys->row(m)) : -(sq_dist<T>(q, keys->row(m)) / scale);
        }
      }
      softmax_inplace<T>(std::span<T>(w));
      std::fill(acc.begin(), acc.end(), CompensatedSum<T>{});
      p = 0;
      for (const auto* values : mem_values) {
        for (std::size_t m = 0; m < values->rows(); ++m, ++p) {
          const auto v = values->row(m);
          for (std::size_t c = 0; c < cv; ++c) acc[c].add(w[p] * v[c]);
        }
      }
      for (std::size_t c = 0; c < cv; ++c) out(i, c) = acc[c].value();
    }
  });
  return out;
}

}  // namespace pcan::kernels
