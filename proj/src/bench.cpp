#include "pcan/bench.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>
#include <string>

#include "pcan/counting.hpp"
#include "pcan/detail/kernels.hpp"
#include "pcan/error.hpp"
#include "pcan/gmm.hpp"

namespace pcan {

std::string_view to_string(Mechanism m) {
  switch (m) {
    case Mechanism::pca: return "pca";
    case Mechanism::nonlocal: return "nonlocal";
    case Mechanism::mhsa: return "mhsa";
  }
  return "?";
}

Mechanism parse_mechanism(std::string_view name) {
  if (name == "pca") return Mechanism::pca;
  if (name == "nonlocal") return Mechanism::nonlocal;
  if (name == "mhsa") return Mechanism::mhsa;
  fail(Errc::invalid_argument, "unknown mechanism '" + std::string(name) + "' (pca|nonlocal|mhsa)");
}

namespace checked {

std::uint64_t mul(std::uint64_t a, std::uint64_t b) {
  std::uint64_t r;
  require(!__builtin_mul_overflow(a, b, &r), Errc::dimension_overflow, "cost arithmetic overflows 64 bits");
  return r;
}

std::uint64_t add(std::uint64_t a, std::uint64_t b) {
  std::uint64_t r;
  require(!__builtin_add_overflow(a, b, &r), Errc::dimension_overflow, "cost arithmetic overflows 64 bits");
  return r;
}

}  // namespace checked

std::uint64_t CostDims::pixels() const { return checked::mul(height, width); }

void CostDims::validate() const {
  require(height > 0 && width > 0 && frames > 0 && key_dim > 0 && value_dim > 0 && n_protos > 0 && heads > 0,
          Errc::invalid_argument, "cost dims must be positive");
}

CostReport pca_cost(const CostDims& dims) {
  using checked::add;
  using checked::mul;
  dims.validate();
  const auto p = dims.pixels();
  const auto pn = mul(p, dims.n_protos);
  const auto d = dims.key_dim;
  const auto cv = dims.value_dim;
  const auto it = dims.em_iters;

  // per memory frame: (it + 1) E-steps and `it` M-steps at P*N*D each,
  // value prototypes P*N*C_v, prototype read P*N*(D + C_v)
  const auto em = mul(mul(add(mul(2, it), 1), pn), d);
  const auto values = mul(pn, cv);
  const auto read = mul(pn, add(d, cv));
  const auto per_frame = add(add(em, values), read);
  // aggregation: similarity dot product and weighted sum for T + 1 terms
  const auto terms = add(dims.frames, 1);
  const auto agg = mul(mul(mul(2, p), terms), cv);

  CostReport r;
  r.mechanism = Mechanism::pca;
  r.dims = dims;
  r.analytic_multiplies = add(mul(dims.frames, per_frame), agg);
  const auto frame_exps = mul(add(it, 2), pn);
  r.analytic_exps = add(mul(dims.frames, frame_exps), mul(p, terms));
  const auto mass_adds = mul(dims.frames, mul(add(it, 1), pn));
  r.analytic_adds = add(add(r.analytic_multiplies, mul(2, r.analytic_exps)), mass_adds);
  r.peak_elements = add(pn, mul(mul(dims.frames, dims.n_protos), add(d, cv)));
  return r;
}

CostReport mhsa_cost(const CostDims& dims) {
  using checked::add;
  using checked::mul;
  dims.validate();
  require(dims.key_dim % dims.heads == 0, Errc::invalid_argument, "mhsa: key_dim must be divisible by heads");
  const auto tokens = mul(dims.pixels(), dims.frames);
  const auto d = dims.key_dim;
  const auto sq = mul(tokens, tokens);
  CostReport r;
  r.mechanism = Mechanism::mhsa;
  r.dims = dims;
  // Q, K, V and output projections; per head tokens^2 * (D / heads) for scores and again for mixing
  r.analytic_multiplies = add(mul(mul(4, tokens), mul(d, d)), mul(mul(2, sq), d));
  r.analytic_exps = mul(dims.heads, sq);
  r.analytic_adds = add(r.analytic_multiplies, mul(2, r.analytic_exps));
  r.peak_elements = add(mul(dims.heads, sq), mul(mul(3, tokens), d));
  return r;
}

CostReport analytic_cost(Mechanism mechanism, const CostDims& dims) {
  switch (mechanism) {
    case Mechanism::pca: return pca_cost(dims);
    case Mechanism::nonlocal: return nonlocal_cost(dims);
    case Mechanism::mhsa: return mhsa_cost(dims);
  }
  fail(Errc::invalid_argument, "unknown mechanism");
}

namespace {

using CMat = Mat<Counted>;

CMat random_counted(std::size_t rows, std::size_t cols, RngStream& rng) {
  CMat m(rows, cols);
  for (auto& v : m.data()) v = Counted(rng.uniform(-1.0, 1.0));
  return m;
}

Matrix plain(const CMat& m) {
  Matrix out(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.data().size(); ++i) out.data()[i] = m.data()[i].value();
  return out;
}

CMat counted(const Matrix& m) {
  CMat out(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.data().size(); ++i) out.data()[i] = Counted(m.data()[i]);
  return out;
}

constexpr double kBenchSigma2 = 0.5;

OpCounts measure_pca(const CostDims& dims, std::uint64_t seed) {
  const std::size_t p = dims.pixels();
  require(dims.n_protos <= p, Errc::invalid_argument, "instrumented pca needs n_protos <= H*W");
  RngStream rng(seed);
  std::vector<CMat> keys, values;
  for (std::uint64_t t = 0; t < dims.frames; ++t) {
    keys.push_back(random_counted(p, dims.key_dim, rng));
    values.push_back(random_counted(p, dims.value_dim, rng));
  }
  const CMat query = random_counted(p, dims.key_dim, rng);
  const CMat current = random_counted(p, dims.value_dim, rng);
  std::vector<CMat> init;
  for (std::uint64_t t = 0; t < dims.frames; ++t) {
    EmConfig cfg;
    cfg.n_protos = dims.n_protos;
    cfg.init = InitKind::subsample;
    cfg.seed = seed + t;
    init.push_back(counted(initial_means(plain(keys[t]), cfg)));
  }

  CountingScope scope;
  std::vector<CMat> recons;
  for (std::uint64_t t = 0; t < dims.frames; ++t) {
    auto run = kernels::run_em<Counted>(keys[t], init[t], kBenchSigma2, dims.em_iters);
    const auto mass = kernels::column_mass(run.post);
    const auto vprotos = kernels::weighted_sums<Counted>(run.post, values[t], &mass);
    recons.push_back(kernels::attend<Counted>(query, run.means, vprotos, kBenchSigma2));
  }
  std::vector<const CMat*> ptrs;
  for (const auto& r : recons) ptrs.push_back(&r);
  CMat fused, weights;
  kernels::aggregate<Counted>(ptrs, current, fused, weights);
  return scope.counts();
}

OpCounts measure_nonlocal(const CostDims& dims, std::uint64_t seed) {
  const std::size_t p = dims.pixels();
  RngStream rng(seed);
  const CMat query = random_counted(p, dims.key_dim, rng);
  std::vector<CMat> keys, values;
  for (std::uint64_t t = 0; t < dims.frames; ++t) {
    keys.push_back(random_counted(p, dims.key_dim, rng));
    values.push_back(random_counted(p, dims.value_dim, rng));
  }
  std::vector<const CMat*> kp, vp;
  for (std::uint64_t t = 0; t < dims.frames; ++t) {
    kp.push_back(&keys[t]);
    vp.push_back(&values[t]);
  }
  CountingScope scope;
  kernels::nonlocal<Counted>(query, kp, vp, kernels::KernelKind::dot, kBenchSigma2);
  return scope.counts();
}

}  // namespace

CostReport instrumented_cost(Mechanism mechanism, const CostDims& dims, std::uint64_t seed) {
  require(mechanism != Mechanism::mhsa, Errc::unsupported, "mhsa has no instrumented execution (analytic only)");
  auto report = analytic_cost(mechanism, dims);
  const auto counts = mechanism == Mechanism::pca ? measure_pca(dims, seed) : measure_nonlocal(dims, seed);
  report.measured_multiplies = counts.multiplies;
  report.measured_exps = counts.exps;
  return report;
}

BenchResult run_suite(const BenchConfig& config) {
  require(config.heights.size() == config.widths.size(), Errc::invalid_argument,
          "bench heights and widths must have the same length");
  if (config.instrumented) {
    for (auto m : config.mechanisms)
      require(m != Mechanism::mhsa, Errc::unsupported, "instrumented mhsa is unsupported (analytic only)");
  }
  BenchResult result;
  for (auto m : config.mechanisms) {
    for (std::size_t r = 0; r < config.heights.size(); ++r) {
      for (auto t : config.frames) {
        CostDims dims{config.heights[r], config.widths[r], t,           config.key_dim,
                      config.value_dim,  config.n_protos,  config.em_iters, config.heads};
        result.rows.push_back(config.instrumented ? instrumented_cost(m, dims, config.seed) : analytic_cost(m, dims));
      }
    }
  }
  result.csv = cost_csv(result.rows);
  result.svg = cost_svg(result.rows);
  return result;
}

std::string cost_csv_header() {
  return "mechanism,H,W,T,D,C_v,N,em_iters,heads,analytic_multiplies,analytic_adds,analytic_exps,"
         "measured_multiplies,peak_elements\n";
}

std::string cost_csv(const std::vector<CostReport>& rows) {
  std::ostringstream os;
  os << cost_csv_header();
  for (const auto& r : rows) {
    const auto& d = r.dims;
    os << to_string(r.mechanism) << ',' << d.height << ',' << d.width << ',' << d.frames << ',' << d.key_dim << ','
       << d.value_dim << ',' << d.n_protos << ',' << d.em_iters << ',' << d.heads << ',' << r.analytic_multiplies
       << ',' << r.analytic_adds << ',' << r.analytic_exps << ',';
    if (r.measured_multiplies) os << *r.measured_multiplies;
    os << ',' << r.peak_elements << '\n';
  }
  return os.str();
}

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

}  // namespace

std::string cost_svg(const std::vector<CostReport>& rows) {
  constexpr double kW = 720, kH = 440, kLeft = 80, kRight = 200, kTop = 30, kBottom = 50;
  const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};

  // series keyed by first appearance
  std::vector<std::string> order;
  std::map<std::string, std::vector<std::pair<double, double>>> series;
  double tmin = 0, tmax = 1, ymin = 0, ymax = 1;
  bool first = true;
  for (const auto& r : rows) {
    const std::string name = std::string(to_string(r.mechanism)) + " " + std::to_string(r.dims.height) + "x" +
                             std::to_string(r.dims.width);
    if (!series.count(name)) order.push_back(name);
    const double t = static_cast<double>(r.dims.frames);
    const double y = std::log10(std::max<double>(1.0, static_cast<double>(r.analytic_multiplies)));
    series[name].emplace_back(t, y);
    if (first) {
      tmin = tmax = t;
      ymin = ymax = y;
      first = false;
    }
    tmin = std::min(tmin, t);
    tmax = std::max(tmax, t);
    ymin = std::min(ymin, y);
    ymax = std::max(ymax, y);
  }
  ymin = std::floor(ymin);
  ymax = std::max(ymin + 1.0, std::ceil(ymax));
  if (tmax == tmin) tmax = tmin + 1.0;

  const double pw = kW - kLeft - kRight, ph = kH - kTop - kBottom;
  auto sx = [&](double t) { return kLeft + (t - tmin) / (tmax - tmin) * pw; };
  auto sy = [&](double y) { return kTop + (1.0 - (y - ymin) / (ymax - ymin)) * ph; };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH << "\" viewBox=\"0 0 " << kW
     << ' ' << kH << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << fmt(kLeft) << "\" y=\"18\" font-family=\"sans-serif\" font-size=\"14\">"
     << "Multiplies per read vs memory length T (log scale)</text>\n";
  os << "<line x1=\"" << fmt(kLeft) << "\" y1=\"" << fmt(kTop + ph) << "\" x2=\"" << fmt(kLeft + pw) << "\" y2=\""
     << fmt(kTop + ph) << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << fmt(kLeft) << "\" y1=\"" << fmt(kTop) << "\" x2=\"" << fmt(kLeft) << "\" y2=\""
     << fmt(kTop + ph) << "\" stroke=\"black\"/>\n";
  for (double e = ymin; e <= ymax + 1e-9; e += 1.0) {
    os << "<text x=\"" << fmt(kLeft - 8) << "\" y=\"" << fmt(sy(e) + 4) << "\" text-anchor=\"end\" "
       << "font-family=\"sans-serif\" font-size=\"11\">1e" << static_cast<int>(e) << "</text>\n";
    os << "<line x1=\"" << fmt(kLeft) << "\" y1=\"" << fmt(sy(e)) << "\" x2=\"" << fmt(kLeft + pw) << "\" y2=\""
       << fmt(sy(e)) << "\" stroke=\"#dddddd\"/>\n";
  }
  std::vector<double> ticks;
  for (const auto& r : rows) ticks.push_back(static_cast<double>(r.dims.frames));
  std::sort(ticks.begin(), ticks.end());
  ticks.erase(std::unique(ticks.begin(), ticks.end()), ticks.end());
  for (double t : ticks) {
    os << "<text x=\"" << fmt(sx(t)) << "\" y=\"" << fmt(kTop + ph + 18) << "\" text-anchor=\"middle\" "
       << "font-family=\"sans-serif\" font-size=\"11\">" << static_cast<long long>(t) << "</text>\n";
  }
  os << "<text x=\"" << fmt(kLeft + pw / 2) << "\" y=\"" << fmt(kH - 12)
     << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">T</text>\n";

  for (std::size_t s = 0; s < order.size(); ++s) {
    const char* color = palette[s % 8];
    auto pts = series[order[s]];
    std::sort(pts.begin(), pts.end());
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < pts.size(); ++i) os << (i ? " " : "") << fmt(sx(pts[i].first)) << ',' << fmt(sy(pts[i].second));
    os << "\"/>\n";
    for (const auto& [t, y] : pts)
      os << "<circle cx=\"" << fmt(sx(t)) << "\" cy=\"" << fmt(sy(y)) << "\" r=\"3\" fill=\"" << color << "\"/>\n";
    const double ly = kTop + 10 + 18.0 * static_cast<double>(s);
    os << "<rect x=\"" << fmt(kLeft + pw + 16) << "\" y=\"" << fmt(ly - 8) << "\" width=\"12\" height=\"4\" fill=\""
       << color << "\"/>\n";
    os << "<text x=\"" << fmt(kLeft + pw + 34) << "\" y=\"" << fmt(ly) << "\" font-family=\"sans-serif\" "
       << "font-size=\"11\">" << order[s] << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace pcan
