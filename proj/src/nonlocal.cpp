#include "pcan/nonlocal.hpp"

#include <cmath>
#include <string>

#include "pcan/detail/kernels.hpp"

namespace pcan {

void KernelSpec::validate() const {
  if (kind == Kind::gaussian)
    require(sigma2 > 0.0 && std::isfinite(sigma2), Errc::invalid_argument, "gaussian kernel needs sigma2 > 0");
}

FeatureMap nonlocal_attend(const FeatureMap& query_keys, const std::vector<FeatureMap>& memory_keys,
                           const std::vector<FeatureMap>& memory_values, const KernelSpec& kernel) {
  kernel.validate();
  require(!memory_keys.empty(), Errc::invalid_argument, "nonlocal_attend: empty memory");
  require(memory_keys.size() == memory_values.size(), Errc::dimension_mismatch,
          "nonlocal_attend: key and value frame counts differ");
  std::vector<const Matrix*> keys, values;
  for (std::size_t t = 0; t < memory_keys.size(); ++t) {
    const auto& k = memory_keys[t];
    const auto& v = memory_values[t];
    require(k.same_grid(memory_keys.front()) && v.same_grid(memory_keys.front()), Errc::dimension_mismatch,
            "nonlocal_attend: memory frames must share spatial dims");
    require(k.channels() == query_keys.channels(), Errc::dimension_mismatch,
            "nonlocal_attend: memory key channels differ from query key channels");
    require(v.channels() == memory_values.front().channels(), Errc::dimension_mismatch,
            "nonlocal_attend: memory value channels differ between frames");
    keys.push_back(&k.pixels());
    values.push_back(&v.pixels());
  }
  const auto kind = kernel.kind == KernelSpec::Kind::dot ? kernels::KernelKind::dot : kernels::KernelKind::gaussian;
  auto y = kernels::nonlocal<double>(query_keys.pixels(), keys, values, kind, kernel.sigma2);
  return FeatureMap(query_keys.height(), query_keys.width(), std::move(y));
}

CostReport nonlocal_cost(const CostDims& dims) {
  using checked::add;
  using checked::mul;
  dims.validate();
  const auto p = dims.pixels();
  const auto positions = mul(p, dims.frames);
  const auto pairs = mul(p, positions);
  CostReport r;
  r.mechanism = Mechanism::nonlocal;
  r.dims = dims;
  // logits (D per pair) + weighted value sum (C_v per pair)
  r.analytic_multiplies = mul(pairs, add(dims.key_dim, dims.value_dim));
  // one accumulation per multiply, plus max subtraction and the softmax sum per pair
  r.analytic_adds = add(r.analytic_multiplies, mul(pairs, 2));
  r.analytic_exps = pairs;
  // attention matrix plus the raw memory keys and values it reads
  r.peak_elements = add(pairs, mul(positions, add(dims.key_dim, dims.value_dim)));
  return r;
}

}  // namespace pcan
