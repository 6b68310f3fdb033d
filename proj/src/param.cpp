#include "ickan/param.hpp"

#include <cmath>

namespace ickan {

bool Adam::step(ParameterStore& store) {
  for (const auto& p : store.all()) {
    for (double a : p.adjoint) {
      if (!std::isfinite(a)) {
        ++skipped_;
        store.zero_adjoints();
        return false;
      }
    }
  }
  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (auto& p : store.all()) {
    if (p.m.size() != p.value.size()) {
      p.m.assign(p.value.size(), 0.0);
      p.v.assign(p.value.size(), 0.0);
    }
    for (size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.adjoint[i];
      p.m[i] = cfg_.beta1 * p.m[i] + (1.0 - cfg_.beta1) * g;
      p.v[i] = cfg_.beta2 * p.v[i] + (1.0 - cfg_.beta2) * g * g;
      const double mhat = p.m[i] / c1;
      const double vhat = p.v[i] / c2;
      p.value[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
  store.zero_adjoints();
  return true;
}

}  // namespace ickan
