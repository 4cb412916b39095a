#include "lipsync/adam.hpp"

#include <cmath>

#include "lipsync/errors.hpp"

namespace lipsync {

void Adam::step(ParameterSet& params, const GradStore& grads) {
  if (params.frozen) throw ContractViolation("cannot step a frozen ParameterSet");
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (auto& [name, p] : params.arrays) {
    if (!grads.contains(name)) continue;
    const Tensor& g = grads.at(name);
    g.require_shape(p.shape(), "gradient");
    auto mit = m_.find(name);
    if (mit == m_.end()) {
      mit = m_.emplace(name, Tensor::zeros(p.shape())).first;
      v_.emplace(name, Tensor::zeros(p.shape()));
    }
    Tensor& m = mit->second;
    Tensor& v = v_.at(name);
    for (std::int64_t i = 0; i < p.numel(); ++i) {
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
    }
  }
  ++params.step_count;
}

}  // namespace lipsync
