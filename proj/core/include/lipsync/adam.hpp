#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "lipsync/params.hpp"

namespace lipsync {

/// Adaptive-moment optimizer with bias correction. One instance owns the
/// moment state for one ParameterSet; step() updates every parameter that has
/// an accumulated gradient and leaves the rest untouched.
class Adam {
 public:
  Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  /// Throws ContractViolation when params.frozen is set.
  void step(ParameterSet& params, const GradStore& grads);

  std::int64_t steps_taken() const { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  std::int64_t t_ = 0;
  std::map<std::string, Tensor> m_, v_;
};

}  // namespace lipsync
