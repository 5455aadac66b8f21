#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "gedlab/autograd.hpp"

namespace gedlab {

struct NamedParam {
  std::string name;
  Tensor* tensor = nullptr;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t entries_checked = 0;
  bool passed = false;
};

// Builds a scalar loss in the supplied graph from the current parameter values.
using LossBuilder = std::function<Var(Graph&)>;

// Compares analytic gradients against central differences
// (f(θ+ε) - f(θ-ε)) / 2ε for every entry of every listed parameter.
// Relative error is |a - n| / max(|a|, |n|, 1e-8). Existing grads on the
// parameters are overwritten. Throws if two baseline evaluations of the loss
// disagree (the builder must be deterministic, so dropout has to be off).
GradCheckReport finite_diff_check(const LossBuilder& loss, const std::vector<NamedParam>& params,
                                  double eps, double tol);

}  // namespace gedlab
