#include "gedlab/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace gedlab {

namespace {

double evaluate(const LossBuilder& loss) {
  Graph g(false);
  return loss(g).item();
}

}  // namespace

GradCheckReport finite_diff_check(const LossBuilder& loss, const std::vector<NamedParam>& params,
                                  double eps, double tol) {
  if (!(eps >= 1e-7 && eps <= 1e-3)) {
    throw std::invalid_argument("finite_diff_check: eps must lie in [1e-7, 1e-3]");
  }
  const double base_a = evaluate(loss);
  const double base_b = evaluate(loss);
  if (base_a != base_b) {
    throw std::runtime_error("finite_diff_check: loss is not deterministic (" +
                             std::to_string(base_a) + " vs " + std::to_string(base_b) +
                             "); disable dropout");
  }

  for (const NamedParam& p : params) {
    p.tensor->requires_grad = true;
    p.tensor->zero_grad();
  }
  {
    Graph g;
    g.backward(loss(g));
  }

  GradCheckReport report;
  for (const NamedParam& p : params) {
    Tensor& t = *p.tensor;
    for (std::size_t i = 0; i < t.numel(); ++i) {
      const double saved = t.data[i];
      t.data[i] = saved + eps;
      const double up = evaluate(loss);
      t.data[i] = saved - eps;
      const double down = evaluate(loss);
      t.data[i] = saved;

      const double numeric = (up - down) / (2.0 * eps);
      const double analytic = t.grad[i];
      const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
      const double rel = std::abs(analytic - numeric) / denom;
      ++report.entries_checked;
      if (rel > report.max_rel_error || report.worst_param.empty()) {
        report.max_rel_error = std::max(rel, report.max_rel_error);
        if (rel >= report.max_rel_error) {
          report.worst_param = p.name;
          report.worst_index = i;
          report.worst_analytic = analytic;
          report.worst_numeric = numeric;
        }
      }
    }
  }
  report.passed = report.max_rel_error < tol;
  return report;
}

}  // namespace gedlab
