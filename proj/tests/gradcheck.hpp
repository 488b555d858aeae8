#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include <Eigen/Dense>

namespace ntulm::fixtures {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
};

// Central differences over every entry of `params`, compared against the
// matching entries of `analytic`. Relative error is |a - n| / max(|a|, |n|,
// floor). Some gradients are exactly zero (attention key biases cancel in the
// softmax); their difference quotient is rounding noise of order
// eps * |loss| / step ~ 1e-9, which the floor keeps below tolerance.
inline GradCheckResult central_difference_check(const std::vector<Eigen::MatrixXd*>& params,
                                                const std::vector<const Eigen::MatrixXd*>& analytic,
                                                const std::function<double()>& loss, double step = 1e-6,
                                                double floor = 1e-5) {
  GradCheckResult res;
  for (std::size_t t = 0; t < params.size(); ++t) {
    auto& m = *params[t];
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      const double saved = m.data()[i];
      m.data()[i] = saved + step;
      const double up = loss();
      m.data()[i] = saved - step;
      const double down = loss();
      m.data()[i] = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double a = analytic[t]->data()[i];
      const double denom = std::max({std::abs(a), std::abs(numeric), floor});
      res.max_rel_error = std::max(res.max_rel_error, std::abs(a - numeric) / denom);
      ++res.checked;
    }
  }
  return res;
}

}  // namespace ntulm::fixtures
