#pragma once

#include <cstddef>
#include <functional>
#include <vector>

namespace charseg {

struct LbfgsOptions {
  std::size_t memory = 5;
  std::size_t max_iterations = 200;
  /// Stop once |f_prev - f| / max(|f_prev|, 1) falls below this.
  double relative_tol = 1e-6;
  std::size_t max_backtracks = 40;
  double armijo = 1e-4;
};

struct LbfgsResult {
  double value = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
  /// Objective after each accepted step, starting with the initial point.
  std::vector<double> trace;
};

/// Fills `grad` and returns f(x).
using ObjectiveFn = std::function<double(const std::vector<double>& x, std::vector<double>& grad)>;

/// Minimizes `f` from `x` with limited-memory BFGS and a backtracking
/// (Armijo) line search. Accepted steps never increase f. Throws
/// DivergedError on a non-finite objective.
LbfgsResult minimize_lbfgs(const ObjectiveFn& f, std::vector<double>& x, const LbfgsOptions& options);

}  // namespace charseg
