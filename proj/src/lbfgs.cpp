#include "charseg/lbfgs.hpp"

#include <cmath>
#include <deque>
#include <numeric>
#include <string>

#include "charseg/error.hpp"

namespace charseg {

namespace {

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

void check_finite(double f, std::size_t iter) {
  if (!std::isfinite(f)) {
    throw DivergedError("optimizer objective became non-finite in iteration " + std::to_string(iter));
  }
}

}  // namespace

LbfgsResult minimize_lbfgs(const ObjectiveFn& f, std::vector<double>& x, const LbfgsOptions& options) {
  const std::size_t n = x.size();
  std::vector<double> g(n), g_new(n), x_new(n), d(n);
  double fx = f(x, g);
  check_finite(fx, 0);

  LbfgsResult result;
  result.trace.push_back(fx);

  struct Pair {
    std::vector<double> s, y;
    double rho;
  };
  std::deque<Pair> history;
  std::vector<double> alpha(options.memory);

  for (std::size_t iter = 1; iter <= options.max_iterations; ++iter) {
    if (dot(g, g) == 0.0) {
      result.converged = true;
      break;
    }
    // Two-loop recursion: d = -H g.
    d = g;
    for (std::size_t i = history.size(); i-- > 0;) {
      alpha[i] = history[i].rho * dot(history[i].s, d);
      for (std::size_t k = 0; k < n; ++k) d[k] -= alpha[i] * history[i].y[k];
    }
    if (!history.empty()) {
      const auto& last = history.back();
      const double gamma = dot(last.s, last.y) / dot(last.y, last.y);
      for (double& v : d) v *= gamma;
    }
    for (std::size_t i = 0; i < history.size(); ++i) {
      const double beta = history[i].rho * dot(history[i].y, d);
      for (std::size_t k = 0; k < n; ++k) d[k] += (alpha[i] - beta) * history[i].s[k];
    }
    for (double& v : d) v = -v;

    double slope = dot(g, d);
    if (!(slope < 0.0)) {
      history.clear();
      for (std::size_t k = 0; k < n; ++k) d[k] = -g[k];
      slope = dot(g, d);
    }

    double step = history.empty() ? 1.0 / std::sqrt(dot(g, g)) : 1.0;
    double f_new = 0.0;
    bool accepted = false;
    for (std::size_t bt = 0; bt < options.max_backtracks; ++bt) {
      for (std::size_t k = 0; k < n; ++k) x_new[k] = x[k] + step * d[k];
      f_new = f(x_new, g_new);
      if (std::isfinite(f_new) && f_new <= fx + options.armijo * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      // No decrease along the search direction: treat as converged.
      result.converged = true;
      break;
    }
    check_finite(f_new, iter);

    Pair p{std::vector<double>(n), std::vector<double>(n), 0.0};
    for (std::size_t k = 0; k < n; ++k) {
      p.s[k] = x_new[k] - x[k];
      p.y[k] = g_new[k] - g[k];
    }
    const double sy = dot(p.s, p.y);
    if (sy > 1e-12) {
      p.rho = 1.0 / sy;
      history.push_back(std::move(p));
      if (history.size() > options.memory) history.pop_front();
    }

    const double change = std::abs(fx - f_new) / std::max(std::abs(fx), 1.0);
    x.swap(x_new);
    g.swap(g_new);
    fx = f_new;
    result.iterations = iter;
    result.trace.push_back(fx);
    if (change < options.relative_tol) {
      result.converged = true;
      break;
    }
  }
  result.value = fx;
  return result;
}

}  // namespace charseg
