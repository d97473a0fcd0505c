// Apache License, Version 2.0, refer to LICENSE.txt

#ifndef DUSTLDA_OPTIM_LBFGSB_HPP
#define DUSTLDA_OPTIM_LBFGSB_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <deque>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "dustlda/error.hpp"

namespace dustlda::optim {

struct BoxBounds {
  std::vector<double> lower;
  std::vector<double> upper;

  static BoxBounds uniform(std::size_t n, double lo = 1e-6, double hi = 1e6) {
    return {std::vector<double>(n, lo), std::vector<double>(n, hi)};
  }

  std::size_t size() const noexcept { return lower.size(); }

  void validate() const {
    if (lower.size() != upper.size()) throw ContractViolation("BoxBounds: size mismatch");
    for (std::size_t i = 0; i < lower.size(); ++i) {
      if (!(lower[i] < upper[i])) throw DomainError("BoxBounds: lower must be below upper");
    }
  }
};

struct OptimizerConfig {
  std::size_t memory = 10;
  double grad_tol = 1e-6;
  std::size_t max_iters = 200;
  double sufficient_decrease = 1e-4;
  double curvature = 0.9;
  std::size_t max_line_search = 60;

  void validate() const {
    if (memory < 1) throw DomainError("OptimizerConfig: memory must be at least 1");
    if (!(grad_tol > 0.0)) throw DomainError("OptimizerConfig: grad_tol must be positive");
    if (max_iters < 1) throw DomainError("OptimizerConfig: max_iters must be at least 1");
    if (!(sufficient_decrease > 0.0 && sufficient_decrease < curvature && curvature < 1.0)) {
      throw DomainError("OptimizerConfig: need 0 < sufficient_decrease < curvature < 1");
    }
  }
};

struct OptimizeResult {
  std::vector<double> x;
  double value = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
  double projected_grad_norm = 0.0;
};

/// Objective callback: returns f(x) and writes ∇f(x) into grad.
using Objective = std::function<double(std::span<const double> x, std::span<double> grad)>;

namespace detail {

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

/// Infinity norm of the projected ascent gradient: components pushing a
/// coordinate through an active bound do not count.
inline double projected_grad_norm(std::span<const double> x, std::span<const double> g,
                                  const BoxBounds& b) {
  double n = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double gi = g[i];
    if (x[i] <= b.lower[i] && gi < 0.0) gi = 0.0;
    if (x[i] >= b.upper[i] && gi > 0.0) gi = 0.0;
    n = std::max(n, std::fabs(gi));
  }
  return n;
}

}  // namespace detail

/// Maximises f over a box with a projected limited-memory BFGS method.
///
/// Variables sitting at a bound with the gradient pointing outward are held
/// fixed for the iteration; the two-loop recursion acts on the rest. When the
/// quasi-Newton direction is not an ascent direction the step falls back to
/// the projected gradient. Steps are chosen by backtracking along the
/// projected path until the Armijo condition holds. The objective is never
/// evaluated outside the box.
inline OptimizeResult maximize_box(const Objective& f, std::span<const double> x0,
                                   const BoxBounds& bounds, const OptimizerConfig& cfg = {}) {
  cfg.validate();
  bounds.validate();
  const std::size_t n = x0.size();
  if (bounds.size() != n) throw ContractViolation("maximize_box: bounds size mismatch");
  for (std::size_t i = 0; i < n; ++i) {
    if (!(x0[i] >= bounds.lower[i] && x0[i] <= bounds.upper[i])) {
      throw DomainError("maximize_box: x0[" + std::to_string(i) + "] outside bounds");
    }
  }

  OptimizeResult res;
  res.x.assign(x0.begin(), x0.end());
  std::vector<double> g(n);
  res.value = f(res.x, g);
  const auto finite = [](std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [](double z) { return std::isfinite(z); });
  };
  if (!std::isfinite(res.value) || !finite(g)) {
    throw NumericalFailure("objective is not finite at the starting point", 0, "x0");
  }

  // History of (s, y) for the minimisation of -f: y = -(g_new - g_old).
  std::deque<std::vector<double>> s_hist;
  std::deque<std::vector<double>> y_hist;
  std::deque<double> rho_hist;

  std::vector<double> d(n), q(n), x_trial(n), g_trial(n);
  std::vector<char> free_var(n);
  std::vector<double> alpha_buf;

  for (std::size_t iter = 0;; ++iter) {
    res.projected_grad_norm = detail::projected_grad_norm(res.x, g, bounds);
    if (res.projected_grad_norm < cfg.grad_tol) {
      res.converged = true;
      res.iterations = iter;
      return res;
    }
    if (iter >= cfg.max_iters) {
      res.iterations = iter;
      return res;
    }

    for (std::size_t i = 0; i < n; ++i) {
      const bool pinned_low = res.x[i] <= bounds.lower[i] && g[i] < 0.0;
      const bool pinned_high = res.x[i] >= bounds.upper[i] && g[i] > 0.0;
      free_var[i] = !(pinned_low || pinned_high);
    }

    // Two-loop recursion on the free subspace, in minimisation form
    // (gradient -g); the resulting d is an ascent direction for f.
    for (std::size_t i = 0; i < n; ++i) q[i] = free_var[i] ? g[i] : 0.0;
    const std::size_t k = s_hist.size();
    alpha_buf.assign(k, 0.0);
    for (std::size_t j = k; j-- > 0;) {
      double sq = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (free_var[i]) sq += s_hist[j][i] * q[i];
      }
      alpha_buf[j] = rho_hist[j] * sq;
      for (std::size_t i = 0; i < n; ++i) {
        if (free_var[i]) q[i] -= alpha_buf[j] * y_hist[j][i];
      }
    }
    if (k > 0) {
      const double scale = 1.0 / (rho_hist.back() * detail::dot(y_hist.back(), y_hist.back()));
      for (double& v : q) v *= scale;
    } else {
      const double gn = std::sqrt(detail::dot(q, q));
      const double scale = 1.0 / std::max(1.0, gn);
      for (double& v : q) v *= scale;
    }
    for (std::size_t j = 0; j < k; ++j) {
      double yq = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (free_var[i]) yq += y_hist[j][i] * q[i];
      }
      const double beta = rho_hist[j] * yq;
      for (std::size_t i = 0; i < n; ++i) {
        if (free_var[i]) q[i] += (alpha_buf[j] - beta) * s_hist[j][i];
      }
    }
    for (std::size_t i = 0; i < n; ++i) d[i] = free_var[i] ? q[i] : 0.0;

    bool quasi_newton = k > 0;
    if (!(detail::dot(d, g) > 0.0) || !finite(d)) {
      const double gn = std::sqrt(detail::dot(g, g));
      for (std::size_t i = 0; i < n; ++i) d[i] = free_var[i] ? g[i] / std::max(1.0, gn) : 0.0;
      quasi_newton = false;
    }

    // Backtracking Armijo search along the projected path. A full step that
    // still leaves the slope above the curvature fraction is expanded.
    double f_new = res.value;
    const auto evaluate = [&](double t, std::vector<double>& xt, std::vector<double>& gt,
                              double& ft) -> bool {
      double predicted = 0.0;
      bool moved = false;
      for (std::size_t i = 0; i < n; ++i) {
        xt[i] = std::clamp(res.x[i] + t * d[i], bounds.lower[i], bounds.upper[i]);
        predicted += g[i] * (xt[i] - res.x[i]);
        moved = moved || xt[i] != res.x[i];
      }
      if (!moved || !(predicted > 0.0)) return false;
      ft = f(xt, gt);
      return std::isfinite(ft) && finite(gt) &&
             ft >= res.value + cfg.sufficient_decrease * predicted;
    };
    const auto try_direction = [&]() -> bool {
      double t = 1.0;
      for (std::size_t ls = 0; ls < cfg.max_line_search; ++ls, t *= 0.5) {
        if (!evaluate(t, x_trial, g_trial, f_new)) continue;
        if (ls == 0) {
          const double slope0 = detail::dot(g, d);
          std::vector<double> x_more(n), g_more(n);
          for (int e = 0; e < 30 && detail::dot(g_trial, d) > cfg.curvature * slope0; ++e) {
            double f_more = 0.0;
            t *= 2.0;
            if (!evaluate(t, x_more, g_more, f_more) || !(f_more > f_new)) break;
            x_trial.swap(x_more);
            g_trial.swap(g_more);
            f_new = f_more;
          }
        }
        return true;
      }
      return false;
    };

    bool ok = try_direction();
    if (!ok && quasi_newton) {
      const double gn = std::sqrt(detail::dot(g, g));
      for (std::size_t i = 0; i < n; ++i) d[i] = free_var[i] ? g[i] / std::max(1.0, gn) : 0.0;
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
      ok = try_direction();
    }
    if (!ok) {
      res.iterations = iter;
      return res;  // best so far, not converged
    }

    std::vector<double> s(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = x_trial[i] - res.x[i];
      y[i] = -(g_trial[i] - g[i]);
    }
    const double sy = detail::dot(s, y);
    if (sy > 1e-12 * detail::dot(y, y)) {
      s_hist.push_back(std::move(s));
      y_hist.push_back(std::move(y));
      rho_hist.push_back(1.0 / sy);
      if (s_hist.size() > cfg.memory) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
    }
    const double f_old = res.value;
    res.x = x_trial;
    g = g_trial;
    res.value = f_new;
    if (f_new - f_old <= 1e-15 * std::max(1.0, std::fabs(f_new))) {
      // No measurable progress: stationary up to rounding.
      res.projected_grad_norm = detail::projected_grad_norm(res.x, g, bounds);
      res.iterations = iter + 1;
      res.converged = res.projected_grad_norm < cfg.grad_tol;
      return res;
    }
  }
}

}  // namespace dustlda::optim

#endif  // DUSTLDA_OPTIM_LBFGSB_HPP
