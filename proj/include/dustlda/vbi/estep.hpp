// Apache License, Version 2.0, refer to LICENSE.txt

#ifndef DUSTLDA_VBI_ESTEP_HPP
#define DUSTLDA_VBI_ESTEP_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "dustlda/error.hpp"
#include "dustlda/matrix.hpp"
#include "dustlda/model.hpp"
#include "dustlda/numerics/special.hpp"
#include "dustlda/vbi/config.hpp"
#include "dustlda/vbi/elbo.hpp"

namespace dustlda {

/// Multiplier on the count increments of gamma and lambda: 1, or 1/N under
/// the pseudo-code variant.
inline double increment_scale(const SampleCounts& counts, const FitConfig& config) {
  return config.inverse_count_scaling ? 1.0 / static_cast<double>(counts.total()) : 1.0;
}

/// Responsibilities per type from E[log B] and the current gamma, then gamma
/// from the new responsibilities.
inline void update_phi_gamma(const SampleCounts& counts, std::span<const double> alpha_row,
                             const Matrix& elog_beta, VariationalState& state, double scale) {
  const std::size_t M = alpha_row.size();
  const std::size_t T = counts.counts.size();
  std::vector<double> psi_gamma(M);
  for (std::size_t m = 0; m < M; ++m) psi_gamma[m] = numerics::digamma(state.gamma[m]);
  std::vector<double> lp(M);
  for (std::size_t t = 0; t < T; ++t) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t m = 0; m < M; ++m) {
      lp[m] = elog_beta(m, t) + psi_gamma[m];
      mx = std::max(mx, lp[m]);
    }
    double z = 0.0;
    for (std::size_t m = 0; m < M; ++m) {
      lp[m] = std::exp(lp[m] - mx);
      z += lp[m];
    }
    for (std::size_t m = 0; m < M; ++m) state.phi(t, m) = lp[m] / z;
  }
  for (std::size_t m = 0; m < M; ++m) {
    double acc = 0.0;
    for (std::size_t t = 0; t < T; ++t) acc += counts.counts[t] * state.phi(t, m);
    state.gamma[m] = alpha_row[m] + scale * acc;
  }
}

/// lambda = H + scale * (counts weighted responsibilities), per sample.
inline void update_lambda(const SampleCounts& counts, const Matrix& H, VariationalState& state,
                          double scale) {
  for (std::size_t m = 0; m < H.rows(); ++m) {
    for (std::size_t t = 0; t < H.cols(); ++t) {
      state.lambda(m, t) = H(m, t) + scale * counts.counts[t] * state.phi(t, m);
    }
  }
}

inline bool relative_change_below(double previous, double current, double tol) {
  return std::fabs(current - previous) < tol * std::max(1.0, std::fabs(current));
}

/// Coordinate ascent on one sample's (phi, gamma, lambda) until the sample's
/// bound stops moving. Optionally records the bound before the first update
/// and after every sweep.
inline VariationalState estep_sample(const SampleCounts& counts, std::span<const double> alpha_row,
                                     const Matrix& H, VariationalState state,
                                     const FitConfig& config,
                                     std::vector<double>* elbo_history = nullptr) {
  const std::size_t M = H.rows();
  const std::size_t T = H.cols();
  if (alpha_row.size() != M || counts.counts.size() != T || state.gamma.size() != M ||
      state.phi.rows() != T || state.phi.cols() != M || state.lambda.rows() != M ||
      state.lambda.cols() != T) {
    throw ContractViolation("estep_sample: dimensions of counts, alpha, H and state disagree");
  }
  const double scale = increment_scale(counts, config);
  state.iterations = 0;

  if (M == 1) {
    std::fill(state.phi.data().begin(), state.phi.data().end(), 1.0);
    state.gamma[0] = alpha_row[0] + scale * static_cast<double>(counts.total());
    update_lambda(counts, H, state, scale);
    state.iterations = 1;
    state.elbo = elbo_sample(counts, alpha_row, H, state);
    if (elbo_history) elbo_history->push_back(state.elbo);
    return state;
  }

  double previous = elbo_sample(counts, alpha_row, H, state);
  if (elbo_history) elbo_history->push_back(previous);
  double current = previous;
  for (std::size_t it = 1; it <= config.estep_max_iters; ++it) {
    const Matrix elog_beta = expected_log_rows(state.lambda);
    update_phi_gamma(counts, alpha_row, elog_beta, state, scale);
    update_lambda(counts, H, state, scale);
    state.iterations = it;
    current = elbo_sample(counts, alpha_row, H, state);
    if (elbo_history) elbo_history->push_back(current);
    if (relative_change_below(previous, current, config.estep_tol)) break;
    previous = current;
  }
  state.elbo = current;
  return state;
}

}  // namespace dustlda

#endif  // DUSTLDA_VBI_ESTEP_HPP
