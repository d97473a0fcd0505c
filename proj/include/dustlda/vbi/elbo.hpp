// Apache License, Version 2.0, refer to LICENSE.txt

#ifndef DUSTLDA_VBI_ELBO_HPP
#define DUSTLDA_VBI_ELBO_HPP

#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "dustlda/error.hpp"
#include "dustlda/matrix.hpp"
#include "dustlda/model.hpp"
#include "dustlda/numerics/special.hpp"

namespace dustlda {

/// The seven expectations making up the evidence lower bound, named after
/// the factor they come from.
struct ElboTerms {
  double log_p_x = 0.0;        // E[log p(X | Z, B)]
  double log_p_theta = 0.0;    // E[log p(Θ | A)]
  double log_p_z = 0.0;        // E[log p(Z | Θ)]
  double log_p_b = 0.0;        // E[log p(B | H)]
  double entropy_theta = 0.0;  // −E[log q(Θ)]
  double entropy_z = 0.0;      // −E[log q(Z)]
  double entropy_b = 0.0;      // −E[log q(B)]

  double total() const noexcept {
    return log_p_x + log_p_theta + log_p_z + log_p_b + entropy_theta + entropy_z + entropy_b;
  }

  ElboTerms& operator+=(const ElboTerms& o) noexcept {
    log_p_x += o.log_p_x;
    log_p_theta += o.log_p_theta;
    log_p_z += o.log_p_z;
    log_p_b += o.log_p_b;
    entropy_theta += o.entropy_theta;
    entropy_z += o.entropy_z;
    entropy_b += o.entropy_b;
    return *this;
  }
};

/// E_q[log x_i] = Ψ(p_i) − Ψ(Σ p) under Dirichlet(p).
inline void expected_log_dirichlet(std::span<const double> p, std::span<double> out) {
  const double psi_sum = numerics::digamma(std::accumulate(p.begin(), p.end(), 0.0));
  for (std::size_t i = 0; i < p.size(); ++i) out[i] = numerics::digamma(p[i]) - psi_sum;
}

inline std::vector<double> expected_log_dirichlet(std::span<const double> p) {
  std::vector<double> out(p.size());
  expected_log_dirichlet(p, out);
  return out;
}

/// Row-wise E_q[log β_mt] for a matrix of Dirichlet rows.
inline Matrix expected_log_rows(const Matrix& lambda) {
  Matrix out(lambda.rows(), lambda.cols());
  for (std::size_t m = 0; m < lambda.rows(); ++m) expected_log_dirichlet(lambda.row(m), out.row(m));
  return out;
}

/// lnΓ(Σ p) − Σ lnΓ(p_i): log normaliser of Dirichlet(p).
inline double dirichlet_log_norm(std::span<const double> p) {
  double sum = 0.0;
  double lg = 0.0;
  for (double v : p) {
    sum += v;
    lg += numerics::log_gamma(v);
  }
  return numerics::log_gamma(sum) - lg;
}

/// E_q[log Dir(x | prior)] given E_q[log x].
inline double dirichlet_expected_log_density(std::span<const double> prior,
                                             std::span<const double> elog) {
  double v = dirichlet_log_norm(prior);
  for (std::size_t i = 0; i < prior.size(); ++i) v += (prior[i] - 1.0) * elog[i];
  return v;
}

namespace detail {

inline void require_finite(double v, const char* term, std::size_t iteration) {
  if (!std::isfinite(v)) {
    throw NumericalFailure(std::string("ELBO term ") + term + " is not finite", iteration, term);
  }
}

}  // namespace detail

/// Terms that involve one sample's θ and Z, given E_q[log B] (M x T).
/// The profile terms are left at zero.
inline ElboTerms elbo_local_terms(const SampleCounts& counts, std::span<const double> alpha_row,
                                  const Matrix& elog_beta, const VariationalState& state) {
  const std::size_t M = alpha_row.size();
  const std::size_t T = counts.counts.size();
  std::vector<double> elog_theta = expected_log_dirichlet(state.gamma);
  ElboTerms e;
  for (std::size_t t = 0; t < T; ++t) {
    const double c = counts.counts[t];
    if (c == 0.0) continue;
    for (std::size_t m = 0; m < M; ++m) {
      const double phi = state.phi(t, m);
      if (phi <= 0.0) continue;
      e.log_p_x += c * phi * elog_beta(m, t);
      e.log_p_z += c * phi * elog_theta[m];
      e.entropy_z -= c * phi * std::log(phi);
    }
  }
  e.log_p_theta = dirichlet_expected_log_density(alpha_row, elog_theta);
  e.entropy_theta = -dirichlet_expected_log_density(state.gamma, elog_theta);
  return e;
}

/// E_q[log p(B | H)] and −E_q[log q(B)] for a variational matrix lambda.
inline ElboTerms elbo_profile_terms(const Matrix& H, const Matrix& lambda, const Matrix& elog_beta) {
  ElboTerms e;
  for (std::size_t m = 0; m < H.rows(); ++m) {
    e.log_p_b += dirichlet_expected_log_density(H.row(m), elog_beta.row(m));
    e.entropy_b -= dirichlet_expected_log_density(lambda.row(m), elog_beta.row(m));
  }
  return e;
}

inline void check_terms(const ElboTerms& e, std::size_t iteration) {
  detail::require_finite(e.log_p_x, "log_p_x", iteration);
  detail::require_finite(e.log_p_theta, "log_p_theta", iteration);
  detail::require_finite(e.log_p_z, "log_p_z", iteration);
  detail::require_finite(e.log_p_b, "log_p_b", iteration);
  detail::require_finite(e.entropy_theta, "entropy_theta", iteration);
  detail::require_finite(e.entropy_z, "entropy_z", iteration);
  detail::require_finite(e.entropy_b, "entropy_b", iteration);
}

/// All seven terms for one sample whose state carries its own lambda.
inline ElboTerms elbo_sample_terms(const SampleCounts& counts, std::span<const double> alpha_row,
                                   const Matrix& H, const VariationalState& state) {
  if (state.lambda.rows() != H.rows() || state.lambda.cols() != H.cols()) {
    throw ContractViolation("elbo_sample: state lambda does not match H");
  }
  const Matrix elog_beta = expected_log_rows(state.lambda);
  ElboTerms e = elbo_local_terms(counts, alpha_row, elog_beta, state);
  e += elbo_profile_terms(H, state.lambda, elog_beta);
  check_terms(e, state.iterations);
  return e;
}

inline double elbo_sample(const SampleCounts& counts, std::span<const double> alpha_row,
                          const Matrix& H, const VariationalState& state) {
  return elbo_sample_terms(counts, alpha_row, H, state).total();
}

}  // namespace dustlda

#endif  // DUSTLDA_VBI_ELBO_HPP
