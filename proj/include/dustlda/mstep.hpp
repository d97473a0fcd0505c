// Apache License, Version 2.0, refer to LICENSE.txt

#ifndef DUSTLDA_MSTEP_HPP
#define DUSTLDA_MSTEP_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dustlda/error.hpp"
#include "dustlda/matrix.hpp"
#include "dustlda/model.hpp"
#include "dustlda/numerics/special.hpp"
#include "dustlda/optim/lbfgsb.hpp"
#include "dustlda/parallel.hpp"
#include "dustlda/vbi/config.hpp"
#include "dustlda/vbi/elbo.hpp"

namespace dustlda {

struct ValueAndGradient {
  double value = 0.0;
  std::vector<double> grad;
};

/// f(x) = R [lnΓ(Σx) − Σ lnΓ(x_i)] + Σ x_i s_i, where R is the number of
/// variational posteriors pooled into the statistic s_i = Σ_r E_r[log p_i].
/// Both the profile and the mixing objectives take this form.
class DirichletRowObjective {
 public:
  DirichletRowObjective(double replicas, std::vector<double> stat)
      : replicas_(replicas), stat_(std::move(stat)) {}

  double operator()(std::span<const double> x, std::span<double> grad) const {
    double sum = 0.0;
    double lg = 0.0;
    double lin = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (!(x[i] > 0.0) || !std::isfinite(x[i])) {
        throw DomainError("Dirichlet row objective: entries must be positive and finite");
      }
      sum += x[i];
      lg += numerics::log_gamma(x[i]);
      lin += x[i] * stat_[i];
    }
    const double psi_sum = numerics::digamma(sum);
    for (std::size_t i = 0; i < x.size(); ++i) {
      grad[i] = replicas_ * (psi_sum - numerics::digamma(x[i])) + stat_[i];
    }
    return replicas_ * (numerics::log_gamma(sum) - lg) + lin;
  }

  ValueAndGradient evaluate(std::span<const double> x) const {
    ValueAndGradient out{0.0, std::vector<double>(x.size())};
    out.value = (*this)(x, out.grad);
    return out;
  }

  std::size_t size() const noexcept { return stat_.size(); }

 private:
  double replicas_;
  std::vector<double> stat_;
};

/// Pools E[log β_m] over the given lambda matrices (one per sample, or a
/// single corpus-wide matrix).
inline DirichletRowObjective eta_row_objective(std::size_t m, std::span<const Matrix> lambdas) {
  if (lambdas.empty()) throw ContractViolation("eta objective needs at least one lambda matrix");
  const std::size_t T = lambdas.front().cols();
  std::vector<double> stat(T, 0.0), elog(T);
  for (const Matrix& lambda : lambdas) {
    if (m >= lambda.rows() || lambda.cols() != T) {
      throw ContractViolation("eta objective: lambda dimensions disagree");
    }
    expected_log_dirichlet(lambda.row(m), elog);
    for (std::size_t t = 0; t < T; ++t) stat[t] += elog[t];
  }
  return DirichletRowObjective(static_cast<double>(lambdas.size()), std::move(stat));
}

inline DirichletRowObjective alpha_row_objective(std::span<const VariationalState> states) {
  if (states.empty()) throw ContractViolation("alpha objective needs at least one sample");
  const std::size_t M = states.front().gamma.size();
  std::vector<double> stat(M, 0.0), elog(M);
  for (const auto& st : states) {
    expected_log_dirichlet(st.gamma, elog);
    for (std::size_t m = 0; m < M; ++m) stat[m] += elog[m];
  }
  return DirichletRowObjective(static_cast<double>(states.size()), std::move(stat));
}

namespace detail {

inline void require_positive_row(std::span<const double> row, const char* what) {
  for (double v : row) {
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw DomainError(std::string(what) + ": entries must be positive and finite");
    }
  }
}

}  // namespace detail

/// Profile objective for row m of H and its gradient, summed over the
/// supplied lambda matrices.
inline ValueAndGradient eta_objective_and_gradient(std::size_t m, std::span<const double> eta_row,
                                                   std::span<const Matrix> lambdas) {
  detail::require_positive_row(eta_row, "eta_objective_and_gradient");
  return eta_row_objective(m, lambdas).evaluate(eta_row);
}

/// Same, with the per-sample lambda carried by each state.
inline ValueAndGradient eta_objective_and_gradient(std::size_t m, std::span<const double> eta_row,
                                                   std::span<const VariationalState> states) {
  std::vector<Matrix> lambdas;
  lambdas.reserve(states.size());
  for (const auto& st : states) lambdas.push_back(st.lambda);
  return eta_objective_and_gradient(m, eta_row, std::span<const Matrix>(lambdas));
}

/// Mixing objective for the A row of location l, summed over that
/// location's samples. Known-source rows are frozen and may not be passed.
inline ValueAndGradient alpha_objective_and_gradient(const Corpus& corpus, std::size_t l,
                                                     std::span<const double> alpha_row,
                                                     std::span<const VariationalState> states) {
  if (l >= corpus.L()) throw ContractViolation("alpha objective: location index out of range");
  if (!corpus.locations[l].role.is_trace()) {
    throw ContractViolation("alpha objective: location '" + corpus.locations[l].name +
                            "' is a known-source location; its row is frozen");
  }
  detail::require_positive_row(alpha_row, "alpha_objective_and_gradient");
  return alpha_row_objective(states).evaluate(alpha_row);
}

/// Maximises a Dirichlet row objective in the coordinates u = x / sqrt(x0),
/// which brings the diagonal of the Hessian close to one.
inline optim::OptimizeResult maximize_row(const DirichletRowObjective& objective,
                                          std::span<const double> x0, const MstepConfig& cfg) {
  const std::size_t n = x0.size();
  std::vector<double> scale(n), u0(n);
  optim::BoxBounds ub{std::vector<double>(n), std::vector<double>(n)};
  for (std::size_t i = 0; i < n; ++i) {
    const double start = std::clamp(x0[i], cfg.lower, cfg.upper);
    scale[i] = std::sqrt(start);
    u0[i] = start / scale[i];
    ub.lower[i] = cfg.lower / scale[i];
    ub.upper[i] = cfg.upper / scale[i];
    u0[i] = std::clamp(u0[i], ub.lower[i], ub.upper[i]);
  }
  std::vector<double> x(n);
  const auto to_x = [&](std::span<const double> u) {
    for (std::size_t i = 0; i < n; ++i) x[i] = std::clamp(u[i] * scale[i], cfg.lower, cfg.upper);
  };
  const optim::Objective f = [&](std::span<const double> u, std::span<double> grad) {
    to_x(u);
    const double v = objective(x, grad);
    for (std::size_t i = 0; i < n; ++i) grad[i] *= scale[i];
    return v;
  };
  optim::OptimizeResult res = optim::maximize_box(f, u0, ub, cfg.optimizer);
  to_x(res.x);
  res.x = x;
  return res;
}

/// Lambda matrices feeding the profile objectives: the shared matrix when
/// given, otherwise each state's own.
struct LambdaSource {
  const Matrix* shared = nullptr;
  std::span<const VariationalState> states;

  std::vector<Matrix> matrices() const {
    if (shared) return {*shared};
    std::vector<Matrix> out;
    out.reserve(states.size());
    for (const auto& st : states) out.push_back(st.lambda);
    return out;
  }
};

struct MstepResult {
  DirichletMatrix H;
  DirichletMatrix A;
  std::size_t optimizer_iterations = 0;
  std::size_t rows_not_converged = 0;
};

/// Replaces every H row and every trace row of A by the maximiser of its
/// objective. Rows are independent; all H rows are solved, then the A rows.
inline MstepResult mstep(const DirichletMatrix& H, const DirichletMatrix& A,
                         std::span<const VariationalState> states, const Matrix* shared_lambda,
                         const Corpus& corpus, const FitConfig& config) {
  MstepResult out{H, A, 0, 0};
  const LambdaSource source{shared_lambda, states};
  const std::vector<Matrix> lambdas = source.matrices();
  const std::vector<std::size_t> offsets = sample_offsets(corpus);
  const std::vector<std::size_t> traces = corpus.trace_locations();

  struct RowJob {
    bool is_h;
    std::size_t row;
  };
  std::vector<RowJob> jobs;
  for (std::size_t m = 0; m < H.rows(); ++m) jobs.push_back({true, m});
  for (std::size_t l : traces) jobs.push_back({false, l});

  std::vector<optim::OptimizeResult> results(jobs.size());
  parallel_for(jobs.size(), config.threads, [&](std::size_t j) {
    const RowJob job = jobs[j];
    try {
      if (job.is_h) {
        const auto obj = eta_row_objective(job.row, lambdas);
        results[j] = maximize_row(obj, H.row(job.row), config.mstep);
      } else {
        const auto loc_states =
            states.subspan(offsets[job.row], offsets[job.row + 1] - offsets[job.row]);
        const auto obj = alpha_row_objective(loc_states);
        results[j] = maximize_row(obj, A.row(job.row), config.mstep);
      }
    } catch (const NumericalFailure& e) {
      throw NumericalFailure(e.what(), e.iteration(),
                             std::string(job.is_h ? "H" : "A") + " row " + std::to_string(job.row));
    }
  });

  for (std::size_t j = 0; j < jobs.size(); ++j) {
    out.optimizer_iterations += results[j].iterations;
    if (!results[j].converged) ++out.rows_not_converged;
    if (jobs[j].is_h) {
      out.H.set_row(jobs[j].row, results[j].x);
    } else {
      out.A.set_row(jobs[j].row, results[j].x);
    }
  }
  return out;
}

}  // namespace dustlda

#endif  // DUSTLDA_MSTEP_HPP
