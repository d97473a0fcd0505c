// Apache License, Version 2.0, refer to LICENSE.txt

#ifndef DUSTLDA_VBI_FIT_HPP
#define DUSTLDA_VBI_FIT_HPP

#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "dustlda/error.hpp"
#include "dustlda/matrix.hpp"
#include "dustlda/model.hpp"
#include "dustlda/mstep.hpp"
#include "dustlda/parallel.hpp"
#include "dustlda/vbi/config.hpp"
#include "dustlda/vbi/elbo.hpp"
#include "dustlda/vbi/estep.hpp"

namespace dustlda {

struct InitialState {
  DirichletMatrix H;
  DirichletMatrix A;
  std::vector<VariationalState> states;  // flattened: location order, then sample order
  Matrix shared_lambda;                  // empty unless the lambda scope is shared
};

struct FitResult {
  DirichletMatrix A_converged;  // trace rows only, in trace_locations order
  std::vector<std::size_t> trace_locations;
  DirichletMatrix A_full;
  DirichletMatrix H_converged;
  std::vector<VariationalState> variational;
  Matrix shared_lambda;
  std::vector<double> elbo_trace;           // total bound after each E-step phase
  std::vector<std::size_t> estep_sweeps;    // sweeps used by each E-step phase
  bool converged = false;
  std::size_t iterations = 0;
  FitConfig config;
};

/// Hooks for diagnostics; all optional.
struct FitObserver {
  /// Shared scope: total bound before the phase (sweep 0) and after each sweep.
  std::function<void(std::size_t outer, std::size_t sweep, double total)> on_sweep;
  /// Per-sample scope: the sample's bound history within one E-step call.
  std::function<void(std::size_t outer, std::size_t sample, const std::vector<double>&)>
      on_sample_history;
  /// Total bound after the M-step of an outer iteration.
  std::function<void(std::size_t outer, double total)> on_mstep;
};

/// Flat H, weighted A, and per-sample starting states.
inline InitialState initialize(const Corpus& corpus, const FitConfig& config) {
  config.validate();
  require_valid(corpus);
  const std::size_t M = corpus.M();
  const std::size_t T = corpus.T();
  const std::size_t L = corpus.L();

  Matrix a(L, M, config.flat_weight);
  for (std::size_t l = 0; l < L; ++l) {
    const auto& role = corpus.locations[l].role;
    if (role.is_known()) a(l, role.source()) = config.known_weight;
  }
  InitialState init{DirichletMatrix(DirichletMatrix::Role::H, M, T, 1.0),
                    DirichletMatrix(DirichletMatrix::Role::A, std::move(a)),
                    {},
                    {}};

  const double total_samples = static_cast<double>(corpus.sample_count());
  const bool shared = config.lambda_scope == LambdaScope::shared;
  for (std::size_t l = 0; l < L; ++l) {
    for (const auto& sample : corpus.locations[l].samples) {
      VariationalState st;
      st.gamma.resize(M);
      const double bump = static_cast<double>(sample.total()) / (static_cast<double>(M) * total_samples);
      for (std::size_t m = 0; m < M; ++m) st.gamma[m] = init.A(l, m) + bump;
      st.phi = Matrix(T, M, 1.0 / static_cast<double>(M));
      if (!shared) st.lambda = init.H.values();
      init.states.push_back(std::move(st));
    }
  }
  if (shared) init.shared_lambda = init.H.values();
  return init;
}

namespace detail {

struct SampleRef {
  const SampleCounts* counts;
  std::size_t location;
};

inline std::vector<SampleRef> flatten(const Corpus& corpus) {
  std::vector<SampleRef> out;
  for (std::size_t l = 0; l < corpus.L(); ++l) {
    for (const auto& s : corpus.locations[l].samples) out.push_back({&s, l});
  }
  return out;
}

}  // namespace detail

/// Total bound when q(B) is one corpus-wide Dirichlet per source. Writes
/// each sample's local contribution into its state.
inline double shared_total_elbo(std::span<const detail::SampleRef> samples,
                                const DirichletMatrix& A, const DirichletMatrix& H,
                                const Matrix& lambda, std::span<VariationalState> states,
                                std::size_t iteration) {
  const Matrix elog_beta = expected_log_rows(lambda);
  ElboTerms total = elbo_profile_terms(H.values(), lambda, elog_beta);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const ElboTerms local =
        elbo_local_terms(*samples[i].counts, A.row(samples[i].location), elog_beta, states[i]);
    states[i].elbo = local.total();
    total += local;
  }
  check_terms(total, iteration);
  return total.total();
}

/// lambda = H + Σ_samples scale_s * counts ⊙ phi, summed in sample order.
inline void update_shared_lambda(std::span<const detail::SampleRef> samples, const Matrix& H,
                                 std::span<const VariationalState> states, const FitConfig& config,
                                 Matrix& lambda) {
  lambda = H;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const SampleCounts& c = *samples[i].counts;
    const double scale = increment_scale(c, config);
    for (std::size_t m = 0; m < H.rows(); ++m) {
      for (std::size_t t = 0; t < H.cols(); ++t) {
        lambda(m, t) += scale * c.counts[t] * states[i].phi(t, m);
      }
    }
  }
}

/// One E-step phase with a shared lambda: sweeps of (phi, gamma) for every
/// sample followed by the lambda update, until the total bound settles.
/// Returns the number of sweeps.
inline std::size_t estep_shared(std::span<const detail::SampleRef> samples,
                                const DirichletMatrix& A, const DirichletMatrix& H, Matrix& lambda,
                                std::span<VariationalState> states, const FitConfig& config,
                                double& total, std::size_t outer, const FitObserver* observer) {
  double previous = shared_total_elbo(samples, A, H, lambda, states, 0);
  if (observer && observer->on_sweep) observer->on_sweep(outer, 0, previous);
  total = previous;
  std::size_t sweep = 1;
  for (; sweep <= config.estep_max_iters; ++sweep) {
    const Matrix elog_beta = expected_log_rows(lambda);
    parallel_for(samples.size(), config.threads, [&](std::size_t i) {
      const SampleCounts& c = *samples[i].counts;
      update_phi_gamma(c, A.row(samples[i].location), elog_beta, states[i],
                       increment_scale(c, config));
      states[i].iterations = sweep;
    });
    update_shared_lambda(samples, H.values(), states, config, lambda);
    total = shared_total_elbo(samples, A, H, lambda, states, sweep);
    if (observer && observer->on_sweep) observer->on_sweep(outer, sweep, total);
    if (relative_change_below(previous, total, config.estep_tol)) break;
    previous = total;
  }
  return std::min(sweep, config.estep_max_iters);
}

/// Total bound for the current parameters without changing the states'
/// variational parameters.
inline double total_elbo(const Corpus& corpus, const DirichletMatrix& A, const DirichletMatrix& H,
                         std::span<VariationalState> states, const Matrix& shared_lambda) {
  const auto samples = detail::flatten(corpus);
  if (!shared_lambda.empty()) return shared_total_elbo(samples, A, H, shared_lambda, states, 0);
  double total = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    total += elbo_sample(*samples[i].counts, A.row(samples[i].location), H.values(), states[i]);
  }
  return total;
}

/// Variational EM: E-step phases over all samples alternate with M-step
/// updates of H and the trace rows of A until the total bound settles.
inline FitResult fit(const Corpus& corpus, const FitConfig& config,
                     const FitObserver* observer = nullptr) {
  InitialState init = initialize(corpus, config);
  const auto samples = detail::flatten(corpus);
  const bool shared = config.lambda_scope == LambdaScope::shared;

  FitResult res;
  res.config = config;
  res.trace_locations = corpus.trace_locations();
  DirichletMatrix H = std::move(init.H);
  DirichletMatrix A = std::move(init.A);
  std::vector<VariationalState> states = std::move(init.states);
  Matrix lambda = std::move(init.shared_lambda);

  for (std::size_t outer = 0; outer < config.outer_max_iters; ++outer) {
    double total = 0.0;
    if (shared) {
      res.estep_sweeps.push_back(
          estep_shared(samples, A, H, lambda, states, config, total, outer, observer));
    } else {
      std::vector<std::vector<double>> histories(samples.size());
      const bool want_history = observer && observer->on_sample_history;
      parallel_for(samples.size(), config.threads, [&](std::size_t i) {
        states[i] = estep_sample(*samples[i].counts, A.row(samples[i].location), H.values(),
                                 std::move(states[i]), config,
                                 want_history ? &histories[i] : nullptr);
      });
      std::size_t most = 0;
      for (std::size_t i = 0; i < samples.size(); ++i) {
        total += states[i].elbo;
        most = std::max(most, states[i].iterations);
        if (want_history) observer->on_sample_history(outer, i, histories[i]);
      }
      res.estep_sweeps.push_back(most);
    }
    res.elbo_trace.push_back(total);
    res.iterations = outer + 1;
    if (res.elbo_trace.size() > 1 &&
        relative_change_below(res.elbo_trace[res.elbo_trace.size() - 2], total, config.outer_tol)) {
      res.converged = true;
      break;
    }
    if (outer + 1 == config.outer_max_iters) break;

    MstepResult updated =
        mstep(H, A, states, shared ? &lambda : nullptr, corpus, config);
    H = std::move(updated.H);
    A = std::move(updated.A);
    if (observer && observer->on_mstep) {
      observer->on_mstep(outer, total_elbo(corpus, A, H, states, lambda));
    }
  }

  Matrix trace_rows(res.trace_locations.size(), corpus.M());
  for (std::size_t r = 0; r < res.trace_locations.size(); ++r) {
    const auto src = A.row(res.trace_locations[r]);
    std::copy(src.begin(), src.end(), trace_rows.row(r).begin());
  }
  res.A_converged = DirichletMatrix(DirichletMatrix::Role::A, std::move(trace_rows));
  res.A_full = std::move(A);
  res.H_converged = std::move(H);
  res.variational = std::move(states);
  res.shared_lambda = std::move(lambda);
  return res;
}

}  // namespace dustlda

#endif  // DUSTLDA_VBI_FIT_HPP
