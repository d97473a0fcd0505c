// Apache License, Version 2.0, refer to LICENSE.txt

#ifndef DUSTLDA_SIMULATOR_HPP
#define DUSTLDA_SIMULATOR_HPP

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "dustlda/error.hpp"
#include "dustlda/matrix.hpp"
#include "dustlda/model.hpp"
#include "dustlda/numerics/beta.hpp"
#include "dustlda/parallel.hpp"
#include "dustlda/posterior.hpp"
#include "dustlda/vbi/fit.hpp"

namespace dustlda {

using Rng = std::mt19937_64;

/// Independent stream for one (cell, replication) of a study.
inline Rng make_stream(std::uint64_t seed, std::uint64_t cell, std::uint64_t replication) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(cell), static_cast<std::uint32_t>(cell >> 32),
                    static_cast<std::uint32_t>(replication),
                    static_cast<std::uint32_t>(replication >> 32)};
  return Rng(seq);
}

namespace detail {

inline void require_simplex(std::span<const double> v, const std::string& what) {
  double s = 0.0;
  for (double x : v) {
    if (!(x >= 0.0) || !std::isfinite(x)) throw DomainError(what + ": entries must be non-negative");
    s += x;
  }
  if (std::fabs(s - 1.0) > 1e-12) throw DomainError(what + ": entries must sum to 1");
}

}  // namespace detail

/// Draws n particles: a source from theta, then a type from that source's
/// profile; returns the per-type counts.
inline SampleCounts generate_sample(std::span<const double> theta, const Matrix& profiles,
                                   std::uint32_t n, Rng& rng) {
  if (theta.size() != profiles.rows()) {
    throw ContractViolation("generate_sample: theta length differs from profile rows");
  }
  if (n < 1) throw DomainError("generate_sample: n must be at least 1");
  detail::require_simplex(theta, "generate_sample theta");
  std::vector<std::discrete_distribution<std::size_t>> by_source;
  for (std::size_t m = 0; m < profiles.rows(); ++m) {
    detail::require_simplex(profiles.row(m), "generate_sample profile row");
    by_source.emplace_back(profiles.row(m).begin(), profiles.row(m).end());
  }
  std::discrete_distribution<std::size_t> source(theta.begin(), theta.end());
  SampleCounts out{std::vector<std::uint32_t>(profiles.cols(), 0), 0, 0};
  for (std::uint32_t i = 0; i < n; ++i) {
    const std::size_t z = source(rng);
    ++out.counts[by_source[z](rng)];
  }
  return out;
}

/// Pooled counts normalised to a simplex vector.
inline std::vector<double> profiles_from_counts(std::span<const SampleCounts> samples) {
  if (samples.empty()) throw DomainError("profiles_from_counts: no samples");
  const std::size_t T = samples.front().counts.size();
  std::vector<double> pooled(T, 0.0);
  for (const auto& s : samples) {
    if (s.counts.size() != T) throw ContractViolation("profiles_from_counts: length mismatch");
    for (std::size_t t = 0; t < T; ++t) pooled[t] += s.counts[t];
  }
  const double total = std::accumulate(pooled.begin(), pooled.end(), 0.0);
  if (total <= 0.0) throw DomainError("profiles_from_counts: pooled counts are all zero");
  for (double& v : pooled) v /= total;
  return pooled;
}

enum class Situation { one_trace, two_traces };

/// Design of a simulation study with one known source (row 0 of the
/// profiles) and one unknown source (row 1).
struct ScenarioSpec {
  std::vector<std::string> type_names;
  std::vector<std::string> source_names{"AT", "LQ"};
  Matrix true_profiles;                 // 2 x T, rows on the simplex
  std::vector<double> theta_grid;       // share of the known source in trace e1
  std::vector<std::uint32_t> n_grid;    // particles per trace sample
  Situation situation = Situation::one_trace;
  std::vector<double> second_trace_theta{0.51, 0.49};
  std::size_t samples_per_trace = 5;
  std::size_t known_samples = 12;
  std::optional<std::uint32_t> known_particles;  // defaults to the cell's N
  std::size_t replications = 10;
  std::uint64_t rng_seed = 0;

  std::size_t cells() const noexcept { return theta_grid.size() * n_grid.size(); }

  void validate() const {
    if (true_profiles.rows() != 2) throw DomainError("ScenarioSpec: need exactly two profile rows");
    if (type_names.size() != true_profiles.cols()) {
      throw DomainError("ScenarioSpec: type_names length differs from profile width");
    }
    if (source_names.size() != 2) throw DomainError("ScenarioSpec: need two source names");
    for (std::size_t m = 0; m < 2; ++m) detail::require_simplex(true_profiles.row(m), "profile");
    if (theta_grid.empty() || n_grid.empty()) throw DomainError("ScenarioSpec: empty grid");
    for (double g : theta_grid) {
      if (!(g >= 0.0 && g <= 1.0)) throw DomainError("ScenarioSpec: theta grid outside [0,1]");
    }
    for (std::size_t i = 0; i < theta_grid.size(); ++i) {
      for (std::size_t j = i + 1; j < theta_grid.size(); ++j) {
        if (theta_grid[i] == theta_grid[j]) throw DomainError("ScenarioSpec: duplicate theta");
      }
    }
    for (std::size_t i = 0; i < n_grid.size(); ++i) {
      if (n_grid[i] < 1) throw DomainError("ScenarioSpec: particle counts must be at least 1");
      for (std::size_t j = i + 1; j < n_grid.size(); ++j) {
        if (n_grid[i] == n_grid[j]) throw DomainError("ScenarioSpec: duplicate N");
      }
    }
    if (situation == Situation::two_traces) {
      if (second_trace_theta.size() != 2) throw DomainError("ScenarioSpec: second trace theta");
      detail::require_simplex(second_trace_theta, "second trace theta");
    }
    if (samples_per_trace < 1 || known_samples < 1 || replications < 1) {
      throw DomainError("ScenarioSpec: sample and replication counts must be at least 1");
    }
    if (known_particles && *known_particles < 1) {
      throw DomainError("ScenarioSpec: known_particles must be at least 1");
    }
  }
};

/// Outcome of one replication of one cell.
struct StudyRecord {
  std::size_t cell = 0;
  std::size_t replication = 0;
  double theta_known_truth = 0.0;  // share of source 0 in e1
  std::uint32_t n = 0;
  bool ok = false;
  std::string error;
  bool converged = false;
  std::size_t iterations = 0;
  /// Per trace location (e1, then e2 when present), unknown-source share.
  std::vector<double> truth_unknown;
  std::vector<double> theta_unknown_mean;
  std::vector<double> theta_unknown_mode;        // NaN when the mode is on the boundary
  std::vector<double> sample_theta_unknown_mean; // average of per-sample posterior means
  std::vector<double> beta_known_mean;           // per type
  std::vector<double> beta_unknown_mean;         // per type
};

struct CellAggregate {
  std::size_t cell = 0;
  double theta_known_truth = 0.0;
  std::uint32_t n = 0;
  std::size_t replications_ok = 0;
  std::vector<double> truth_unknown;
  std::vector<double> theta_unknown_mean;
  std::vector<double> theta_unknown_mode;
  std::vector<double> abs_error_mean;  // mean over replications of |mean − truth|
  std::vector<double> beta_known_mean;
  std::vector<double> beta_unknown_mean;
};

struct StudyResults {
  std::vector<StudyRecord> records;  // cell-major, then replication
  std::vector<CellAggregate> cells;
};

/// Corpus for one replication: the known control location and the trace
/// location(s), all drawn from the stream.
inline Corpus build_study_corpus(const ScenarioSpec& spec, double theta_known, std::uint32_t n,
                                 Rng& rng) {
  Corpus c;
  c.catalog = ParticleCatalog(spec.type_names);
  c.source_names = spec.source_names;
  c.unknown_sources = 1;
  const std::vector<double> pure{1.0, 0.0};
  const std::uint32_t n_known = spec.known_particles.value_or(n);
  std::vector<std::vector<std::uint32_t>> known;
  for (std::size_t s = 0; s < spec.known_samples; ++s) {
    known.push_back(generate_sample(pure, spec.true_profiles, n_known, rng).counts);
  }
  add_location(c, spec.source_names[0], LocationRole::known(0), std::move(known));

  std::vector<std::vector<double>> mixtures{{theta_known, 1.0 - theta_known}};
  if (spec.situation == Situation::two_traces) mixtures.push_back(spec.second_trace_theta);
  for (std::size_t u = 0; u < mixtures.size(); ++u) {
    std::vector<std::vector<std::uint32_t>> trace;
    for (std::size_t s = 0; s < spec.samples_per_trace; ++s) {
      trace.push_back(generate_sample(mixtures[u], spec.true_profiles, n, rng).counts);
    }
    add_location(c, "e" + std::to_string(u + 1), LocationRole::trace(), std::move(trace));
  }
  return c;
}

inline StudyRecord run_replication(const ScenarioSpec& spec, const FitConfig& fit_config,
                                   std::size_t cell, std::size_t replication) {
  StudyRecord rec;
  rec.cell = cell;
  rec.replication = replication;
  rec.theta_known_truth = spec.theta_grid[cell / spec.n_grid.size()];
  rec.n = spec.n_grid[cell % spec.n_grid.size()];
  try {
    Rng rng = make_stream(spec.rng_seed, cell, replication);
    const Corpus corpus = build_study_corpus(spec, rec.theta_known_truth, rec.n, rng);
    FitConfig cfg = fit_config;
    cfg.threads = 1;
    const FitResult res = fit(corpus, cfg);
    rec.converged = res.converged;
    rec.iterations = res.iterations;
    const auto offsets = sample_offsets(corpus);
    for (std::size_t r = 0; r < res.trace_locations.size(); ++r) {
      const std::size_t l = res.trace_locations[r];
      rec.truth_unknown.push_back(r == 0 ? 1.0 - rec.theta_known_truth
                                         : spec.second_trace_theta[1]);
      const auto shape = theta_marginal(res.A_converged.row(r), 1);
      const auto s = numerics::beta_summary(shape);
      rec.theta_unknown_mean.push_back(s.mean);
      rec.theta_unknown_mode.push_back(s.mode.value_or(std::numeric_limits<double>::quiet_NaN()));
      double acc = 0.0;
      for (std::size_t i = offsets[l]; i < offsets[l + 1]; ++i) {
        const auto& g = res.variational[i].gamma;
        acc += g[1] / (g[0] + g[1]);
      }
      rec.sample_theta_unknown_mean.push_back(acc / static_cast<double>(offsets[l + 1] - offsets[l]));
    }
    for (std::size_t m = 0; m < 2; ++m) {
      auto& dst = m == 0 ? rec.beta_known_mean : rec.beta_unknown_mean;
      const double sum = res.H_converged.values().row_sum(m);
      for (double v : res.H_converged.row(m)) dst.push_back(v / sum);
    }
    rec.ok = true;
  } catch (const std::exception& e) {
    rec.ok = false;
    rec.error = e.what();
  }
  return rec;
}

/// Cell averages over successful replications.
inline std::vector<CellAggregate> aggregate(const ScenarioSpec& spec,
                                            std::span<const StudyRecord> records) {
  std::vector<CellAggregate> cells(spec.cells());
  const std::size_t traces = spec.situation == Situation::two_traces ? 2 : 1;
  const std::size_t T = spec.type_names.size();
  for (std::size_t c = 0; c < cells.size(); ++c) {
    auto& a = cells[c];
    a.cell = c;
    a.theta_known_truth = spec.theta_grid[c / spec.n_grid.size()];
    a.n = spec.n_grid[c % spec.n_grid.size()];
    a.truth_unknown.assign(traces, 0.0);
    a.truth_unknown[0] = 1.0 - a.theta_known_truth;
    if (traces == 2) a.truth_unknown[1] = spec.second_trace_theta[1];
    a.theta_unknown_mean.assign(traces, 0.0);
    a.theta_unknown_mode.assign(traces, 0.0);
    a.abs_error_mean.assign(traces, 0.0);
    a.beta_known_mean.assign(T, 0.0);
    a.beta_unknown_mean.assign(T, 0.0);
  }
  for (const auto& r : records) {
    if (!r.ok) continue;
    auto& a = cells[r.cell];
    ++a.replications_ok;
    for (std::size_t u = 0; u < r.theta_unknown_mean.size(); ++u) {
      a.theta_unknown_mean[u] += r.theta_unknown_mean[u];
      a.theta_unknown_mode[u] += r.theta_unknown_mode[u];
      a.abs_error_mean[u] += std::fabs(r.theta_unknown_mean[u] - r.truth_unknown[u]);
    }
    for (std::size_t t = 0; t < T; ++t) {
      a.beta_known_mean[t] += r.beta_known_mean[t];
      a.beta_unknown_mean[t] += r.beta_unknown_mean[t];
    }
  }
  for (auto& a : cells) {
    const double k = static_cast<double>(a.replications_ok);
    const auto div = [&](std::vector<double>& v) {
      for (double& x : v) x = k > 0 ? x / k : std::numeric_limits<double>::quiet_NaN();
    };
    div(a.theta_unknown_mean);
    div(a.theta_unknown_mode);
    div(a.abs_error_mean);
    div(a.beta_known_mean);
    div(a.beta_unknown_mean);
  }
  return cells;
}

/// Every (theta, N) cell times every replication; each task owns its
/// stream, so the result does not depend on the number of threads.
inline StudyResults run_study(const ScenarioSpec& spec, const FitConfig& fit_config,
                              std::size_t threads = 1) {
  spec.validate();
  fit_config.validate();
  const std::size_t tasks = spec.cells() * spec.replications;
  StudyResults out;
  out.records.resize(tasks);
  parallel_for(tasks, threads, [&](std::size_t k) {
    out.records[k] =
        run_replication(spec, fit_config, k / spec.replications, k % spec.replications);
  });
  out.cells = aggregate(spec, out.records);
  return out;
}

}  // namespace dustlda

#endif  // DUSTLDA_SIMULATOR_HPP
