// Apache License, Version 2.0, refer to LICENSE.txt

#ifndef DUSTLDA_POSTERIOR_HPP
#define DUSTLDA_POSTERIOR_HPP

#include <cmath>
#include <cstddef>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dustlda/error.hpp"
#include "dustlda/model.hpp"
#include "dustlda/numerics/beta.hpp"
#include "dustlda/vbi/fit.hpp"

namespace dustlda {

/// Beta(α_m, Σ_{i≠m} α_i): marginal of component m of a Dirichlet row.
inline numerics::BetaShape dirichlet_marginal(std::span<const double> row, std::size_t m) {
  if (m >= row.size()) throw DomainError("dirichlet_marginal: index out of range");
  if (row.size() < 2) {
    throw DomainError("dirichlet_marginal: a one-component row has a degenerate marginal");
  }
  double rest = 0.0;
  for (std::size_t i = 0; i < row.size(); ++i) {
    if (i != m) rest += row[i];
  }
  return numerics::BetaShape::make(row[m], rest);
}

/// Contribution of source m to samples of the location whose A row is given.
inline numerics::BetaShape theta_marginal(std::span<const double> a_row, std::size_t m) {
  return dirichlet_marginal(a_row, m);
}

/// Proportion of particle type t in the profile whose H row is given.
inline numerics::BetaShape beta_profile_marginal(std::span<const double> h_row, std::size_t t) {
  return dirichlet_marginal(h_row, t);
}

struct DensityCurve {
  std::vector<double> x;
  std::vector<double> density;
};

/// Density on n points of [0,1] placed at the Beta quantiles of
/// Chebyshev-spaced probabilities, so that sharp posteriors are resolved.
inline DensityCurve density_curve(const numerics::BetaShape& shape, std::size_t n = 512) {
  DensityCurve out;
  out.x.reserve(n);
  out.density.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double u =
        0.5 * (1.0 - std::cos(std::numbers::pi * (static_cast<double>(i) + 0.5) /
                              static_cast<double>(n)));
    const double x = numerics::beta_quantile(shape, u);
    if (!out.x.empty() && x <= out.x.back()) continue;
    out.x.push_back(x);
    out.density.push_back(numerics::beta_pdf(shape, x));
  }
  return out;
}

inline double trapezoid(const DensityCurve& c) {
  double s = 0.0;
  for (std::size_t i = 1; i < c.x.size(); ++i) {
    s += 0.5 * (c.density[i] + c.density[i - 1]) * (c.x[i] - c.x[i - 1]);
  }
  return s;
}

struct MarginalSummary {
  std::string label;
  /// Absent for a one-component row, whose marginal is a point mass at 1.
  std::optional<numerics::BetaShape> shape;
  double mean = 1.0;
  std::optional<double> mode;
  numerics::CredibleInterval hpdi{1.0, 1.0, 0.95, false};
  DensityCurve curve;
};

struct ThetaMarginal {
  std::size_t location = 0;
  std::string location_name;
  std::size_t source = 0;
  std::string source_name;
  MarginalSummary summary;
};

struct ProfileMarginal {
  std::size_t source = 0;
  std::string source_name;
  std::size_t type = 0;
  std::string type_name;
  MarginalSummary summary;
};

/// Per-sample lambda row means, reported only on request.
struct LambdaDiagnostic {
  std::size_t sample = 0;
  std::size_t location = 0;
  std::size_t source = 0;
  std::vector<double> normalized;
};

struct PosteriorReport {
  std::vector<ThetaMarginal> theta_marginals;
  std::vector<ProfileMarginal> beta_marginals;
  FitConfig config;
  std::vector<double> elbo_trace;
  std::vector<std::size_t> estep_sweeps;
  std::size_t iterations = 0;
  bool converged = false;
  double mass = 0.95;
  std::vector<LambdaDiagnostic> lambda_diagnostics;
};

inline MarginalSummary summarize_marginal(std::string label, std::span<const double> row,
                                          std::size_t index, double mass, std::size_t grid) {
  MarginalSummary s;
  s.label = std::move(label);
  s.hpdi.mass = mass;
  if (row.size() == 1) {
    s.mean = 1.0;
    s.mode = 1.0;
    return s;
  }
  const auto shape = dirichlet_marginal(row, index);
  const auto bs = numerics::beta_summary(shape);
  s.shape = shape;
  s.mean = bs.mean;
  s.mode = bs.mode;
  s.hpdi = numerics::beta_hpdi(shape, mass);
  s.curve = density_curve(shape, grid);
  return s;
}

struct ReportOptions {
  double mass = 0.95;
  std::size_t grid_points = 512;
  bool lambda_diagnostics = false;
};

/// All θ marginals of the trace rows and all profile marginals of H.
inline PosteriorReport build_report(const FitResult& fit, const Corpus& corpus,
                                    const ReportOptions& opts = {}) {
  PosteriorReport rep;
  rep.config = fit.config;
  rep.elbo_trace = fit.elbo_trace;
  rep.estep_sweeps = fit.estep_sweeps;
  rep.iterations = fit.iterations;
  rep.converged = fit.converged;
  rep.mass = opts.mass;

  for (std::size_t r = 0; r < fit.trace_locations.size(); ++r) {
    const std::size_t l = fit.trace_locations[r];
    const auto row = fit.A_converged.row(r);
    for (std::size_t m = 0; m < row.size(); ++m) {
      ThetaMarginal tm{l, corpus.locations[l].name, m, corpus.source_names[m], {}};
      tm.summary = summarize_marginal("theta_" + tm.location_name + "_" + tm.source_name, row, m,
                                      opts.mass, opts.grid_points);
      rep.theta_marginals.push_back(std::move(tm));
    }
  }
  for (std::size_t m = 0; m < fit.H_converged.rows(); ++m) {
    const auto row = fit.H_converged.row(m);
    for (std::size_t t = 0; t < row.size(); ++t) {
      ProfileMarginal pm{m, corpus.source_names[m], t, corpus.catalog.name(t), {}};
      pm.summary = summarize_marginal("beta_" + pm.source_name + "_" + pm.type_name, row, t,
                                      opts.mass, opts.grid_points);
      rep.beta_marginals.push_back(std::move(pm));
    }
  }

  if (opts.lambda_diagnostics) {
    const auto offsets = sample_offsets(corpus);
    for (std::size_t l = 0; l < corpus.L(); ++l) {
      for (std::size_t i = offsets[l]; i < offsets[l + 1]; ++i) {
        const Matrix& lambda =
            fit.variational[i].lambda.empty() ? fit.shared_lambda : fit.variational[i].lambda;
        for (std::size_t m = 0; m < lambda.rows(); ++m) {
          LambdaDiagnostic d{i, l, m, {}};
          const double sum = lambda.row_sum(m);
          for (double v : lambda.row(m)) d.normalized.push_back(v / sum);
          rep.lambda_diagnostics.push_back(std::move(d));
        }
      }
    }
  }
  return rep;
}

}  // namespace dustlda

#endif  // DUSTLDA_POSTERIOR_HPP
