// Apache License, Version 2.0, refer to LICENSE.txt

#ifndef DUSTLDA_IO_JSON_HPP
#define DUSTLDA_IO_JSON_HPP

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "dustlda/error.hpp"
#include "dustlda/io/csv.hpp"
#include "dustlda/model.hpp"
#include "dustlda/posterior.hpp"
#include "dustlda/simulator.hpp"
#include "dustlda/vbi/config.hpp"
#include "dustlda/vbi/fit.hpp"

namespace dustlda::io {

using Json = nlohmann::ordered_json;

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline void reject_unknown_keys(const Json& obj, const std::set<std::string>& allowed,
                                const std::string& where) {
  if (!obj.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [key, _] : obj.items()) {
    if (!allowed.count(key)) throw ConfigError(where + ": unknown key '" + key + "'");
  }
}

template <class T>
void read_if(const Json& obj, const char* key, T& dst, const std::string& where) {
  if (!obj.contains(key)) return;
  try {
    dst = obj.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

inline Json number_or_null(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

inline Json vector_json(std::span<const double> v) {
  Json a = Json::array();
  for (double x : v) a.push_back(number_or_null(x));
  return a;
}

inline Json matrix_json(const Matrix& m) {
  Json a = Json::array();
  for (std::size_t r = 0; r < m.rows(); ++r) a.push_back(vector_json(m.row(r)));
  return a;
}

inline Matrix matrix_from_json(const Json& j, const std::string& where) {
  if (!j.is_array() || j.empty() || !j.front().is_array()) {
    throw ConfigError(where + ": expected a non-empty array of rows");
  }
  Matrix m(j.size(), j.front().size());
  for (std::size_t r = 0; r < j.size(); ++r) {
    if (j[r].size() != m.cols()) throw ConfigError(where + ": ragged matrix");
    for (std::size_t c = 0; c < m.cols(); ++c) m(r, c) = j[r][c].get<double>();
  }
  return m;
}

}  // namespace detail

struct RunConfig {
  FitConfig fit;
  IngestOptions corpus;
  ReportOptions report;
};

inline RunConfig parse_config(const Json& j) {
  RunConfig rc;
  if (j.is_null()) return rc;
  detail::reject_unknown_keys(j, {"fit", "corpus", "report"}, "config");
  if (j.contains("fit")) {
    const Json& f = j.at("fit");
    detail::reject_unknown_keys(f,
                                {"known_weight", "flat_weight", "estep_tol", "estep_max_iters",
                                 "outer_tol", "outer_max_iters", "mstep", "rng_seed",
                                 "lambda_scope", "inverse_count_scaling", "threads"},
                                "fit");
    detail::read_if(f, "known_weight", rc.fit.known_weight, "fit");
    detail::read_if(f, "flat_weight", rc.fit.flat_weight, "fit");
    detail::read_if(f, "estep_tol", rc.fit.estep_tol, "fit");
    detail::read_if(f, "estep_max_iters", rc.fit.estep_max_iters, "fit");
    detail::read_if(f, "outer_tol", rc.fit.outer_tol, "fit");
    detail::read_if(f, "outer_max_iters", rc.fit.outer_max_iters, "fit");
    detail::read_if(f, "rng_seed", rc.fit.rng_seed, "fit");
    detail::read_if(f, "inverse_count_scaling", rc.fit.inverse_count_scaling, "fit");
    detail::read_if(f, "threads", rc.fit.threads, "fit");
    if (f.contains("lambda_scope")) {
      try {
        rc.fit.lambda_scope = lambda_scope_from_string(f.at("lambda_scope").get<std::string>());
      } catch (const std::exception& e) {
        throw ConfigError(std::string("fit.lambda_scope: ") + e.what());
      }
    }
    if (f.contains("mstep")) {
      const Json& m = f.at("mstep");
      detail::reject_unknown_keys(m,
                                  {"lower", "upper", "memory", "grad_tol", "max_iters",
                                   "sufficient_decrease", "curvature", "max_line_search"},
                                  "fit.mstep");
      detail::read_if(m, "lower", rc.fit.mstep.lower, "fit.mstep");
      detail::read_if(m, "upper", rc.fit.mstep.upper, "fit.mstep");
      auto& o = rc.fit.mstep.optimizer;
      detail::read_if(m, "memory", o.memory, "fit.mstep");
      detail::read_if(m, "grad_tol", o.grad_tol, "fit.mstep");
      detail::read_if(m, "max_iters", o.max_iters, "fit.mstep");
      detail::read_if(m, "sufficient_decrease", o.sufficient_decrease, "fit.mstep");
      detail::read_if(m, "curvature", o.curvature, "fit.mstep");
      detail::read_if(m, "max_line_search", o.max_line_search, "fit.mstep");
    }
  }
  if (j.contains("corpus")) {
    const Json& c = j.at("corpus");
    detail::reject_unknown_keys(c, {"unknown_sources", "unknown_source_name"}, "corpus");
    detail::read_if(c, "unknown_sources", rc.corpus.unknown_sources, "corpus");
    detail::read_if(c, "unknown_source_name", rc.corpus.unknown_source_name, "corpus");
  }
  if (j.contains("report")) {
    const Json& r = j.at("report");
    detail::reject_unknown_keys(r, {"mass", "grid_points"}, "report");
    detail::read_if(r, "mass", rc.report.mass, "report");
    detail::read_if(r, "grid_points", rc.report.grid_points, "report");
  }
  try {
    rc.fit.validate();
  } catch (const DomainError& e) {
    throw ConfigError(e.what());
  }
  if (!(rc.report.mass > 0.0 && rc.report.mass < 1.0)) throw ConfigError("report.mass must lie in (0,1)");
  if (rc.report.grid_points < 2) throw ConfigError("report.grid_points must be at least 2");
  return rc;
}

inline Json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path.string() + "'");
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

inline Json to_json(const FitConfig& c) {
  return Json{{"known_weight", c.known_weight},
              {"flat_weight", c.flat_weight},
              {"estep_tol", c.estep_tol},
              {"estep_max_iters", c.estep_max_iters},
              {"outer_tol", c.outer_tol},
              {"outer_max_iters", c.outer_max_iters},
              {"mstep",
               {{"lower", c.mstep.lower},
                {"upper", c.mstep.upper},
                {"memory", c.mstep.optimizer.memory},
                {"grad_tol", c.mstep.optimizer.grad_tol},
                {"max_iters", c.mstep.optimizer.max_iters},
                {"sufficient_decrease", c.mstep.optimizer.sufficient_decrease},
                {"curvature", c.mstep.optimizer.curvature},
                {"max_line_search", c.mstep.optimizer.max_line_search}}},
              {"rng_seed", c.rng_seed},
              {"lambda_scope", std::string(to_string(c.lambda_scope))},
              {"inverse_count_scaling", c.inverse_count_scaling}};
}

inline Json to_json(const RunConfig& rc) {
  return Json{{"fit", to_json(rc.fit)},
              {"corpus",
               {{"unknown_sources", rc.corpus.unknown_sources},
                {"unknown_source_name", rc.corpus.unknown_source_name}}},
              {"report", {{"mass", rc.report.mass}, {"grid_points", rc.report.grid_points}}}};
}

inline Json to_json(const MarginalSummary& s) {
  Json j;
  j["degenerate"] = !s.shape.has_value();
  if (s.shape) {
    j["a"] = s.shape->a;
    j["b"] = s.shape->b;
  }
  j["mean"] = s.mean;
  j["mode"] = s.mode ? Json(*s.mode) : Json(nullptr);
  j["hpdi"] = {{"lo", s.hpdi.lo},
               {"hi", s.hpdi.hi},
               {"mass", s.hpdi.mass},
               {"equal_tailed_fallback", s.hpdi.equal_tailed_fallback}};
  return j;
}

inline Json to_json(const PosteriorReport& rep) {
  Json j;
  Json thetas = Json::array();
  for (const auto& t : rep.theta_marginals) {
    Json e{{"location", t.location_name}, {"source", t.source_name}};
    e.update(to_json(t.summary));
    thetas.push_back(std::move(e));
  }
  Json betas = Json::array();
  for (const auto& b : rep.beta_marginals) {
    Json e{{"source", b.source_name}, {"type", b.type_name}};
    e.update(to_json(b.summary));
    betas.push_back(std::move(e));
  }
  j["theta_marginals"] = std::move(thetas);
  j["beta_marginals"] = std::move(betas);
  j["provenance"] = {{"config", to_json(rep.config)},
                     {"converged", rep.converged},
                     {"iterations", rep.iterations},
                     {"estep_sweeps", rep.estep_sweeps},
                     {"elbo_trace", detail::vector_json(rep.elbo_trace)},
                     {"hpdi_mass", rep.mass}};
  if (!rep.lambda_diagnostics.empty()) {
    Json diag = Json::array();
    for (const auto& d : rep.lambda_diagnostics) {
      diag.push_back({{"sample", d.sample},
                      {"location", d.location},
                      {"source", d.source},
                      {"normalized", detail::vector_json(d.normalized)}});
    }
    j["lambda_diagnostics"] = std::move(diag);
  }
  return j;
}

/// Everything a later `report` run needs to rebuild the posterior report.
inline Json fit_to_json(const FitResult& fit, const Corpus& corpus) {
  Json locs = Json::array();
  for (const auto& loc : corpus.locations) {
    locs.push_back({{"name", loc.name},
                    {"role", loc.role.is_trace() ? std::string("trace")
                                                 : "known:" + corpus.source_names[loc.role.source()]},
                    {"samples", loc.samples.size()}});
  }
  return Json{{"types", corpus.catalog.names()},
              {"sources", corpus.source_names},
              {"unknown_sources", corpus.unknown_sources},
              {"locations", std::move(locs)},
              {"trace_locations", fit.trace_locations},
              {"H", detail::matrix_json(fit.H_converged.values())},
              {"A", detail::matrix_json(fit.A_full.values())},
              {"elbo_trace", detail::vector_json(fit.elbo_trace)},
              {"estep_sweeps", fit.estep_sweeps},
              {"converged", fit.converged},
              {"iterations", fit.iterations},
              {"config", to_json(fit.config)}};
}

/// Inverse of fit_to_json: a FitResult without variational states and a
/// corpus skeleton carrying names and roles (samples are empty).
inline std::pair<FitResult, Corpus> fit_from_json(const Json& j) {
  try {
    Corpus corpus;
    corpus.catalog = ParticleCatalog(j.at("types").get<std::vector<std::string>>());
    corpus.source_names = j.at("sources").get<std::vector<std::string>>();
    corpus.unknown_sources = j.at("unknown_sources").get<std::size_t>();
    for (const auto& l : j.at("locations")) {
      const auto role = l.at("role").get<std::string>();
      LocationRole r = LocationRole::trace();
      if (role != "trace") {
        const auto m = corpus.source_index(role.substr(6));
        if (!m) throw ConfigError("fit.json: unknown source in role '" + role + "'");
        r = LocationRole::known(*m);
      }
      corpus.locations.push_back(Location{l.at("name").get<std::string>(), r, {}});
    }
    FitResult fit;
    fit.trace_locations = j.at("trace_locations").get<std::vector<std::size_t>>();
    fit.H_converged =
        DirichletMatrix(DirichletMatrix::Role::H, detail::matrix_from_json(j.at("H"), "H"));
    fit.A_full = DirichletMatrix(DirichletMatrix::Role::A, detail::matrix_from_json(j.at("A"), "A"));
    Matrix trace_rows(fit.trace_locations.size(), fit.A_full.cols());
    for (std::size_t r = 0; r < fit.trace_locations.size(); ++r) {
      const auto src = fit.A_full.row(fit.trace_locations.at(r));
      std::copy(src.begin(), src.end(), trace_rows.row(r).begin());
    }
    fit.A_converged = DirichletMatrix(DirichletMatrix::Role::A, std::move(trace_rows));
    for (const auto& e : j.at("elbo_trace")) {
      fit.elbo_trace.push_back(e.is_null() ? std::nan("") : e.get<double>());
    }
    fit.estep_sweeps = j.at("estep_sweeps").get<std::vector<std::size_t>>();
    fit.converged = j.at("converged").get<bool>();
    fit.iterations = j.at("iterations").get<std::size_t>();
    fit.config = parse_config(Json{{"fit", j.at("config")}}).fit;
    return {std::move(fit), std::move(corpus)};
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("fit.json: ") + e.what());
  }
}

/// Study design from JSON. Profiles come either inline or pooled from the
/// named locations of a corpus CSV (resolved relative to base_dir).
inline ScenarioSpec parse_study_spec(const Json& j, const std::filesystem::path& base_dir) {
  detail::reject_unknown_keys(j,
                              {"profiles_csv", "known_location", "unknown_location", "profiles",
                               "type_names", "source_names", "theta_grid", "n_grid", "situation",
                               "second_trace_theta", "samples_per_trace", "known_samples",
                               "known_particles", "replications", "seed"},
                              "spec");
  ScenarioSpec s;
  try {
    if (j.contains("profiles_csv")) {
      std::filesystem::path p = j.at("profiles_csv").get<std::string>();
      if (p.is_relative()) p = base_dir / p;
      const Corpus c = ingest_csv(p);
      const auto known = j.value("known_location", std::string("AT"));
      const auto unknown = j.value("unknown_location", std::string("LQ"));
      const auto lk = c.location_index(known);
      const auto lu = c.location_index(unknown);
      if (!lk || !lu) throw ConfigError("spec: profile locations not found in " + p.string());
      s.type_names = c.catalog.names();
      s.source_names = {known, unknown};
      s.true_profiles = Matrix(2, c.T());
      const auto pk = profiles_from_counts(c.locations[*lk].samples);
      const auto pu = profiles_from_counts(c.locations[*lu].samples);
      std::copy(pk.begin(), pk.end(), s.true_profiles.row(0).begin());
      std::copy(pu.begin(), pu.end(), s.true_profiles.row(1).begin());
    } else {
      s.true_profiles = detail::matrix_from_json(j.at("profiles"), "spec.profiles");
      s.type_names = j.at("type_names").get<std::vector<std::string>>();
      detail::read_if(j, "source_names", s.source_names, "spec");
    }
    s.theta_grid = j.at("theta_grid").get<std::vector<double>>();
    s.n_grid = j.at("n_grid").get<std::vector<std::uint32_t>>();
    const auto situation = j.value("situation", std::string("one_trace"));
    if (situation == "one_trace") {
      s.situation = Situation::one_trace;
    } else if (situation == "two_traces") {
      s.situation = Situation::two_traces;
    } else {
      throw ConfigError("spec.situation must be 'one_trace' or 'two_traces'");
    }
    detail::read_if(j, "second_trace_theta", s.second_trace_theta, "spec");
    detail::read_if(j, "samples_per_trace", s.samples_per_trace, "spec");
    detail::read_if(j, "known_samples", s.known_samples, "spec");
    if (j.contains("known_particles") && !j.at("known_particles").is_null()) {
      s.known_particles = j.at("known_particles").get<std::uint32_t>();
    }
    detail::read_if(j, "replications", s.replications, "spec");
    detail::read_if(j, "seed", s.rng_seed, "spec");
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("spec: ") + e.what());
  }
  try {
    s.validate();
  } catch (const DomainError& e) {
    throw ConfigError(e.what());
  }
  return s;
}

inline Json to_json(const ScenarioSpec& s) {
  return Json{{"type_names", s.type_names},
              {"source_names", s.source_names},
              {"profiles", detail::matrix_json(s.true_profiles)},
              {"theta_grid", s.theta_grid},
              {"n_grid", s.n_grid},
              {"situation", s.situation == Situation::one_trace ? "one_trace" : "two_traces"},
              {"second_trace_theta", s.second_trace_theta},
              {"samples_per_trace", s.samples_per_trace},
              {"known_samples", s.known_samples},
              {"known_particles", s.known_particles ? Json(*s.known_particles) : Json(nullptr)},
              {"replications", s.replications},
              {"seed", s.rng_seed}};
}

}  // namespace dustlda::io

#endif  // DUSTLDA_IO_JSON_HPP
