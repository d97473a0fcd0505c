// Apache License, Version 2.0, refer to LICENSE.txt

#ifndef DUSTLDA_CLI_COMMANDS_HPP
#define DUSTLDA_CLI_COMMANDS_HPP

#include <array>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <memory>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <openssl/evp.h>

#include "dustlda/error.hpp"
#include "dustlda/io/csv.hpp"
#include "dustlda/io/json.hpp"
#include "dustlda/posterior.hpp"
#include "dustlda/simulator.hpp"
#include "dustlda/vbi/fit.hpp"

namespace dustlda::cli {

using io::to_json;

inline constexpr const char* kToolVersion = "1.0.0";

enum ExitCode : int { kOk = 0, kError = 1, kNotConverged = 2 };

struct CommonOptions {
  std::optional<std::filesystem::path> config;
  std::filesystem::path out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads;
  bool verbose = false;
  bool overwrite = false;
  std::optional<std::size_t> unknown_sources;
};

/// Hex SHA-256 of a byte string.
inline std::string sha256_hex(std::string_view bytes) {
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 ||
      EVP_DigestFinal_ex(ctx.get(), digest.data(), &len) != 1) {
    throw std::runtime_error("SHA-256 computation failed");
  }
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) {
    os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
  }
  return os.str();
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IngestionError("cannot open '" + p.string() + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

inline io::Json file_record(const std::filesystem::path& p) {
  const std::string bytes = read_file(p);
  return io::Json{{"path", p.string()}, {"bytes", bytes.size()}, {"sha256", sha256_hex(bytes)}};
}

/// Creates the output directory; an existing non-empty directory is only
/// reused when overwrite is set.
inline void prepare_out_dir(const std::filesystem::path& out, bool overwrite) {
  namespace fs = std::filesystem;
  if (out.empty()) throw IngestionError("no output directory given (--out)");
  if (fs::exists(out)) {
    if (!fs::is_directory(out)) throw IngestionError("'" + out.string() + "' is not a directory");
    if (!fs::is_empty(out) && !overwrite) {
      throw IngestionError("output directory '" + out.string() +
                           "' is not empty; use a fresh directory or --overwrite");
    }
  }
  fs::create_directories(out);
}

/// File-name-safe form of a label.
inline std::string sanitize(std::string_view s) {
  std::string out;
  for (char c : s) {
    const bool keep = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                      c == '-' || c == '.';
    out += keep ? c : '_';
  }
  return out;
}

class OutputSet {
 public:
  explicit OutputSet(std::filesystem::path dir) : dir_(std::move(dir)) {}

  void write(const std::string& name, const std::string& content) {
    const auto path = dir_ / name;
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IngestionError("cannot write '" + path.string() + "'");
    os << content;
    if (!os) throw IngestionError("write failed for '" + path.string() + "'");
    files_.push_back({{"path", name}, {"bytes", content.size()}, {"sha256", sha256_hex(content)}});
  }

  const io::Json& files() const noexcept { return files_; }
  const std::filesystem::path& dir() const noexcept { return dir_; }

 private:
  std::filesystem::path dir_;
  io::Json files_ = io::Json::array();
};

inline std::string num(double v) { return io::format_double(v); }

inline std::string curve_csv(const DensityCurve& c) {
  std::string s = "x,density\n";
  for (std::size_t i = 0; i < c.x.size(); ++i) s += num(c.x[i]) + "," + num(c.density[i]) + "\n";
  return s;
}

inline void summary_row(std::string& s, const std::string& kind, const std::string& a,
                        const std::string& b, const MarginalSummary& m) {
  s += kind + "," + a + "," + b + "," + (m.shape ? num(m.shape->a) : "") + "," +
       (m.shape ? num(m.shape->b) : "") + "," + num(m.mean) + "," + (m.mode ? num(*m.mode) : "") +
       "," + num(m.hpdi.lo) + "," + num(m.hpdi.hi) + "," + (m.hpdi.equal_tailed_fallback ? "1" : "0") +
       "\n";
}

/// report.json, one density CSV per marginal and summary.csv.
inline void write_report(OutputSet& out, const PosteriorReport& rep) {
  out.write("report.json", to_json(rep).dump(2) + "\n");
  std::string summary = "kind,group,member,a,b,mean,mode,hpdi_lo,hpdi_hi,equal_tailed_fallback\n";
  for (const auto& t : rep.theta_marginals) {
    out.write("theta_" + sanitize(t.location_name) + "_" + sanitize(t.source_name) + ".csv",
              curve_csv(t.summary.curve));
    summary_row(summary, "theta", t.location_name, t.source_name, t.summary);
  }
  for (const auto& b : rep.beta_marginals) {
    out.write("beta_" + sanitize(b.source_name) + "_" + sanitize(b.type_name) + ".csv",
              curve_csv(b.summary.curve));
    summary_row(summary, "beta", b.source_name, b.type_name, b.summary);
  }
  out.write("summary.csv", summary);
}

inline std::string elbo_csv(const std::vector<double>& trace, const std::vector<std::size_t>& sweeps) {
  std::string s = "iteration,elbo,estep_sweeps\n";
  for (std::size_t i = 0; i < trace.size(); ++i) {
    s += std::to_string(i + 1) + "," + num(trace[i]) + "," +
         (i < sweeps.size() ? std::to_string(sweeps[i]) : "") + "\n";
  }
  return s;
}

inline io::RunConfig load_run_config(const CommonOptions& opts) {
  io::RunConfig rc = opts.config ? io::parse_config(io::read_json_file(*opts.config))
                                 : io::parse_config(io::Json(nullptr));
  if (opts.seed) rc.fit.rng_seed = *opts.seed;
  if (opts.threads) rc.fit.threads = *opts.threads;
  if (opts.unknown_sources) rc.corpus.unknown_sources = *opts.unknown_sources;
  rc.report.lambda_diagnostics = opts.verbose;
  return rc;
}

inline io::Json manifest_base(const std::string& command, const CommonOptions& opts) {
  io::Json m;
  m["tool"] = "dustlda";
  m["version"] = kToolVersion;
  m["command"] = command;
  m["inputs"] = io::Json::array();
  if (opts.config) m["inputs"].push_back(file_record(*opts.config));
  return m;
}

template <class Fn>
int guarded(std::ostream& err, Fn&& fn) {
  try {
    return fn();
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kError;
  }
}

/// Fits a corpus CSV and writes the report, curves, ELBO trace, the fitted
/// parameters and a manifest.
inline int cmd_fit(const std::filesystem::path& corpus_path, const CommonOptions& opts,
                   std::ostream& log, std::ostream& err) {
  return guarded(err, [&] {
    const auto start = std::chrono::steady_clock::now();
    const io::RunConfig rc = load_run_config(opts);
    const Corpus corpus = io::ingest_csv(corpus_path, rc.corpus);
    prepare_out_dir(opts.out, opts.overwrite);

    FitObserver observer;
    if (opts.verbose) {
      observer.on_mstep = [&](std::size_t outer, double total) {
        log << "outer " << outer + 1 << " bound after M-step " << num(total) << "\n";
      };
    }
    const FitResult res = fit(corpus, rc.fit, opts.verbose ? &observer : nullptr);
    const PosteriorReport rep = build_report(res, corpus, rc.report);

    OutputSet out(opts.out);
    write_report(out, rep);
    out.write("elbo_trace.csv", elbo_csv(res.elbo_trace, res.estep_sweeps));
    out.write("fit.json", io::fit_to_json(res, corpus).dump(2) + "\n");

    io::Json manifest = manifest_base("fit", opts);
    manifest["inputs"].push_back(file_record(corpus_path));
    manifest["config"] = io::to_json(rc);
    manifest["threads"] = rc.fit.threads;
    manifest["converged"] = res.converged;
    manifest["iterations"] = res.iterations;
    manifest["estep_sweeps_total"] = std::accumulate(res.estep_sweeps.begin(), res.estep_sweeps.end(),
                                                     std::size_t{0});
    manifest["outputs"] = out.files();
    manifest["wall_clock_seconds"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    out.write("manifest.json", manifest.dump(2) + "\n");

    log << (res.converged ? "converged" : "not converged") << " after " << res.iterations
        << " iterations; outputs in " << opts.out.string() << "\n";
    for (const auto& t : rep.theta_marginals) {
      log << "  theta[" << t.location_name << "," << t.source_name << "] mean " << num(t.summary.mean)
          << " hpdi [" << num(t.summary.hpdi.lo) << ", " << num(t.summary.hpdi.hi) << "]\n";
    }
    return res.converged ? kOk : kNotConverged;
  });
}

inline std::string records_csv(const ScenarioSpec& spec, const StudyResults& r) {
  const std::size_t traces = spec.situation == Situation::two_traces ? 2 : 1;
  std::string s = "cell,replication,theta_known_truth,n,ok,converged,iterations";
  for (std::size_t u = 1; u <= traces; ++u) {
    const std::string e = "_e" + std::to_string(u);
    s += ",truth_unknown" + e + ",theta_unknown_mean" + e + ",theta_unknown_mode" + e +
         ",sample_theta_unknown_mean" + e;
  }
  for (const auto& t : spec.type_names) s += ",beta_known_mean_" + sanitize(t);
  for (const auto& t : spec.type_names) s += ",beta_unknown_mean_" + sanitize(t);
  s += ",error\n";
  const std::size_t T = spec.type_names.size();
  for (const auto& rec : r.records) {
    s += std::to_string(rec.cell) + "," + std::to_string(rec.replication) + "," +
         num(rec.theta_known_truth) + "," + std::to_string(rec.n) + "," + (rec.ok ? "1" : "0") + "," +
         (rec.converged ? "1" : "0") + "," + std::to_string(rec.iterations);
    for (std::size_t u = 0; u < traces; ++u) {
      if (rec.ok) {
        s += "," + num(rec.truth_unknown[u]) + "," + num(rec.theta_unknown_mean[u]) + "," +
             (std::isnan(rec.theta_unknown_mode[u]) ? "" : num(rec.theta_unknown_mode[u])) + "," +
             num(rec.sample_theta_unknown_mean[u]);
      } else {
        s += ",,,,";
      }
    }
    for (std::size_t t = 0; t < T; ++t) s += "," + (rec.ok ? num(rec.beta_known_mean[t]) : "");
    for (std::size_t t = 0; t < T; ++t) s += "," + (rec.ok ? num(rec.beta_unknown_mean[t]) : "");
    std::string e = rec.error;
    for (char& c : e) {
      if (c == ',' || c == '\n') c = ';';
    }
    s += "," + e + "\n";
  }
  return s;
}

inline std::string cells_csv(const ScenarioSpec& spec, const StudyResults& r) {
  const std::size_t traces = spec.situation == Situation::two_traces ? 2 : 1;
  std::string s = "cell,theta_known_truth,n,replications_ok";
  for (std::size_t u = 1; u <= traces; ++u) {
    const std::string e = "_e" + std::to_string(u);
    s += ",truth_unknown" + e + ",theta_unknown_mean" + e + ",theta_unknown_mode" + e +
         ",abs_error_mean" + e;
  }
  for (const auto& t : spec.type_names) s += ",beta_known_mean_" + sanitize(t);
  for (const auto& t : spec.type_names) s += ",beta_unknown_mean_" + sanitize(t);
  s += "\n";
  for (const auto& a : r.cells) {
    s += std::to_string(a.cell) + "," + num(a.theta_known_truth) + "," + std::to_string(a.n) + "," +
         std::to_string(a.replications_ok);
    for (std::size_t u = 0; u < traces; ++u) {
      s += "," + num(a.truth_unknown[u]) + "," + num(a.theta_unknown_mean[u]) + "," +
           num(a.theta_unknown_mode[u]) + "," + num(a.abs_error_mean[u]);
    }
    for (double v : a.beta_known_mean) s += "," + num(v);
    for (double v : a.beta_unknown_mean) s += "," + num(v);
    s += "\n";
  }
  return s;
}

/// Runs a simulation study and writes per-replication and per-cell CSVs.
inline int cmd_simulate(const std::filesystem::path& spec_path, const CommonOptions& opts,
                        std::ostream& log, std::ostream& err) {
  return guarded(err, [&] {
    const auto start = std::chrono::steady_clock::now();
    const io::RunConfig rc = load_run_config(opts);
    ScenarioSpec spec =
        io::parse_study_spec(io::read_json_file(spec_path), spec_path.parent_path());
    if (opts.seed) spec.rng_seed = *opts.seed;
    prepare_out_dir(opts.out, opts.overwrite);

    const StudyResults res = run_study(spec, rc.fit, rc.fit.threads);
    OutputSet out(opts.out);
    out.write("study_records.csv", records_csv(spec, res));
    out.write("study_cells.csv", cells_csv(spec, res));

    std::size_t failed = 0;
    std::size_t unconverged = 0;
    for (const auto& r : res.records) {
      if (!r.ok) ++failed;
      else if (!r.converged) ++unconverged;
    }
    io::Json manifest = manifest_base("simulate", opts);
    manifest["inputs"].push_back(file_record(spec_path));
    manifest["config"] = io::to_json(rc);
    manifest["spec"] = io::to_json(spec);
    manifest["threads"] = rc.fit.threads;
    manifest["cells"] = spec.cells();
    manifest["replications"] = spec.replications;
    manifest["failed_fits"] = failed;
    manifest["unconverged_fits"] = unconverged;
    manifest["outputs"] = out.files();
    manifest["wall_clock_seconds"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    out.write("manifest.json", manifest.dump(2) + "\n");

    log << spec.cells() << " cells x " << spec.replications << " replications; " << failed
        << " failed, " << unconverged << " not converged; outputs in " << opts.out.string() << "\n";
    return (failed == 0 && unconverged == 0) ? kOk : kNotConverged;
  });
}

/// Rebuilds the posterior report from a previous fit's fit.json.
inline int cmd_report(const std::filesystem::path& fit_path, const CommonOptions& opts,
                      std::ostream& log, std::ostream& err) {
  return guarded(err, [&] {
    namespace fs = std::filesystem;
    const fs::path json_path = fs::is_directory(fit_path) ? fit_path / "fit.json" : fit_path;
    const io::RunConfig rc = load_run_config(opts);
    auto [res, corpus] = io::fit_from_json(io::read_json_file(json_path));
    prepare_out_dir(opts.out, opts.overwrite);
    ReportOptions ro = rc.report;
    ro.lambda_diagnostics = false;  // variational states are not stored
    const PosteriorReport rep = build_report(res, corpus, ro);
    OutputSet out(opts.out);
    write_report(out, rep);
    io::Json manifest = manifest_base("report", opts);
    manifest["inputs"].push_back(file_record(json_path));
    manifest["outputs"] = out.files();
    out.write("manifest.json", manifest.dump(2) + "\n");
    log << "report written to " << opts.out.string() << "\n";
    return kOk;
  });
}

}  // namespace dustlda::cli

#endif  // DUSTLDA_CLI_COMMANDS_HPP
