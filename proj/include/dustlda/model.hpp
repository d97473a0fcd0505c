// Apache License, Version 2.0, refer to LICENSE.txt

#ifndef DUSTLDA_MODEL_HPP
#define DUSTLDA_MODEL_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "dustlda/error.hpp"
#include "dustlda/matrix.hpp"

namespace dustlda {

/// Ordered set of particle-type labels (the vocabulary).
class ParticleCatalog {
 public:
  ParticleCatalog() = default;
  explicit ParticleCatalog(std::vector<std::string> names) : names_(std::move(names)) {
    if (names_.size() < 2) throw IngestionError("particle catalog needs at least two types");
    for (std::size_t t = 0; t < names_.size(); ++t) {
      if (!index_.emplace(names_[t], t).second) {
        throw IngestionError("duplicate particle type '" + names_[t] + "'");
      }
    }
  }

  std::size_t size() const noexcept { return names_.size(); }
  const std::vector<std::string>& names() const noexcept { return names_; }
  const std::string& name(std::size_t t) const { return names_.at(t); }

  std::optional<std::size_t> index_of(std::string_view label) const {
    auto it = index_.find(std::string(label));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  friend bool operator==(const ParticleCatalog& a, const ParticleCatalog& b) {
    return a.names_ == b.names_;
  }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Per-type particle counts for one dust sample.
struct SampleCounts {
  std::vector<std::uint32_t> counts;
  std::size_t location_id = 0;
  std::size_t sample_index = 0;

  std::uint64_t total() const noexcept {
    return std::accumulate(counts.begin(), counts.end(), std::uint64_t{0});
  }
  std::size_t types() const noexcept { return counts.size(); }

  friend bool operator==(const SampleCounts&, const SampleCounts&) = default;
};

/// A location is either the single-source home of a known source or a trace.
class LocationRole {
 public:
  enum class Kind { known_source, trace };

  static LocationRole known(std::size_t source) { return LocationRole(Kind::known_source, source); }
  static LocationRole trace() { return LocationRole(Kind::trace, 0); }

  Kind kind() const noexcept { return kind_; }
  bool is_trace() const noexcept { return kind_ == Kind::trace; }
  bool is_known() const noexcept { return kind_ == Kind::known_source; }
  /// Index of the claimed source; only meaningful for known locations.
  std::size_t source() const {
    if (!is_known()) throw ContractViolation("trace location has no source index");
    return source_;
  }

  friend bool operator==(const LocationRole&, const LocationRole&) = default;

 private:
  LocationRole(Kind k, std::size_t s) : kind_(k), source_(s) {}
  Kind kind_;
  std::size_t source_;
};

struct Location {
  std::string name;
  LocationRole role = LocationRole::trace();
  std::vector<SampleCounts> samples;
};

/// All samples grouped by location.
///
/// Sources are indexed 0..M-1. The first K = M - Q are known and each is
/// claimed by exactly one location; the last Q are unknown.
struct Corpus {
  ParticleCatalog catalog;
  std::vector<Location> locations;
  std::vector<std::string> source_names;
  std::size_t unknown_sources = 0;

  std::size_t T() const noexcept { return catalog.size(); }
  std::size_t M() const noexcept { return source_names.size(); }
  std::size_t Q() const noexcept { return unknown_sources; }
  std::size_t K() const noexcept { return M() >= Q() ? M() - Q() : 0; }
  std::size_t L() const noexcept { return locations.size(); }

  std::size_t sample_count() const noexcept {
    std::size_t n = 0;
    for (const auto& loc : locations) n += loc.samples.size();
    return n;
  }

  std::vector<std::size_t> trace_locations() const {
    std::vector<std::size_t> out;
    for (std::size_t l = 0; l < locations.size(); ++l) {
      if (locations[l].role.is_trace()) out.push_back(l);
    }
    return out;
  }

  std::optional<std::size_t> location_index(std::string_view name) const {
    for (std::size_t l = 0; l < locations.size(); ++l) {
      if (locations[l].name == name) return l;
    }
    return std::nullopt;
  }

  std::optional<std::size_t> source_index(std::string_view name) const {
    for (std::size_t m = 0; m < source_names.size(); ++m) {
      if (source_names[m] == name) return m;
    }
    return std::nullopt;
  }
};

/// Rows of Dirichlet parameters: H (M x T source profiles) or A (L x M
/// location mixing priors).
class DirichletMatrix {
 public:
  enum class Role { H, A };

  DirichletMatrix() = default;
  DirichletMatrix(Role role, Matrix values) : role_(role), values_(std::move(values)) { validate(); }
  DirichletMatrix(Role role, std::size_t rows, std::size_t cols, double fill)
      : DirichletMatrix(role, Matrix(rows, cols, fill)) {}

  void validate() const {
    for (double v : values_.data()) {
      if (!(v > 0.0) || !std::isfinite(v)) {
        throw DomainError(std::string(role_ == Role::H ? "H" : "A") +
                          ": Dirichlet parameters must be positive and finite");
      }
    }
  }

  Role role() const noexcept { return role_; }
  std::size_t rows() const noexcept { return values_.rows(); }
  std::size_t cols() const noexcept { return values_.cols(); }
  std::span<const double> row(std::size_t r) const noexcept { return values_.row(r); }
  double operator()(std::size_t r, std::size_t c) const noexcept { return values_(r, c); }
  const Matrix& values() const noexcept { return values_; }

  /// Replaces one row; the new values must be positive and finite.
  void set_row(std::size_t r, std::span<const double> v) {
    if (v.size() != values_.cols()) throw ContractViolation("DirichletMatrix::set_row: width mismatch");
    for (double x : v) {
      if (!(x > 0.0) || !std::isfinite(x)) {
        throw DomainError("DirichletMatrix::set_row: entries must be positive and finite");
      }
    }
    std::copy(v.begin(), v.end(), values_.row(r).begin());
  }

  friend bool operator==(const DirichletMatrix&, const DirichletMatrix&) = default;

 private:
  Role role_ = Role::H;
  Matrix values_;
};

/// Variational parameters of one sample.
///
/// phi is T x M with one row per particle type (all particles of a type
/// share a responsibility vector). lambda is M x T when it is held per
/// sample and empty when the fit keeps a single corpus-wide lambda.
struct VariationalState {
  std::vector<double> gamma;
  Matrix lambda;
  Matrix phi;
  double elbo = 0.0;
  std::size_t iterations = 0;
};

struct Violation {
  std::string invariant;
  std::string detail;
};

/// Expands a list of particle labels into per-type counts.
inline SampleCounts collapse_to_counts(std::span<const std::string> labels,
                                       const ParticleCatalog& catalog,
                                       std::size_t location_id = 0, std::size_t sample_index = 0) {
  if (labels.empty()) throw IngestionError("sample has no particles (N must be at least 1)");
  SampleCounts out{std::vector<std::uint32_t>(catalog.size(), 0), location_id, sample_index};
  for (const auto& label : labels) {
    auto t = catalog.index_of(label);
    if (!t) throw IngestionError("unknown particle type '" + label + "'");
    ++out.counts[*t];
  }
  return out;
}

/// Inverse of collapse_to_counts, in catalog order.
inline std::vector<std::string> expand_to_labels(const SampleCounts& sample,
                                                 const ParticleCatalog& catalog) {
  std::vector<std::string> out;
  for (std::size_t t = 0; t < sample.counts.size(); ++t) {
    out.insert(out.end(), sample.counts[t], catalog.name(t));
  }
  return out;
}

/// One record per broken corpus invariant; empty when the corpus is usable.
inline std::vector<Violation> validate_corpus(const Corpus& corpus) {
  std::vector<Violation> out;
  const auto add = [&](std::string inv, std::string detail) {
    out.push_back({std::move(inv), std::move(detail)});
  };
  const std::size_t T = corpus.T();
  if (T < 2) add("catalog", "need at least two particle types");
  if (corpus.Q() > 1) {
    add("unknown_sources",
        "at most one unknown source is supported, got Q=" + std::to_string(corpus.Q()));
  }
  if (corpus.M() < 1) add("sources", "need at least one source (M >= 1)");
  if (corpus.Q() > corpus.M()) add("sources", "Q exceeds the number of sources");
  if (corpus.locations.empty()) add("locations", "corpus has no locations");

  std::set<std::string> names(corpus.source_names.begin(), corpus.source_names.end());
  if (names.size() != corpus.source_names.size()) add("sources", "duplicate source names");

  std::vector<std::size_t> claims(corpus.M(), 0);
  std::set<std::string> location_names;
  for (std::size_t l = 0; l < corpus.locations.size(); ++l) {
    const auto& loc = corpus.locations[l];
    const std::string where = "location " + std::to_string(l) + " ('" + loc.name + "')";
    if (!location_names.insert(loc.name).second) add("locations", "duplicate " + where);
    if (loc.role.is_known()) {
      const std::size_t m = loc.role.source();
      if (m >= corpus.K()) {
        add("known_source", where + " claims source " + std::to_string(m) +
                                " which is not a known source");
      } else {
        ++claims[m];
      }
    }
    if (loc.samples.empty()) add("samples", where + " has no samples");
    for (std::size_t s = 0; s < loc.samples.size(); ++s) {
      const auto& sample = loc.samples[s];
      const std::string at = where + " sample " + std::to_string(s);
      if (sample.counts.size() != T) {
        add("sample_length", at + " has " + std::to_string(sample.counts.size()) +
                                 " counts, catalog has " + std::to_string(T));
      }
      if (sample.total() < 1) add("sample_total", at + " has no particles");
      if (sample.location_id != l) add("location_id", at + " has location_id " +
                                                          std::to_string(sample.location_id));
    }
  }
  for (std::size_t m = 0; m < corpus.K() && m < claims.size(); ++m) {
    if (claims[m] == 0) {
      add("known_source", "known source " + std::to_string(m) + " ('" + corpus.source_names[m] +
                              "') is not claimed by any location");
    } else if (claims[m] > 1) {
      add("known_source", "known source " + std::to_string(m) + " ('" + corpus.source_names[m] +
                              "') is claimed by " + std::to_string(claims[m]) + " locations");
    }
  }
  return out;
}

/// Thrown when a corpus that breaks its invariants is handed to the engine.
class InvalidCorpus : public IngestionError {
 public:
  explicit InvalidCorpus(std::vector<Violation> v)
      : IngestionError(summarize(v)), violations_(std::move(v)) {}
  const std::vector<Violation>& violations() const noexcept { return violations_; }

 private:
  static std::string summarize(const std::vector<Violation>& v) {
    std::string out = "invalid corpus:";
    for (const auto& x : v) out += " [" + x.invariant + "] " + x.detail + ";";
    return out;
  }
  std::vector<Violation> violations_;
};

inline void require_valid(const Corpus& corpus) {
  auto v = validate_corpus(corpus);
  if (!v.empty()) throw InvalidCorpus(std::move(v));
}

/// Index of each location's first sample in the flattened sample order;
/// the last entry is the total sample count.
inline std::vector<std::size_t> sample_offsets(const Corpus& corpus) {
  std::vector<std::size_t> out(corpus.locations.size() + 1, 0);
  for (std::size_t l = 0; l < corpus.locations.size(); ++l) {
    out[l + 1] = out[l] + corpus.locations[l].samples.size();
  }
  return out;
}

/// Convenience builder: appends a location and fixes sample bookkeeping.
inline void add_location(Corpus& corpus, std::string name, LocationRole role,
                         std::vector<std::vector<std::uint32_t>> samples) {
  Location loc{std::move(name), role, {}};
  const std::size_t l = corpus.locations.size();
  for (std::size_t s = 0; s < samples.size(); ++s) {
    loc.samples.push_back(SampleCounts{std::move(samples[s]), l, s});
  }
  corpus.locations.push_back(std::move(loc));
}

}  // namespace dustlda

#endif  // DUSTLDA_MODEL_HPP
