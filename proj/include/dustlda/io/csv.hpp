// Apache License, Version 2.0, refer to LICENSE.txt

#ifndef DUSTLDA_IO_CSV_HPP
#define DUSTLDA_IO_CSV_HPP

#include <charconv>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "dustlda/error.hpp"
#include "dustlda/model.hpp"

namespace dustlda::io {

/// Splits one CSV line. Double-quoted fields may contain commas and "" escapes.
inline std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> out;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        field += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(field));
      field.clear();
    } else if (c != '\r') {
      field += c;
    }
  }
  out.push_back(std::move(field));
  for (auto& f : out) {
    const auto b = f.find_first_not_of(" \t");
    const auto e = f.find_last_not_of(" \t");
    f = b == std::string::npos ? std::string{} : f.substr(b, e - b + 1);
  }
  return out;
}

struct IngestOptions {
  std::size_t unknown_sources = 0;
  std::string unknown_source_name = "unknown";
};

/// Reads a corpus from CSV text with header `location,role,<type names...>`
/// and one row per sample; role is `known:<source>` or `trace`.
inline Corpus ingest_csv(std::istream& in, const IngestOptions& opts = {},
                         const std::string& origin = "<stream>") {
  const auto fail = [&](std::size_t row, std::size_t col, const std::string& msg) -> IngestionError {
    return IngestionError(origin + ":" + std::to_string(row) + ":" + std::to_string(col) + ": " +
                          msg);
  };
  std::string line;
  std::size_t row = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++row;
    if (line.find_first_not_of(" \t\r") != std::string::npos) {
      header = split_csv_line(line);
      break;
    }
  }
  if (header.empty()) throw IngestionError(origin + ": empty file");
  if (header.size() < 4 || header[0] != "location" || header[1] != "role") {
    throw fail(row, 1, "header must be 'location,role,<at least two particle types>'");
  }
  Corpus corpus;
  try {
    corpus.catalog = ParticleCatalog(std::vector<std::string>(header.begin() + 2, header.end()));
  } catch (const IngestionError& e) {
    throw fail(row, 3, e.what());
  }
  const std::size_t T = corpus.catalog.size();

  std::vector<std::string> known_claimants;  // location name per known source
  while (std::getline(in, line)) {
    ++row;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != T + 2) {
      throw fail(row, fields.size(), "expected " + std::to_string(T + 2) + " columns, found " +
                                         std::to_string(fields.size()));
    }
    const std::string& name = fields[0];
    if (name.empty()) throw fail(row, 1, "empty location name");
    const std::string& role_text = fields[1];
    LocationRole role = LocationRole::trace();
    if (role_text == "trace") {
      role = LocationRole::trace();
    } else if (role_text.rfind("known:", 0) == 0 && role_text.size() > 6) {
      const std::string source = role_text.substr(6);
      std::size_t m = 0;
      while (m < corpus.source_names.size() && corpus.source_names[m] != source) ++m;
      if (m == corpus.source_names.size()) {
        corpus.source_names.push_back(source);
        known_claimants.push_back(name);
      } else if (known_claimants[m] != name) {
        throw fail(row, 2, "duplicate known-source claim: source '" + source +
                               "' already claimed by location '" + known_claimants[m] + "'");
      }
      role = LocationRole::known(m);
    } else {
      throw fail(row, 2, "unknown role '" + role_text + "' (expected 'known:<source>' or 'trace')");
    }

    std::vector<std::uint32_t> counts(T);
    for (std::size_t t = 0; t < T; ++t) {
      const std::string& f = fields[t + 2];
      long long v = 0;
      const auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
      if (ec != std::errc{} || ptr != f.data() + f.size()) {
        throw fail(row, t + 3, "count '" + f + "' is not an integer");
      }
      if (v < 0) throw fail(row, t + 3, "negative count " + f);
      if (v > static_cast<long long>(UINT32_MAX)) throw fail(row, t + 3, "count too large");
      counts[t] = static_cast<std::uint32_t>(v);
    }

    auto l = corpus.location_index(name);
    if (!l) {
      corpus.locations.push_back(Location{name, role, {}});
      l = corpus.locations.size() - 1;
    } else if (!(corpus.locations[*l].role == role)) {
      throw fail(row, 2, "location '" + name + "' appears with conflicting roles");
    }
    auto& loc = corpus.locations[*l];
    SampleCounts sample{std::move(counts), *l, loc.samples.size()};
    if (sample.total() == 0) throw fail(row, 3, "sample has no particles");
    loc.samples.push_back(std::move(sample));
  }
  if (corpus.locations.empty()) throw IngestionError(origin + ": no sample rows");

  corpus.unknown_sources = opts.unknown_sources;
  for (std::size_t q = 0; q < opts.unknown_sources; ++q) {
    corpus.source_names.push_back(opts.unknown_sources == 1
                                      ? opts.unknown_source_name
                                      : opts.unknown_source_name + std::to_string(q + 1));
  }
  auto violations = validate_corpus(corpus);
  if (!violations.empty()) throw InvalidCorpus(std::move(violations));
  return corpus;
}

inline Corpus ingest_csv(const std::filesystem::path& path, const IngestOptions& opts = {}) {
  std::ifstream in(path);
  if (!in) throw IngestionError("cannot open '" + path.string() + "'");
  return ingest_csv(in, opts, path.string());
}

/// Writes the corpus back in the ingestion format.
inline void write_corpus_csv(std::ostream& out, const Corpus& corpus) {
  out << "location,role";
  for (const auto& n : corpus.catalog.names()) out << ',' << n;
  out << '\n';
  for (const auto& loc : corpus.locations) {
    const std::string role =
        loc.role.is_trace() ? "trace" : "known:" + corpus.source_names[loc.role.source()];
    for (const auto& s : loc.samples) {
      out << loc.name << ',' << role;
      for (auto c : s.counts) out << ',' << c;
      out << '\n';
    }
  }
}

/// Shortest round-trip decimal form of a double, independent of locale.
inline std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return ec == std::errc{} ? std::string(buf, ptr) : std::string("nan");
}

}  // namespace dustlda::io

#endif  // DUSTLDA_IO_CSV_HPP
