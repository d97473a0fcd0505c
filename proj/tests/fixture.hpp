// Apache License, Version 2.0, refer to LICENSE.txt
//
// Shared access to the bundled AT/LQ fixture for the test suites.

#ifndef DUSTLDA_TESTS_FIXTURE_HPP
#define DUSTLDA_TESTS_FIXTURE_HPP

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "dustlda/io/csv.hpp"

namespace dustlda::test {

inline std::filesystem::path data_dir() { return DUSTLDA_DATA_DIR; }
inline std::filesystem::path fixture_path() { return data_dir() / "at_lq.csv"; }

inline std::vector<std::string> fixture_lines() {
  std::ifstream in(fixture_path());
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

inline Corpus load_fixture() { return io::ingest_csv(fixture_path()); }

/// Fixture with the rows of `drop` removed and that source declared unknown.
inline Corpus fixture_without(const std::string& drop) {
  std::ostringstream os;
  for (const auto& line : fixture_lines()) {
    if (line.rfind(drop + ",", 0) != 0) os << line << '\n';
  }
  std::istringstream is(os.str());
  return io::ingest_csv(is, {1, drop}, "fixture-" + drop);
}

/// Fixture restricted to the known locations, no trace samples.
inline Corpus fixture_known_only() {
  std::ostringstream os;
  for (const auto& line : fixture_lines()) {
    if (line.find(",trace,") == std::string::npos) os << line << '\n';
  }
  std::istringstream is(os.str());
  return io::ingest_csv(is, {}, "fixture-known");
}

/// Pooled per-type frequencies of the rows whose location column is `loc`,
/// summed straight from the CSV text.
inline std::vector<double> pooled_frequencies(const std::string& loc) {
  std::vector<double> sums;
  double total = 0.0;
  for (const auto& line : fixture_lines()) {
    if (line.rfind(loc + ",", 0) != 0) continue;
    std::istringstream is(line);
    std::string field;
    std::getline(is, field, ',');
    std::getline(is, field, ',');
    std::size_t t = 0;
    while (std::getline(is, field, ',')) {
      if (sums.size() <= t) sums.push_back(0.0);
      const double v = std::stod(field);
      sums[t++] += v;
      total += v;
    }
  }
  for (double& s : sums) s /= total;
  return sums;
}

}  // namespace dustlda::test

#endif  // DUSTLDA_TESTS_FIXTURE_HPP
