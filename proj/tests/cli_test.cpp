// Apache License, Version 2.0, refer to LICENSE.txt

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include <sys/wait.h>
#include <unistd.h>

#include "dustlda/cli/commands.hpp"
#include "fixture.hpp"

namespace {

using namespace dustlda;
namespace fs = std::filesystem;

class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    path_ = fs::temp_directory_path() /
            ("dustlda_cli_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& s) const { return path_ / s; }

 private:
  fs::path path_;
};

void write_text(const fs::path& p, const std::string& s) {
  std::ofstream(p, std::ios::binary) << s;
}

std::string ingest_error(const std::string& text, const io::IngestOptions& opts = {}) {
  std::istringstream in(text);
  try {
    io::ingest_csv(in, opts, "mem.csv");
  } catch (const InvalidCorpus& e) {
    return std::string("invalid: ") + e.what();
  } catch (const IngestionError& e) {
    return e.what();
  }
  return "";
}

const std::string kHeader = "location,role,a,b,c\n";

TEST(IngestCsv, Fixture) {
  const Corpus c = io::ingest_csv(test::fixture_path());
  EXPECT_EQ(c.T(), 14u);
  EXPECT_EQ(c.sample_count(), 26u);
  EXPECT_EQ(c.K(), 2u);
  EXPECT_EQ(c.M(), 2u);
  const auto e1 = c.location_index("e1");
  ASSERT_TRUE(e1.has_value());
  const std::vector<std::uint32_t> trace1{312, 31, 5, 12, 5, 16, 9, 7, 1, 32, 12, 151, 1, 17};
  const auto& s = c.locations[*e1].samples.at(0);
  EXPECT_EQ(s.counts, trace1);
}

TEST(IngestCsv, EmptyFile) {
  EXPECT_NE(ingest_error("").find("empty file"), std::string::npos);
  EXPECT_NE(ingest_error("\n  \n").find("empty file"), std::string::npos);
}

TEST(IngestCsv, BadHeader) {
  EXPECT_NE(ingest_error("loc,role,a,b\nx,trace,1,2\n").find("mem.csv:1:1"), std::string::npos);
  EXPECT_NE(ingest_error("location,role,a\nx,trace,1\n").find("mem.csv:1:1"), std::string::npos);
}

TEST(IngestCsv, ErrorsCarryRowAndColumn) {
  EXPECT_NE(ingest_error(kHeader + "K,known:K,1,2,3\nx,trace,1,2\n").find("mem.csv:3:4"),
            std::string::npos);
  EXPECT_NE(ingest_error(kHeader + "K,known:K,1,2,3\nx,trace,1,-2,3\n").find("mem.csv:3:4"),
            std::string::npos);
  EXPECT_NE(ingest_error(kHeader + "K,known:K,1,2,3\nx,trace,1,2,z\n").find("mem.csv:3:5"),
            std::string::npos);
  EXPECT_NE(ingest_error(kHeader + "K,known:K,1,2,3\nx,mystery,1,2,3\n").find("mem.csv:3:2"),
            std::string::npos);
  const auto dup = ingest_error(kHeader + "K,known:K,1,2,3\nJ,known:K,1,2,3\nx,trace,1,2,3\n");
  EXPECT_NE(dup.find("mem.csv:3:2"), std::string::npos);
  EXPECT_NE(dup.find("duplicate"), std::string::npos);
  EXPECT_NE(ingest_error(kHeader + "K,known:K,1,2,3\nx,trace,0,0,0\n").find("mem.csv:3:3"),
            std::string::npos);
}

TEST(IngestCsv, CorpusLevelViolations) {
  const std::string text = kHeader + "K,known:K,1,2,3\nx,trace,1,2,3\n";
  EXPECT_EQ(ingest_error(text), "");
  EXPECT_NE(ingest_error(text, {2, "u"}).find("invalid"), std::string::npos);
}

TEST(IngestCsv, RoundTrip) {
  const Corpus c = test::load_fixture();
  std::ostringstream os;
  io::write_corpus_csv(os, c);
  std::istringstream in(os.str());
  const Corpus d = io::ingest_csv(in);
  ASSERT_EQ(d.sample_count(), c.sample_count());
  EXPECT_EQ(test::fixture_lines(), [&] {
    std::vector<std::string> v;
    std::istringstream s(os.str());
    for (std::string line; std::getline(s, line);) v.push_back(line);
    return v;
  }());
}

TEST(Sha256, KnownDigests) {
  EXPECT_EQ(cli::sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  EXPECT_EQ(cli::sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

struct RunOutput {
  int code;
  std::string log;
  std::string err;
};

RunOutput run_fit(const fs::path& corpus, const cli::CommonOptions& opts) {
  std::ostringstream log, err;
  const int code = cli::cmd_fit(corpus, opts, log, err);
  return {code, log.str(), err.str()};
}

std::map<std::string, std::string> read_dir(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    files[e.path().filename().string()] = cli::read_file(e.path());
  }
  return files;
}

TEST(CmdFit, WritesAllOutputs) {
  TempDir tmp;
  cli::CommonOptions opts;
  opts.out = tmp / "fit";
  const auto r = run_fit(test::fixture_path(), opts);
  ASSERT_EQ(r.code, cli::kOk) << r.err;
  const auto files = read_dir(opts.out);
  for (const char* name : {"report.json", "summary.csv", "elbo_trace.csv", "fit.json", "manifest.json",
                           "theta_e1_AT.csv", "theta_e2_LQ.csv", "beta_AT_Quartz.csv",
                           "beta_LQ_Alkali_Feldspar.csv"}) {
    EXPECT_TRUE(files.count(name)) << name;
  }
  EXPECT_EQ(files.size(), 5u + 4u + 28u);

  const auto manifest = io::Json::parse(files.at("manifest.json"));
  EXPECT_EQ(manifest.at("command"), "fit");
  EXPECT_TRUE(manifest.at("converged").get<bool>());
  EXPECT_EQ(manifest.at("inputs").at(0).at("sha256"),
            cli::sha256_hex(cli::read_file(test::fixture_path())));
  for (const auto& f : manifest.at("outputs")) {
    const auto name = f.at("path").get<std::string>();
    EXPECT_EQ(f.at("sha256"), cli::sha256_hex(files.at(name))) << name;
  }

  const auto report = io::Json::parse(files.at("report.json"));
  bool found = false;
  for (const auto& t : report.at("theta_marginals")) {
    if (t.at("location") == "e1" && t.at("source") == "AT") {
      found = true;
      EXPECT_LE(t.at("hpdi").at("lo").get<double>(), 0.90);
      EXPECT_GE(t.at("hpdi").at("hi").get<double>(), 0.90);
    }
  }
  EXPECT_TRUE(found);
  EXPECT_NE(r.log.find("converged"), std::string::npos);
}

TEST(CmdFit, ForcedNonConvergenceStillWritesOutputs) {
  TempDir tmp;
  write_text(tmp / "cfg.json", R"({"fit": {"outer_max_iters": 1}})");
  cli::CommonOptions opts;
  opts.config = tmp / "cfg.json";
  opts.out = tmp / "fit";
  const auto r = run_fit(test::fixture_path(), opts);
  EXPECT_EQ(r.code, cli::kNotConverged) << r.err;
  EXPECT_TRUE(fs::exists(opts.out / "report.json"));
  EXPECT_TRUE(fs::exists(opts.out / "manifest.json"));
  const auto manifest = io::Json::parse(cli::read_file(opts.out / "manifest.json"));
  EXPECT_FALSE(manifest.at("converged").get<bool>());
  EXPECT_EQ(manifest.at("config").at("fit").at("outer_max_iters"), 1);
  EXPECT_EQ(manifest.at("inputs").size(), 2u);
}

TEST(CmdFit, MissingFileNamesThePath) {
  TempDir tmp;
  cli::CommonOptions opts;
  opts.out = tmp / "fit";
  const auto r = run_fit(tmp / "nowhere.csv", opts);
  EXPECT_EQ(r.code, cli::kError);
  EXPECT_NE(r.err.find("nowhere.csv"), std::string::npos);
}

TEST(CmdFit, BadConfigIsAnError) {
  TempDir tmp;
  write_text(tmp / "cfg.json", R"({"fit": {"known_wieght": 3}})");
  cli::CommonOptions opts;
  opts.config = tmp / "cfg.json";
  opts.out = tmp / "fit";
  const auto r = run_fit(test::fixture_path(), opts);
  EXPECT_EQ(r.code, cli::kError);
  EXPECT_NE(r.err.find("known_wieght"), std::string::npos);
}

TEST(CmdFit, OutputDirectoryIsWriteOnce) {
  TempDir tmp;
  cli::CommonOptions opts;
  opts.out = tmp / "fit";
  ASSERT_EQ(run_fit(test::fixture_path(), opts).code, cli::kOk);
  const auto again = run_fit(test::fixture_path(), opts);
  EXPECT_EQ(again.code, cli::kError);
  EXPECT_NE(again.err.find("--overwrite"), std::string::npos);
  opts.overwrite = true;
  EXPECT_EQ(run_fit(test::fixture_path(), opts).code, cli::kOk);
}

TEST(CmdFit, DeterministicOutputs) {
  TempDir tmp;
  cli::CommonOptions opts;
  opts.out = tmp / "a";
  ASSERT_EQ(run_fit(test::fixture_path(), opts).code, cli::kOk);
  opts.out = tmp / "b";
  opts.threads = 3;
  ASSERT_EQ(run_fit(test::fixture_path(), opts).code, cli::kOk);
  const auto a = read_dir(tmp / "a");
  const auto b = read_dir(tmp / "b");
  ASSERT_EQ(a.size(), b.size());
  for (const auto& [name, content] : a) {
    if (name == "manifest.json") continue;
    EXPECT_EQ(content, b.at(name)) << name;
  }
}

TEST(CmdFit, UnknownSourceScenario) {
  TempDir tmp;
  cli::CommonOptions opts;
  opts.out = tmp / "fit";
  opts.unknown_sources = 1;
  const auto r = run_fit(test::data_dir() / "at_known.csv", opts);
  ASSERT_NE(r.code, cli::kError) << r.err;
  EXPECT_TRUE(fs::exists(opts.out / "theta_e1_unknown.csv"));
}

TEST(CmdReport, RebuildsTheReportFromFitJson) {
  TempDir tmp;
  cli::CommonOptions opts;
  opts.out = tmp / "fit";
  ASSERT_EQ(run_fit(test::fixture_path(), opts).code, cli::kOk);
  cli::CommonOptions ropts;
  ropts.out = tmp / "report";
  std::ostringstream log, err;
  ASSERT_EQ(cli::cmd_report(tmp / "fit", ropts, log, err), cli::kOk) << err.str();
  const auto a = read_dir(tmp / "fit");
  const auto b = read_dir(tmp / "report");
  for (const auto& [name, content] : b) {
    if (name == "manifest.json") continue;
    ASSERT_TRUE(a.count(name)) << name;
    EXPECT_EQ(content, a.at(name)) << name;
  }
}

fs::path single_cell_spec(const TempDir& tmp) {
  const auto p = tmp / "spec.json";
  write_text(p, R"({
    "profiles": [[0.5, 0.3, 0.2], [0.1, 0.2, 0.7]],
    "type_names": ["a", "b", "c"],
    "theta_grid": [0.7],
    "n_grid": [200],
    "replications": 1,
    "seed": 5
  })");
  return p;
}

int run_sim(const fs::path& spec, const fs::path& out, std::optional<std::uint64_t> seed) {
  cli::CommonOptions opts;
  opts.out = out;
  opts.seed = seed;
  std::ostringstream log, err;
  return cli::cmd_simulate(spec, opts, log, err);
}

TEST(CmdSimulate, SingleCellStudy) {
  TempDir tmp;
  const auto spec = single_cell_spec(tmp);
  ASSERT_EQ(run_sim(spec, tmp / "s", std::nullopt), cli::kOk);
  std::istringstream cells(cli::read_file(tmp / "s" / "study_cells.csv"));
  std::vector<std::string> lines;
  for (std::string line; std::getline(cells, line);) lines.push_back(line);
  EXPECT_EQ(lines.size(), 2u);
  const auto manifest = io::Json::parse(cli::read_file(tmp / "s" / "manifest.json"));
  EXPECT_EQ(manifest.at("cells"), 1);
  EXPECT_EQ(manifest.at("spec").at("seed"), 5);
}

TEST(CmdSimulate, SeedContract) {
  TempDir tmp;
  const auto spec = single_cell_spec(tmp);
  ASSERT_EQ(run_sim(spec, tmp / "a", 11), cli::kOk);
  ASSERT_EQ(run_sim(spec, tmp / "b", 11), cli::kOk);
  ASSERT_EQ(run_sim(spec, tmp / "c", 12), cli::kOk);
  const auto rec = [&](const char* d) { return cli::read_file(tmp / d / "study_records.csv"); };
  EXPECT_EQ(rec("a"), rec("b"));
  EXPECT_NE(rec("a"), rec("c"));
}

TEST(CmdSimulate, FullGridSpecHasNinetyCells) {
  const auto spec = io::parse_study_spec(io::read_json_file(test::data_dir() / "study_situation_a.json"),
                                         test::data_dir());
  EXPECT_EQ(spec.cells(), 90u);
  EXPECT_EQ(spec.type_names.size(), 14u);
  const auto b = io::parse_study_spec(io::read_json_file(test::data_dir() / "study_situation_b.json"),
                                      test::data_dir());
  EXPECT_EQ(b.situation, Situation::two_traces);
}

TEST(Config, DefaultFileMatchesBuiltInDefaults) {
  const auto rc = io::parse_config(io::read_json_file(test::data_dir() / "default_config.json"));
  EXPECT_EQ(io::to_json(rc), io::to_json(io::RunConfig{}));
}

#ifdef DUSTLDA_TOOL
int run_tool(const std::string& args) {
  const std::string cmd = std::string("\"") + DUSTLDA_TOOL + "\" " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

TEST(Tool, ExitCodes) {
  TempDir tmp;
  const std::string fixture = test::fixture_path().string();
  EXPECT_EQ(run_tool("fit \"" + fixture + "\" --out \"" + (tmp / "ok").string() + "\" --threads 2"), 0);
  write_text(tmp / "cfg.json", R"({"fit": {"outer_max_iters": 1}})");
  EXPECT_EQ(run_tool("fit \"" + fixture + "\" --config \"" + (tmp / "cfg.json").string() + "\" --out \"" +
                     (tmp / "nc").string() + "\""),
            2);
  EXPECT_EQ(run_tool("fit \"" + (tmp / "missing.csv").string() + "\" --out \"" + (tmp / "x").string() + "\""),
            1);
  EXPECT_EQ(run_tool("fit"), 1);
  EXPECT_EQ(run_tool("report \"" + (tmp / "ok").string() + "\" --out \"" + (tmp / "rep").string() + "\""), 0);
  EXPECT_TRUE(fs::exists(tmp / "rep" / "report.json"));
}
#endif

}  // namespace
