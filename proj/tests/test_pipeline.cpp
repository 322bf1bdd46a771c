#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <sys/wait.h>
#include <unistd.h>

#include "json.hpp"
#include "leakscope/errors.hpp"
#include "leakscope/pipeline.hpp"

using namespace leakscope;
namespace fs = std::filesystem;

namespace {

const fs::path kFixtures = LEAKSCOPE_FIXTURES;

std::string read_file(const fs::path& path) {
  std::ifstream in(path);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

// Fresh project root holding the microwalk/ trees of the named fixtures.
class Project {
 public:
  explicit Project(std::initializer_list<const char*> fixtures) {
    static int counter = 0;
    root_ = fs::temp_directory_path() / ("leakscope-pipeline-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    fs::remove_all(root_);
    fs::create_directories(root_ / "microwalk");
    for (const char* f : fixtures) fs::copy(kFixtures / f / "microwalk", root_ / "microwalk", fs::copy_options::recursive | fs::copy_options::overwrite_existing);
  }
  ~Project() { fs::remove_all(root_); }

  const fs::path& root() const { return root_; }
  fs::path base() const { return root_ / "microwalk"; }
  fs::path results() const { return base() / "results"; }

 private:
  fs::path root_;
};

struct CliResult {
  int status = -1;
  std::string out;
  std::string err;
};

CliResult run_cli(const std::string& args, const fs::path& scratch) {
  const fs::path out = scratch / "cli.out";
  const fs::path err = scratch / "cli.err";
  const std::string cmd = std::string(LEAKSCOPE_ANALYZE) + " " + args + " >" + out.string() + " 2>" + err.string();
  const int raw = std::system(cmd.c_str());
  CliResult r;
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  r.out = read_file(out);
  r.err = read_file(err);
  return r;
}

// Summary rows without the timing and memory columns.
std::vector<std::string> stable_columns(const std::string& table) {
  std::vector<std::string> rows;
  std::istringstream in(table);
  for (std::string line; std::getline(in, line);) {
    std::istringstream words(line);
    std::vector<std::string> w;
    for (std::string x; words >> x;) w.push_back(x);
    if (w.size() < 8) continue;
    rows.push_back(w[0] + " " + w[w.size() - 3] + " " + w[w.size() - 2] + " " + w.back());
  }
  return rows;
}

}  // namespace

TEST(Pipeline, ToyExampleReportsTwoFindings) {
  Project p({"toy"});
  std::ostringstream log;
  RunSummary s = run_all(p.root(), {}, log);
  EXPECT_EQ(s.exit_code, 1);
  ASSERT_EQ(s.targets.size(), 1U);
  EXPECT_EQ(s.targets[0].name, "target-toy-example");
  EXPECT_EQ(s.targets[0].trace_count, 16U);
  EXPECT_EQ(s.targets[0].counts.leakages, 2U);
  EXPECT_EQ(s.targets[0].counts.unique, 2U);
  auto doc = nlohmann::json::parse(read_file(p.results() / "target-toy-example" / "code-quality.json"));
  ASSERT_EQ(doc.size(), 2U);
  EXPECT_EQ(doc[0]["severity"], "critical");
  EXPECT_EQ(doc[0]["location"]["path"], "target.js");
  EXPECT_EQ(doc[0]["location"]["lines"]["begin"], 11);
  EXPECT_EQ(doc[1]["severity"], "major");
  EXPECT_EQ(doc[1]["location"]["lines"]["begin"], 10);
  EXPECT_EQ(nlohmann::json::parse(read_file(p.results() / "code-quality.json")), doc);
  EXPECT_TRUE(fs::exists(p.results() / "target-toy-example" / "report.txt"));
  EXPECT_FALSE(fs::exists(p.results() / "target-toy-example" / "calltree.txt"));
  EXPECT_EQ(read_file(p.results() / "summary.txt"), s.table);
}

TEST(Pipeline, ConstantTimeXorHasNoFindings) {
  Project p({"xor"});
  std::ostringstream log;
  RunSummary s = run_all(p.root(), {}, log);
  EXPECT_EQ(s.exit_code, 0) << log.str();
  EXPECT_EQ(s.targets[0].counts.leakages, 0U);
  EXPECT_EQ(nlohmann::json::parse(read_file(p.results() / "target-xor" / "code-quality.json")), nlohmann::json::array());
  EXPECT_NE(read_file(p.results() / "target-xor" / "report.txt").find("constant-time"), std::string::npos);
}

TEST(Pipeline, TwoTargetsTableWithTotals) {
  Project p({"toy", "xor"});
  std::ostringstream log;
  RunSummary s = run_all(p.root(), {}, log);
  EXPECT_EQ(s.exit_code, 1);
  auto rows = stable_columns(s.table);
  ASSERT_EQ(rows.size(), 4U) << s.table;
  EXPECT_EQ(rows[1], "target-toy-example 2 2 leaking");
  EXPECT_EQ(rows[2], "target-xor 0 0 ok");
  EXPECT_EQ(rows[3], "total 2 2 targets");
}

TEST(Pipeline, RerunIsDeterministic) {
  Project p({"toy", "xor"});
  std::ostringstream log;
  RunSummary a = run_all(p.root(), {}, log);
  const std::string report = read_file(p.results() / "target-toy-example" / "report.txt");
  const std::string json = read_file(p.results() / "code-quality.json");
  RunSummary b = run_all(p.root(), {}, log);
  EXPECT_EQ(stable_columns(a.table), stable_columns(b.table));
  EXPECT_EQ(read_file(p.results() / "target-toy-example" / "report.txt"), report);
  EXPECT_EQ(read_file(p.results() / "code-quality.json"), json);
}

TEST(Pipeline, SkipPreprocessReusesCache) {
  Project p({"toy"});
  std::ostringstream log;
  RunOptions options;
  options.dump_tree = true;
  RunSummary first = run_all(p.root(), options, log);
  const fs::path dir = p.results() / "target-toy-example";
  const std::string report = read_file(dir / "report.txt");
  const std::string json = read_file(dir / "code-quality.json");
  const std::string tree = read_file(dir / "calltree.txt");
  EXPECT_TRUE(fs::exists(dir / "preprocessed" / "15.bin"));
  // Raw traces are gone; only the cache can reproduce the results.
  fs::remove_all(p.base() / "traces");
  options.skip_preprocess = true;
  RunSummary second = run_all(p.root(), options, log);
  EXPECT_EQ(second.exit_code, 1) << log.str();
  EXPECT_EQ(read_file(dir / "report.txt"), report);
  EXPECT_EQ(read_file(dir / "code-quality.json"), json);
  EXPECT_EQ(read_file(dir / "calltree.txt"), tree);
}

TEST(Pipeline, SkipPreprocessWithoutCacheFails) {
  Project p({"toy"});
  std::ostringstream log;
  RunOptions options;
  options.skip_preprocess = true;
  EXPECT_EQ(run_all(p.root(), options, log).exit_code, 2);
}

TEST(Pipeline, CorruptedTraceNamesFileAndLine) {
  Project p({"toy"});
  const fs::path bad = p.base() / "traces" / "target-toy-example" / "7.trace";
  std::string text = read_file(bad);
  write_file(bad, text.substr(0, text.find('\n') + 1) + "Bogus;line\n" + text.substr(text.find('\n') + 1));
  std::ostringstream log;
  RunSummary s = run_all(p.root(), {}, log);
  EXPECT_EQ(s.exit_code, 2);
  EXPECT_NE(s.targets[0].error.find("7.trace"), std::string::npos) << s.targets[0].error;
  EXPECT_NE(s.targets[0].error.find(":2:"), std::string::npos) << s.targets[0].error;
  EXPECT_NE(log.str().find("target-toy-example"), std::string::npos);
}

TEST(Pipeline, TestcaseCountMustMatch) {
  Project p({"toy"});
  fs::remove(p.base() / "testcases" / "target-toy-example" / "15.testcase");
  std::ostringstream log;
  EXPECT_EQ(run_all(p.root(), {}, log).exit_code, 2);
}

TEST(Pipeline, NoTargets) {
  Project p({});
  std::ostringstream log;
  try {
    run_all(p.root(), {}, log);
    FAIL() << "expected an error";
  } catch (const error& e) {
    EXPECT_NE(std::string(e.what()).find("no target-*.js wrappers / trace sets"), std::string::npos);
  }
}

TEST(Pipeline, TargetFilter) {
  Project p({"toy", "xor"});
  std::ostringstream log;
  RunOptions options;
  options.target = "target-xor";
  RunSummary s = run_all(p.root(), options, log);
  ASSERT_EQ(s.targets.size(), 1U);
  EXPECT_EQ(s.exit_code, 0);
  options.target = "target-missing";
  EXPECT_THROW(run_all(p.root(), options, log), error);
}

TEST(Pipeline, DiscoversTargets) {
  Project p({"toy", "xor"});
  auto specs = discover_targets(p.base(), p.root() / "out");
  ASSERT_EQ(specs.size(), 2U);
  EXPECT_EQ(specs[0].name, "target-toy-example");
  EXPECT_EQ(specs[0].trace_dir, p.base() / "traces" / "target-toy-example");
  EXPECT_EQ(specs[0].testcase_dir, p.base() / "testcases" / "target-toy-example");
  EXPECT_EQ(specs[0].output_dir, p.root() / "out" / "target-toy-example");
  EXPECT_EQ(project_base(p.root()), p.base());
  EXPECT_EQ(project_base(p.base()), p.base());
}

TEST(Config, AppliesKnownKeys) {
  PipelineConfig c;
  apply_config_text(c,
                    "preprocess:\n  workers: 2\n  cache: false\n"
                    "analysis:\n  dump-tree: true\n"
                    "report:\n  formats: [code-quality]\n  rounding: 0\n");
  EXPECT_EQ(c.workers, 2U);
  EXPECT_FALSE(c.cache);
  EXPECT_TRUE(c.dump_tree);
  EXPECT_FALSE(c.text_report);
  EXPECT_TRUE(c.code_quality);
  EXPECT_EQ(c.rounding, 0);
}

TEST(Config, RejectsUnknownKeys) {
  PipelineConfig c;
  EXPECT_THROW(apply_config_text(c, "preprocess:\n  threads: 2\n"), config_error);
  EXPECT_THROW(apply_config_text(c, "analyse:\n  dump-tree: true\n"), config_error);
  EXPECT_THROW(apply_config_text(c, "report:\n  formats: [pdf]\n"), config_error);
  EXPECT_THROW(apply_config_text(c, "report:\n  rounding: 9\n"), config_error);
  EXPECT_THROW(apply_config_text(c, "preprocess:\n  workers: 0\n"), config_error);
  try {
    apply_config_text(c, "report:\n  colour: red\n", "my.yml");
    FAIL();
  } catch (const config_error& e) {
    EXPECT_NE(std::string(e.what()).find("report.colour"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("my.yml"), std::string::npos) << e.what();
  }
}

TEST(Config, ProjectConfigFilesAreLoaded) {
  Project p({"toy"});
  write_file(p.base() / "config-analyze.yml", "report:\n  rounding: 0\n");
  std::ostringstream log;
  run_all(p.root(), {}, log);
  auto doc = nlohmann::json::parse(read_file(p.results() / "code-quality.json"));
  EXPECT_NE(doc[1]["description"].get<std::string>().find("leakage score 53% +/- 0%"), std::string::npos) << doc.dump();
  write_file(p.base() / "config-analyze.yml", "report:\n  bogus: 1\n");
  EXPECT_THROW(run_all(p.root(), {}, log), config_error);
}

TEST(Cli, ExitCodesAndArtifacts) {
  Project p({"toy", "xor"});
  CliResult leaking = run_cli(p.root().string() + " --target target-toy-example --dump-tree", p.root());
  EXPECT_EQ(leaking.status, 1) << leaking.err;
  EXPECT_NE(leaking.out.find("target-toy-example"), std::string::npos);
  EXPECT_TRUE(fs::exists(p.results() / "target-toy-example" / "calltree.txt"));

  CliResult clean = run_cli(p.root().string() + " --target target-xor --out " + (p.root() / "elsewhere").string(), p.root());
  EXPECT_EQ(clean.status, 0) << clean.err;
  EXPECT_TRUE(fs::exists(p.root() / "elsewhere" / "target-xor" / "code-quality.json"));

  CliResult cached = run_cli(p.root().string() + " --target target-toy-example --skip-preprocess", p.root());
  EXPECT_EQ(cached.status, 1) << cached.err;

  write_file(p.root() / "bad.yml", "report:\n  nope: 1\n");
  CliResult bad_config = run_cli(p.root().string() + " --config " + (p.root() / "bad.yml").string(), p.root());
  EXPECT_EQ(bad_config.status, 2);
  EXPECT_NE(bad_config.err.find("nope"), std::string::npos);

  CliResult missing = run_cli((p.root() / "does-not-exist").string(), p.root());
  EXPECT_EQ(missing.status, 2);
}

TEST(Cli, CorruptedTraceExitsTwo) {
  Project p({"toy"});
  write_file(p.base() / "traces" / "target-toy-example" / "3.trace", "Expr;target.js:1:1:1:2\nRet2;target.js:4:1:17:2:;/index.js:28:5:28:43\n");
  CliResult r = run_cli(p.root().string(), p.root());
  EXPECT_EQ(r.status, 2);
  EXPECT_NE(r.err.find("3.trace:2:"), std::string::npos) << r.err;
}
