#pragma once

// Per-target orchestration: raw traces -> preprocessed traces -> call tree
// -> leakage records -> report files.
//
// Project layout (under <root>/microwalk if it exists, else <root>):
//   target-<name>.js                 wrapper, optional for analysis
//   testcases/target-<name>/<k>.testcase
//   traces/target-<name>/<k>.trace + map.txt
// Output (default <base>/results):
//   <out>/<target>/report.txt, code-quality.json, calltree.txt
//   <out>/<target>/preprocessed/     cache for --skip-preprocess
//   <out>/code-quality.json          all targets
//   <out>/summary.txt

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "leakscope/leakage.hpp"
#include "leakscope/reporting.hpp"

namespace leakscope {

struct PipelineConfig {
  // preprocess.workers
  std::size_t workers = 4;
  // preprocess.cache: write the binary cache used by --skip-preprocess.
  bool cache = true;
  // analysis.dump-tree
  bool dump_tree = false;
  // report.formats: text, code-quality
  bool text_report = true;
  bool code_quality = true;
  // report.rounding: decimals of scores.
  int rounding = 2;
};

// Applies a YAML document on top of `config`. Unknown keys are rejected.
void apply_config_text(PipelineConfig& config, const std::string& yaml, const std::string& source = "<config>");
void apply_config_file(PipelineConfig& config, const std::filesystem::path& path);

struct TargetSpec {
  std::string name;
  std::filesystem::path trace_dir;
  std::filesystem::path testcase_dir;
  std::filesystem::path output_dir;
};

// Finds targets by wrapper script or trace directory, sorted by name.
std::vector<TargetSpec> discover_targets(const std::filesystem::path& base, const std::filesystem::path& out);

// Uses <root>/microwalk when present.
std::filesystem::path project_base(const std::filesystem::path& root);

struct StageTimes {
  double preprocess = 0;
  double analyze = 0;
  double report = 0;
};

struct TargetResult {
  std::string name;
  // 0 no findings, 1 findings, 2 error.
  int status = 0;
  std::string error;
  std::size_t trace_count = 0;
  LeakageCounts counts;
  // CPU seconds.
  StageTimes cpu;
  double peak_rss_mib = 0;
  std::vector<CodeQualityIssue> issues;
  std::vector<std::string> warnings;
};

TargetResult run_target(const TargetSpec& spec, const PipelineConfig& config, bool skip_preprocess, std::ostream& log);

struct RunOptions {
  std::optional<std::string> target;
  bool dump_tree = false;
  bool skip_preprocess = false;
  std::optional<std::filesystem::path> out;
  std::optional<std::filesystem::path> config;
};

struct RunSummary {
  std::vector<TargetResult> targets;
  int exit_code = 0;
  std::string table;
};

RunSummary run_all(const std::filesystem::path& root, const RunOptions& options, std::ostream& log);

// Per-target rows with stage CPU times, peak memory and leak counts, plus a
// totals line.
std::string format_summary(const std::vector<TargetResult>& targets);

}  // namespace leakscope
