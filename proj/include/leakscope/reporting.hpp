#pragma once

// Developer-facing output: a CI code-quality issue list and a detailed text
// report with the full calling context of every finding.
//
// Code-quality file: a JSON array of issues
//   { "description", "check_name", "fingerprint", "severity",
//     "location": { "path", "lines": { "begin" } } }
// as consumed by GitLab's code-quality widget.

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "leakscope/leakage.hpp"

namespace leakscope {

struct CodeQualityIssue {
  std::string description;
  std::string check_name;
  std::string fingerprint;
  Severity severity = Severity::info;
  std::string path;
  std::uint32_t line = 0;
  // For ordering only.
  double score = 0;
};

// Source position of an instruction for reports: file and line for source
// images, the image name and line 0 otherwise.
struct ReportLocation {
  std::string path;
  std::uint32_t line = 0;
  // False for extern or unknown images.
  bool resolved = true;

  friend auto operator<=>(const ReportLocation&, const ReportLocation&) = default;
};

ReportLocation report_location(CodeAddress address, const ImageTable& images);

// Hex FNV-1a 64 over target, call stack and instruction.
std::string fingerprint(std::string_view target, const CallStack& stack, const InstructionKey& instruction);

// "53.33"; a value that rounds to zero prints as "0".
std::string format_percent(double value, int decimals);

// One issue per leaking instruction; an instruction flagged in several call
// stacks carries the worst severity and a "(k contexts)" note. Unresolvable
// locations are reported as `[extern]` line 0 and described in `warnings`.
std::vector<CodeQualityIssue> code_quality_issues(const AnalysisResult& result, const ImageTable& images, std::string_view target,
                                                  int decimals = 2, std::vector<std::string>* warnings = nullptr);

// Critical first, then by score, then by location.
void sort_issues(std::vector<CodeQualityIssue>& issues);

std::string render_code_quality(const std::vector<CodeQualityIssue>& issues);

std::string render_detailed_report(const AnalysisResult& result, const ImageTable& images, std::string_view target, int decimals = 2);

struct LeakageCounts {
  // Leaking (call stack, instruction) records.
  std::size_t leakages = 0;
  // Distinct source lines among them.
  std::size_t unique = 0;
};

LeakageCounts count_leakages(const AnalysisResult& result, const ImageTable& images);

}  // namespace leakscope
