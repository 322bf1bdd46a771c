#include <gtest/gtest.h>

#include "json.hpp"
#include "leakscope/preprocessor.hpp"
#include "leakscope/reporting.hpp"
#include "programs.hpp"

using namespace leakscope;
using namespace leakscope::testing;

namespace {

struct Analyzed {
  CallTree tree;
  AnalysisResult result;
};

Analyzed analyze_traces(const std::vector<PreprocessedTrace>& traces) {
  Analyzed a;
  for (const auto& t : traces) a.tree.insert(t);
  a.result = analyze(a.tree);
  return a;
}

Analyzed toy() { return analyze_traces(preprocess_all(std::string(LEAKSCOPE_FIXTURES) + "/toy/microwalk/traces/target-toy-example", 4)); }

LeakageRecord record_with(CallStack stack, InstructionKey key, Severity severity, double score) {
  LeakageRecord r;
  r.call_stack = std::move(stack);
  r.instruction = key;
  TreeResult t;
  t.metrics.score = score;
  r.trees.push_back(t);
  r.score = {score, score, score, 0};
  r.severity = severity;
  return r;
}

}  // namespace

TEST(Reporting, ToyExampleMatchesFig8) {
  Analyzed a = toy();
  std::vector<std::string> warnings;
  auto issues = code_quality_issues(a.result, a.tree.images(), "target-toy-example", 2, &warnings);
  ASSERT_EQ(issues.size(), 2U);
  EXPECT_TRUE(warnings.empty());
  EXPECT_EQ(issues[0].severity, Severity::critical);
  EXPECT_EQ(issues[0].path, "target.js");
  EXPECT_EQ(issues[0].line, 11U);
  EXPECT_EQ(issues[0].description,
            "(target-toy-example) Found vulnerable memory access instruction, leakage score 100.00% +/- 0%. Check analysis result in artifacts for details.");
  EXPECT_EQ(issues[0].check_name, "secret-dependent-memory-access");
  EXPECT_EQ(issues[1].severity, Severity::major);
  EXPECT_EQ(issues[1].path, "target.js");
  EXPECT_EQ(issues[1].line, 10U);
  EXPECT_EQ(issues[1].description,
            "(target-toy-example) Found vulnerable jump instruction, leakage score 53.33% +/- 0%. Check analysis result in artifacts for details.");
  EXPECT_NEAR(issues[1].score, 53.33, 0.01);
  EXPECT_EQ(issues[0].score, 100.0);
}

TEST(Reporting, CodeQualityJsonSchema) {
  Analyzed a = toy();
  auto issues = code_quality_issues(a.result, a.tree.images(), "target-toy-example");
  auto doc = nlohmann::json::parse(render_code_quality(issues));
  ASSERT_TRUE(doc.is_array());
  ASSERT_EQ(doc.size(), 2U);
  for (const auto& item : doc) {
    EXPECT_TRUE(item["description"].is_string());
    EXPECT_TRUE(item["check_name"].is_string());
    EXPECT_EQ(item["fingerprint"].get<std::string>().size(), 16U);
    EXPECT_TRUE(item["location"]["path"].is_string());
    EXPECT_TRUE(item["location"]["lines"]["begin"].is_number_integer());
  }
  EXPECT_EQ(doc[0]["severity"], "critical");
  EXPECT_EQ(doc[1]["severity"], "major");
  EXPECT_EQ(doc[0]["location"]["lines"]["begin"], 11);
}

TEST(Reporting, EmptyReportIsValid) {
  EXPECT_EQ(nlohmann::json::parse(render_code_quality({})), nlohmann::json::array());
  Analyzed a = analyze_traces(figure1_traces({2, 2, 2}));
  EXPECT_TRUE(code_quality_issues(a.result, a.tree.images(), "t").empty());
  std::string report = render_detailed_report(a.result, a.tree.images(), "t");
  EXPECT_NE(report.find("constant-time"), std::string::npos);
  EXPECT_NE(report.find("Leakages: 0"), std::string::npos);
}

TEST(Reporting, Deterministic) {
  Analyzed a = toy();
  Analyzed b = toy();
  EXPECT_EQ(render_code_quality(code_quality_issues(a.result, a.tree.images(), "x")), render_code_quality(code_quality_issues(b.result, b.tree.images(), "x")));
  EXPECT_EQ(render_detailed_report(a.result, a.tree.images(), "x"), render_detailed_report(b.result, b.tree.images(), "x"));
}

TEST(Reporting, FingerprintsDistinguishCallStacks) {
  const InstructionKey key{{1, 4}, InstructionKind::jump};
  const CallStack s1{{{1, 1}, {2, 0}}};
  const CallStack s2{{{1, 5}, {2, 0}}};
  EXPECT_NE(fingerprint("t", s1, key), fingerprint("t", s2, key));
  EXPECT_EQ(fingerprint("t", s1, key), fingerprint("t", s1, key));
  EXPECT_NE(fingerprint("t", s1, key), fingerprint("u", s1, key));
  EXPECT_NE(fingerprint("t", s1, key), fingerprint("t", s1, {{1, 4}, InstructionKind::memory_read}));
}

TEST(Reporting, MergesContextsWithWorstSeverity) {
  auto images = binary_images({"main", "f"});
  const InstructionKey key{at(*images, "f", 2), InstructionKind::memory_read};
  AnalysisResult result;
  result.trace_count = 16;
  result.records.push_back(record_with({{at(*images, "main", 1), at(*images, "f", 0)}}, key, Severity::minor, 10));
  result.records.push_back(record_with({{at(*images, "main", 5), at(*images, "f", 0)}}, key, Severity::critical, 100));
  auto issues = code_quality_issues(result, *images, "t");
  ASSERT_EQ(issues.size(), 1U);
  EXPECT_EQ(issues[0].severity, Severity::critical);
  EXPECT_NE(issues[0].description.find("leakage score 100.00% +/- 0% (2 contexts)."), std::string::npos) << issues[0].description;
  EXPECT_EQ(issues[0].path, "f");
  EXPECT_EQ(issues[0].line, 0U);
  EXPECT_EQ(count_leakages(result, *images).leakages, 2U);
  EXPECT_EQ(count_leakages(result, *images).unique, 1U);
}

TEST(Reporting, UnresolvedLocationsWarn) {
  auto images = binary_images({"main"});
  AnalysisResult result;
  result.trace_count = 4;
  result.records.push_back(record_with({}, {{0, 77}, InstructionKind::call}, Severity::major, 50));
  std::vector<std::string> warnings;
  auto issues = code_quality_issues(result, *images, "t", 2, &warnings);
  ASSERT_EQ(issues.size(), 1U);
  EXPECT_EQ(issues[0].path, "[extern]");
  EXPECT_EQ(issues[0].line, 0U);
  EXPECT_EQ(warnings.size(), 1U);
}

TEST(Reporting, SortOrder) {
  std::vector<CodeQualityIssue> issues(4);
  issues[0].severity = Severity::minor, issues[0].score = 10;
  issues[1].severity = Severity::critical, issues[1].score = 90, issues[1].path = "b";
  issues[2].severity = Severity::critical, issues[2].score = 90, issues[2].path = "a";
  issues[3].severity = Severity::critical, issues[3].score = 100;
  sort_issues(issues);
  EXPECT_EQ(issues[0].score, 100);
  EXPECT_EQ(issues[1].path, "a");
  EXPECT_EQ(issues[2].path, "b");
  EXPECT_EQ(issues[3].severity, Severity::minor);
}

TEST(Reporting, PercentFormatting) {
  EXPECT_EQ(format_percent(53.3333333, 2), "53.33");
  EXPECT_EQ(format_percent(100, 2), "100.00");
  EXPECT_EQ(format_percent(0, 2), "0");
  EXPECT_EQ(format_percent(0.004, 2), "0");
  EXPECT_EQ(format_percent(50, 0), "50");
}

TEST(Reporting, DetailedReportFig3) {
  Analyzed a = analyze_traces(figure3_traces({0, 1, 2, 3, 4, 5}));
  std::string report = render_detailed_report(a.result, a.tree.images(), "fig3");
  EXPECT_NE(report.find("main+1 -> f1+0\n  f1+0 -> f2+0\n  f2+0 -> f3+0"), std::string::npos) << report;
  EXPECT_NE(report.find("{0, 4} {1, 5} {2} {3}"), std::string::npos) << report;
  // n = 6: minGE 1 is not below 0.2 * 3.5.
  EXPECT_NE(report.find("Severity: major"), std::string::npos);
  for (const char* row : {"mean", "min", "max", "std"}) EXPECT_NE(report.find(row), std::string::npos);
}

TEST(Reporting, DetailedReportCounts) {
  Analyzed a = analyze_traces(figure1_traces({1, 2, 3}));
  std::string report = render_detailed_report(a.result, a.tree.images(), "fig1");
  EXPECT_NE(report.find("Trace-ID trees: 1"), std::string::npos);
  EXPECT_NE(report.find("Leakages: 2 (unique source lines: 2)"), std::string::npos) << report;
}
