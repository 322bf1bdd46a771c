#include "leakscope/reporting.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include <fmt/format.h>

#include "json.hpp"

namespace leakscope {

namespace {

std::uint64_t fnv1a(std::uint64_t h, std::string_view bytes) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::uint64_t fnv_address(std::uint64_t h, CodeAddress a) { return fnv1a(h, fmt::format("{:x}:{:x};", a.image_id, a.offset)); }

int severity_rank(Severity s) { return static_cast<int>(s); }

std::string check_name(InstructionKind kind) {
  std::string name(describe(kind));
  std::replace(name.begin(), name.end(), ' ', '-');
  return "secret-dependent-" + name;
}

std::string leaves_text(const std::vector<TraceIdSet>& leaves) {
  std::string out;
  for (const auto& leaf : leaves) {
    if (!out.empty()) out += ' ';
    out += '{' + leaf.to_string() + '}';
  }
  return out;
}

std::string location_text(CodeAddress address, const ImageTable& images) {
  if (images.find(address.image_id) == nullptr) return format_address(address, images);
  return to_string(decode_address(address, images));
}

}  // namespace

ReportLocation report_location(CodeAddress address, const ImageTable& images) {
  const ImageInfo* image = images.find(address.image_id);
  if (image == nullptr || image->kind == ImageKind::external) return {std::string(kExternImageName), 0, false};
  if (image->kind == ImageKind::binary) return {image->name, 0, true};
  return {image->name, address.offset >> 16, true};
}

std::string fingerprint(std::string_view target, const CallStack& stack, const InstructionKey& instruction) {
  std::uint64_t h = 14695981039346656037ULL;
  h = fnv1a(h, target);
  h = fnv1a(h, "|");
  for (const auto& frame : stack) {
    h = fnv_address(h, frame.call_site);
    h = fnv_address(h, frame.callee);
  }
  h = fnv1a(h, "|");
  h = fnv_address(h, instruction.address);
  h = fnv1a(h, describe(instruction.kind));
  return fmt::format("{:016x}", h);
}

std::string format_percent(double value, int decimals) {
  const double half_unit = 0.5 * std::pow(10.0, -decimals);
  if (std::fabs(value) < half_unit) return "0";
  return fmt::format("{:.{}f}", value, decimals);
}

std::vector<CodeQualityIssue> code_quality_issues(const AnalysisResult& result, const ImageTable& images, std::string_view target, int decimals,
                                                  std::vector<std::string>* warnings) {
  std::map<InstructionKey, std::vector<const LeakageRecord*>> by_instruction;
  for (const LeakageRecord* r : result.findings()) by_instruction[r->instruction].push_back(r);

  std::vector<CodeQualityIssue> issues;
  for (const auto& [instruction, records] : by_instruction) {
    const LeakageRecord* worst = records.front();
    for (const LeakageRecord* r : records) {
      if (severity_rank(r->severity) > severity_rank(worst->severity) ||
          (r->severity == worst->severity && r->score.mean > worst->score.mean)) {
        worst = r;
      }
    }

    CodeQualityIssue issue;
    issue.severity = worst->severity;
    issue.score = worst->score.mean;
    issue.check_name = check_name(instruction.kind);
    ReportLocation loc = report_location(instruction.address, images);
    issue.path = loc.path;
    issue.line = loc.line;
    if (!loc.resolved && warnings) {
      warnings->push_back(fmt::format("({}) cannot map {} instruction {} to a source line; reported as {} line 0", target, describe(instruction.kind),
                                      format_address(instruction.address, images), kExternImageName));
    }

    std::string contexts = records.size() > 1 ? fmt::format(" ({} contexts)", records.size()) : "";
    issue.description = fmt::format("({}) Found vulnerable {} instruction, leakage score {}% +/- {}%{}. Check analysis result in artifacts for details.", target,
                                    describe(instruction.kind), format_percent(worst->score.mean, decimals), format_percent(worst->score.stddev, decimals),
                                    contexts);

    if (records.size() == 1) {
      issue.fingerprint = fingerprint(target, worst->call_stack, instruction);
    } else {
      std::string all;
      for (const LeakageRecord* r : records) all += fingerprint(target, r->call_stack, instruction);
      issue.fingerprint = fmt::format("{:016x}", fnv1a(14695981039346656037ULL, all));
    }
    issues.push_back(std::move(issue));
  }
  sort_issues(issues);
  return issues;
}

void sort_issues(std::vector<CodeQualityIssue>& issues) {
  std::stable_sort(issues.begin(), issues.end(), [](const CodeQualityIssue& a, const CodeQualityIssue& b) {
    if (a.severity != b.severity) return severity_rank(a.severity) > severity_rank(b.severity);
    if (a.score != b.score) return a.score > b.score;
    if (a.path != b.path) return a.path < b.path;
    if (a.line != b.line) return a.line < b.line;
    return a.fingerprint < b.fingerprint;
  });
}

std::string render_code_quality(const std::vector<CodeQualityIssue>& issues) {
  nlohmann::ordered_json doc = nlohmann::ordered_json::array();
  for (const auto& issue : issues) {
    nlohmann::ordered_json item;
    item["description"] = issue.description;
    item["check_name"] = issue.check_name;
    item["fingerprint"] = issue.fingerprint;
    item["severity"] = std::string(to_string(issue.severity));
    item["location"] = {{"path", issue.path}, {"lines", {{"begin", issue.line}}}};
    doc.push_back(std::move(item));
  }
  return doc.dump(2) + "\n";
}

LeakageCounts count_leakages(const AnalysisResult& result, const ImageTable& images) {
  LeakageCounts counts;
  std::set<ReportLocation> lines;
  for (const LeakageRecord* r : result.findings()) {
    ++counts.leakages;
    lines.insert(report_location(r->instruction.address, images));
  }
  counts.unique = lines.size();
  return counts;
}

std::string render_detailed_report(const AnalysisResult& result, const ImageTable& images, std::string_view target, int decimals) {
  std::vector<const LeakageRecord*> findings = result.findings();
  std::stable_sort(findings.begin(), findings.end(), [](const LeakageRecord* a, const LeakageRecord* b) {
    if (a->severity != b->severity) return severity_rank(a->severity) > severity_rank(b->severity);
    return a->score.mean > b->score.mean;
  });
  LeakageCounts counts = count_leakages(result, images);

  std::string out;
  out += fmt::format("Leakage analysis of {}\n", target);
  out += fmt::format("Testcases: {}\n", result.trace_count);
  out += fmt::format("Leakages: {} (unique source lines: {})\n", counts.leakages, counts.unique);
  if (findings.empty()) {
    out += fmt::format("\nNo secret-dependent control flow or memory access found: {} is constant-time under the supplied {} testcases.\n", target,
                       result.trace_count);
    return out;
  }

  auto num = [&](double v) { return fmt::format("{:.{}f}", v, 4); };
  std::size_t index = 0;
  for (const LeakageRecord* r : findings) {
    out += fmt::format("\n== Leakage {}: {} at {} ==\n", ++index, describe(r->instruction.kind), location_text(r->instruction.address, images));
    out += fmt::format("Severity: {}\n", to_string(r->severity));
    out += fmt::format("Score: {}% +/- {}%\n", format_percent(r->score.mean, decimals), format_percent(r->score.stddev, decimals));
    out += "Call stack:\n";
    std::vector<std::string> frames = format_call_stack(r->call_stack, images);
    if (frames.empty()) out += "  (top level)\n";
    for (const auto& f : frames) out += "  " + f + "\n";
    out += fmt::format("Trace-ID trees: {}\n", r->trees.size());
    out += fmt::format("  {:>5} {:>5} {:>9} {:>9} {:>9} {:>8}  {}\n", "tree", "n", "MI", "condGE", "minGE", "score", "leaves");
    for (std::size_t i = 0; i < r->trees.size(); ++i) {
      const TreeResult& t = r->trees[i];
      out += fmt::format("  {:>5} {:>5} {:>9} {:>9} {:>9} {:>8}  {}\n", i, t.metrics.n, num(t.metrics.mutual_information), num(t.metrics.conditional_ge),
                         num(t.metrics.minimal_ge), format_percent(t.metrics.score, decimals), leaves_text(t.leaves));
    }
    auto row = [&](std::string_view label, double (*pick)(const Statistic&)) {
      out += fmt::format("  {:>5} {:>5} {:>9} {:>9} {:>9} {:>8}\n", label, "", num(pick(r->mutual_information)), num(pick(r->conditional_ge)),
                         num(pick(r->minimal_ge)), format_percent(pick(r->score), decimals));
    };
    row("mean", [](const Statistic& s) { return s.mean; });
    row("min", [](const Statistic& s) { return s.min; });
    row("max", [](const Statistic& s) { return s.max; });
    row("std", [](const Statistic& s) { return s.stddev; });
  }
  return out;
}

}  // namespace leakscope
