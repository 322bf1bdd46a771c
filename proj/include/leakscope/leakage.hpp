#pragma once

// Second analysis step: walks the call tree once per call context, builds a
// trace-ID tree for every (call stack, instruction) and invocation, and
// scores the resulting leaf partitions.

#include <cstddef>
#include <string>
#include <unordered_map>
#include <vector>

#include "leakscope/calltree.hpp"
#include "leakscope/metrics.hpp"

namespace leakscope {

struct CallFrame {
  CodeAddress call_site;
  CodeAddress callee;

  friend auto operator<=>(const CallFrame&, const CallFrame&) = default;
};

// Root first. Empty for code executed outside any recorded call.
using CallStack = std::vector<CallFrame>;

// One "site -> callee" line per frame, e.g. "main+1 -> func+0".
std::vector<std::string> format_call_stack(const CallStack& stack, const ImageTable& images);

// Divergence tree of one instruction in one invocation. Each refinement
// splits the block a trace currently sits in; traces that never diverge at
// this instruction stay together.
class TraceIdTree {
 public:
  struct Node {
    TraceIdSet ids;
    std::vector<std::uint32_t> children;
  };

  TraceIdTree() = default;
  explicit TraceIdTree(TraceIdSet root);

  // Adds traces that execute the instruction.
  void reach(const TraceIdSet& ids);

  // Separates traces that ended up in different `groups`. A block is only
  // split when at least two groups meet it.
  void refine(std::span<const TraceIdSet> groups);

  // Gives every node with children a child for its ids not covered yet, so
  // the leaves partition the root. Idempotent.
  void finalize();

  const TraceIdSet& root() const { return root_; }
  bool trivial() const { return nodes_.empty(); }
  // Empty while trivial.
  const std::vector<Node>& nodes() const { return nodes_; }

  // Sorted by smallest id. Valid after finalize().
  std::vector<TraceIdSet> leaves() const;

 private:
  std::uint32_t& leaf_of(TraceId id);

  TraceIdSet root_;
  std::vector<Node> nodes_;
  std::vector<std::uint32_t> leaf_of_;
};

struct TreeResult {
  std::vector<TraceIdSet> leaves;
  TreeMetrics metrics;
};

struct LeakageRecord {
  CallStack call_stack;
  InstructionKey instruction;
  // One per invocation of the context, in tree order.
  std::vector<TreeResult> trees;
  Statistic mutual_information;
  Statistic conditional_ge;
  Statistic minimal_ge;
  Statistic score;
  Severity severity = Severity::info;

  bool leaking() const { return score.max > 0; }
};

struct AnalysisResult {
  std::size_t trace_count = 0;
  // Every (call stack, instruction) seen, ordered by stack then instruction.
  std::vector<LeakageRecord> records;

  std::vector<const LeakageRecord*> findings() const;
};

// `trace_count` is the severity reference n; defaults to the tree's traces.
AnalysisResult analyze(const CallTree& tree, std::size_t trace_count = 0);

// Completes aggregates and severity from `trees`.
void aggregate(LeakageRecord& record, std::size_t trace_count);

}  // namespace leakscope
