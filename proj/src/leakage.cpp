#include "leakscope/leakage.hpp"

#include <algorithm>
#include <map>
#include <memory>

#include <fmt/format.h>

#include "leakscope/errors.hpp"

namespace leakscope {

std::vector<std::string> format_call_stack(const CallStack& stack, const ImageTable& images) {
  std::vector<std::string> lines;
  lines.reserve(stack.size());
  for (const auto& frame : stack) lines.push_back(fmt::format("{} -> {}", format_address(frame.call_site, images), format_address(frame.callee, images)));
  return lines;
}

TraceIdTree::TraceIdTree(TraceIdSet root) : root_(std::move(root)) {}

std::uint32_t& TraceIdTree::leaf_of(TraceId id) {
  if (id >= leaf_of_.size()) leaf_of_.resize(static_cast<std::size_t>(id) + 1, 0);
  return leaf_of_[id];
}

void TraceIdTree::reach(const TraceIdSet& ids) {
  if (ids.is_subset_of(root_)) return;
  if (!nodes_.empty()) {
    TraceIdSet fresh = ids - root_;
    fresh.for_each([&](TraceId id) { leaf_of(id) = 0; });
    nodes_[0].ids |= fresh;
  }
  root_ |= ids;
}

void TraceIdTree::refine(std::span<const TraceIdSet> groups) {
  for (const auto& g : groups) reach(g);
  // block -> group index -> piece
  std::map<std::uint32_t, std::map<std::size_t, TraceIdSet>> pieces;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    groups[g].for_each([&](TraceId id) { pieces[nodes_.empty() ? 0U : leaf_of(id)][g].insert(id); });
  }
  if (std::none_of(pieces.begin(), pieces.end(), [](const auto& p) { return p.second.size() >= 2; })) return;
  if (nodes_.empty()) {
    nodes_.push_back({root_, {}});
    root_.for_each([&](TraceId id) { leaf_of(id) = 0; });
  }
  for (auto& [block, by_group] : pieces) {
    if (by_group.size() < 2) continue;
    for (auto& [g, piece] : by_group) {
      const auto child = static_cast<std::uint32_t>(nodes_.size());
      piece.for_each([&](TraceId id) { leaf_of(id) = child; });
      nodes_[block].children.push_back(child);
      nodes_.push_back({std::move(piece), {}});
    }
  }
}

void TraceIdTree::finalize() {
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].children.empty()) continue;
    TraceIdSet rest = nodes_[i].ids;
    for (auto c : nodes_[i].children) rest -= nodes_[c].ids;
    if (rest.empty()) continue;
    const auto child = static_cast<std::uint32_t>(nodes_.size());
    rest.for_each([&](TraceId id) { leaf_of(id) = child; });
    nodes_[i].children.push_back(child);
    nodes_.push_back({std::move(rest), {}});
  }
}

std::vector<TraceIdSet> TraceIdTree::leaves() const {
  std::vector<TraceIdSet> out;
  if (nodes_.empty()) {
    if (!root_.empty()) out.push_back(root_);
    return out;
  }
  for (const auto& node : nodes_) {
    if (node.children.empty()) out.push_back(node.ids);
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<const LeakageRecord*> AnalysisResult::findings() const {
  std::vector<const LeakageRecord*> out;
  for (const auto& r : records) {
    if (r.leaking()) out.push_back(&r);
  }
  return out;
}

void aggregate(LeakageRecord& record, std::size_t trace_count) {
  if (record.trees.empty()) throw contract_error("record without trace-ID trees");
  std::vector<double> mi, cge, mge, score;
  for (const auto& t : record.trees) {
    mi.push_back(t.metrics.mutual_information);
    cge.push_back(t.metrics.conditional_ge);
    mge.push_back(t.metrics.minimal_ge);
    score.push_back(t.metrics.score);
  }
  record.mutual_information = summarize(mi);
  record.conditional_ge = summarize(cge);
  record.minimal_ge = summarize(mge);
  record.score = summarize(score);
  record.severity = record.leaking() ? severity_for(record.minimal_ge.mean, trace_count) : Severity::info;
}

namespace {

struct KeyHash {
  std::size_t operator()(const InstructionKey& k) const noexcept {
    std::uint64_t h = (std::uint64_t{k.address.image_id} << 32) ^ k.address.offset;
    h ^= static_cast<std::uint64_t>(k.kind) * 0x9E3779B97F4A7C15ULL;
    return std::hash<std::uint64_t>{}(h);
  }
};

std::optional<InstructionKey> first_instruction(const CallTreeNode& node) {
  for (const auto& e : node.entries) {
    if (auto k = instruction_of(e)) return k;
  }
  return std::nullopt;
}

class Analyzer {
 public:
  explicit Analyzer(const CallTree& tree) : tree_(tree) {}

  AnalysisResult run(std::size_t trace_count) {
    walk();
    AnalysisResult result;
    result.trace_count = trace_count;
    result.records.reserve(records_.size());
    for (auto& [key, record] : records_) {
      record.call_stack = stacks_[key.first];
      record.instruction = key.second;
      aggregate(record, trace_count);
      result.records.push_back(std::move(record));
    }
    std::sort(result.records.begin(), result.records.end(), [](const LeakageRecord& a, const LeakageRecord& b) {
      if (a.call_stack != b.call_stack) return a.call_stack < b.call_stack;
      return a.instruction < b.instruction;
    });
    return result;
  }

 private:
  struct Invocation {
    std::uint32_t stack = 0;
    std::unordered_map<InstructionKey, TraceIdTree, KeyHash> trees;
  };

  struct Frame {
    const CallTreeNode* node;
    Invocation* invocation;
    // Set on the frame that opened the invocation.
    std::unique_ptr<Invocation> owned;
    std::size_t entry = 0;
    std::size_t split = 0;
    bool split_seen = false;
  };

  std::uint32_t intern(CallStack stack) {
    auto [it, inserted] = stack_ids_.emplace(stack, static_cast<std::uint32_t>(stacks_.size()));
    if (inserted) stacks_.push_back(std::move(stack));
    return it->second;
  }

  TraceIdTree& tree(Invocation& inv, const InstructionKey& key) { return inv.trees[key]; }

  void walk() {
    auto root = std::make_unique<Invocation>();
    root->stack = intern({});
    std::vector<Frame> frames;
    Invocation* root_inv = root.get();
    frames.push_back({&tree_.root(), root_inv, std::move(root)});

    while (!frames.empty()) {
      Frame& f = frames.back();
      const CallTreeNode& node = *f.node;
      if (f.entry < node.entries.size()) {
        const NodeEntry& entry = node.entries[f.entry++];
        if (const auto* call = std::get_if<CallEntry>(&entry)) {
          tree(*f.invocation, {call->source, InstructionKind::call}).reach(node.trace_ids);
          CallStack stack = stacks_[f.invocation->stack];
          stack.push_back({call->source, call->target});
          auto inv = std::make_unique<Invocation>();
          inv->stack = intern(std::move(stack));
          Invocation* raw = inv.get();
          frames.push_back({call->body.get(), raw, std::move(inv)});
        } else if (const auto* mem = std::get_if<MemoryAccessEntry>(&entry)) {
          TraceIdTree& t = tree(*f.invocation, *instruction_of(entry));
          t.reach(node.trace_ids);
          if (mem->buckets.size() >= 2) {
            std::vector<TraceIdSet> groups;
            groups.reserve(mem->buckets.size());
            for (const auto& [key, ids] : mem->buckets) groups.push_back(ids);
            t.refine(groups);
          }
        } else if (auto key = instruction_of(entry)) {
          tree(*f.invocation, *key).reach(node.trace_ids);
        }
        continue;
      }
      if (!f.split_seen) {
        f.split_seen = true;
        attribute_split(node, *f.invocation);
      }
      if (f.split < node.splits.size()) {
        Invocation* inv = f.invocation;
        const CallTreeNode* child = node.splits[f.split++].child.get();
        frames.push_back({child, inv, nullptr});
        continue;
      }
      if (f.owned) flush(*f.owned);
      frames.pop_back();
    }
  }

  // The responsible instruction is the one the diverging continuations start
  // with; if they start at different instructions, the smallest one wins so
  // the choice does not depend on insertion order.
  void attribute_split(const CallTreeNode& node, Invocation& inv) {
    if (node.splits.empty()) return;
    std::optional<InstructionKey> cause;
    std::vector<TraceIdSet> groups;
    groups.reserve(node.splits.size());
    for (const auto& split : node.splits) {
      groups.push_back(split.child->trace_ids);
      if (auto k = first_instruction(*split.child); k && (!cause || *k < *cause)) cause = k;
    }
    if (cause) tree(inv, *cause).refine(groups);
  }

  void flush(Invocation& inv) {
    std::vector<std::pair<InstructionKey, TraceIdTree*>> ordered;
    ordered.reserve(inv.trees.size());
    for (auto& [key, t] : inv.trees) ordered.emplace_back(key, &t);
    std::sort(ordered.begin(), ordered.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    std::vector<std::size_t> sizes;
    for (auto& [key, t] : ordered) {
      t->finalize();
      TreeResult result;
      result.leaves = t->leaves();
      sizes.clear();
      for (const auto& leaf : result.leaves) sizes.push_back(leaf.size());
      result.metrics = evaluate(sizes);
      records_[{inv.stack, key}].trees.push_back(std::move(result));
    }
    inv.trees.clear();
  }

  const CallTree& tree_;
  std::map<CallStack, std::uint32_t> stack_ids_;
  std::vector<CallStack> stacks_;
  std::map<std::pair<std::uint32_t, InstructionKey>, LeakageRecord> records_;
};

}  // namespace

AnalysisResult analyze(const CallTree& tree, std::size_t trace_count) {
  if (trace_count == 0) trace_count = tree.trace_count();
  return Analyzer(tree).run(trace_count);
}

}  // namespace leakscope
