#include "leakscope/calltree.hpp"

#include <algorithm>
#include <unordered_map>

#include <fmt/format.h>

#include "leakscope/errors.hpp"

namespace leakscope {

CallTreeNode::~CallTreeNode() {
  std::vector<std::unique_ptr<CallTreeNode>> pending;
  auto harvest = [&pending](CallTreeNode& node) {
    for (auto& entry : node.entries) {
      if (auto* call = std::get_if<CallEntry>(&entry); call && call->body) pending.push_back(std::move(call->body));
    }
    for (auto& split : node.splits) {
      if (split.child) pending.push_back(std::move(split.child));
    }
  };
  harvest(*this);
  while (!pending.empty()) {
    std::unique_ptr<CallTreeNode> node = std::move(pending.back());
    pending.pop_back();
    harvest(*node);
  }
}

TraceIdSet MemoryAccessEntry::trace_ids() const {
  TraceIdSet ids;
  for (const auto& [key, set] : buckets) ids |= set;
  return ids;
}

std::string_view describe(InstructionKind kind) {
  switch (kind) {
    case InstructionKind::jump:
      return "jump";
    case InstructionKind::call:
      return "call";
    case InstructionKind::ret:
      return "return";
    case InstructionKind::memory_read:
    case InstructionKind::memory_write:
      break;
  }
  return "memory access";
}

std::optional<InstructionKey> instruction_of(const NodeEntry& entry) {
  if (const auto* b = std::get_if<BranchEntry>(&entry)) {
    return InstructionKey{b->source, b->kind == BranchKind::ret ? InstructionKind::ret : InstructionKind::jump};
  }
  if (const auto* c = std::get_if<CallEntry>(&entry)) return InstructionKey{c->source, InstructionKind::call};
  if (const auto* m = std::get_if<MemoryAccessEntry>(&entry)) {
    return InstructionKey{m->instruction, m->kind == AccessKind::read ? InstructionKind::memory_read : InstructionKind::memory_write};
  }
  return std::nullopt;
}

namespace {

bool matches(const NodeEntry& existing, const TraceEntry& entry) {
  if (const auto* b = std::get_if<Branch>(&entry)) {
    if (b->kind == BranchKind::call) {
      const auto* c = std::get_if<CallEntry>(&existing);
      return c && c->source == b->source && c->target == b->target;
    }
    const auto* e = std::get_if<BranchEntry>(&existing);
    return e && e->kind == b->kind && e->source == b->source && e->target == b->target && e->taken == b->taken;
  }
  if (std::holds_alternative<Allocation>(entry)) return std::holds_alternative<AllocationEntry>(existing);
  const auto& m = std::get<MemoryAccess>(entry);
  const auto* e = std::get_if<MemoryAccessEntry>(&existing);
  return e && e->kind == m.kind && e->instruction == m.instruction;
}

}  // namespace

// Walks one trace through the tree, extending and cutting nodes as needed.
class TreeInserter {
 public:
  TreeInserter(CallTree& tree, TraceId id) : tree_(tree), id_(id), cur_{tree.root_.get(), 0} {
    if (tree.root_->trace_ids.contains(id)) throw contract_error(fmt::format("trace {} inserted twice", id));
    tree.root_->trace_ids.insert(id);
  }

  void step(const TraceEntry& entry) {
    for (;;) {
      CallTreeNode& node = *cur_.node;
      if (cur_.pos < node.entries.size()) {
        if (matches(node.entries[cur_.pos], entry)) {
          advance(node.entries[cur_.pos], entry);
          return;
        }
        cut(node, cur_.pos);
        append_to(add_child(node), entry);
        return;
      }
      if (!node.splits.empty()) {
        CallTreeNode* next = nullptr;
        for (auto& split : node.splits) {
          if (!split.child->entries.empty() && matches(split.child->entries.front(), entry)) {
            next = split.child.get();
            break;
          }
        }
        if (next == nullptr) {
          append_to(add_child(node), entry);
          return;
        }
        next->trace_ids.insert(id_);
        cur_ = {next, 0};
        continue;
      }
      if (node.trace_ids.size() == 1) {
        append_to(node, entry);
        return;
      }
      // Every other trace of this node ended here.
      cut(node, cur_.pos);
      append_to(add_child(node), entry);
      return;
    }
  }

  void finish() {
    end_at(cur_);
    while (!stack_.empty()) {
      end_at(stack_.back());
      stack_.pop_back();
    }
  }

 private:
  struct Cursor {
    CallTreeNode* node;
    std::size_t pos;
  };

  // Moves entries [pos, end) and the splits into a child keeping the other ids.
  void cut(CallTreeNode& node, std::size_t pos) {
    auto rest = std::make_unique<CallTreeNode>();
    rest->entries.reserve(node.entries.size() - pos);
    std::move(node.entries.begin() + static_cast<std::ptrdiff_t>(pos), node.entries.end(), std::back_inserter(rest->entries));
    node.entries.erase(node.entries.begin() + static_cast<std::ptrdiff_t>(pos), node.entries.end());
    rest->splits = std::move(node.splits);
    rest->trace_ids = node.trace_ids;
    rest->trace_ids.erase(id_);
    node.splits.clear();
    node.splits.push_back({std::move(rest)});
  }

  CallTreeNode& add_child(CallTreeNode& node) {
    auto child = std::make_unique<CallTreeNode>();
    child->trace_ids.insert(id_);
    CallTreeNode& ref = *child;
    node.splits.push_back({std::move(child)});
    return ref;
  }

  void append_to(CallTreeNode& node, const TraceEntry& entry) {
    cur_ = {&node, node.entries.size()};
    std::visit(
        [&](const auto& e) {
          using T = std::decay_t<decltype(e)>;
          if constexpr (std::is_same_v<T, Branch>) {
            if (e.kind == BranchKind::call) {
              node.entries.emplace_back(CallEntry{e.source, e.target, std::make_unique<CallTreeNode>()});
            } else {
              node.entries.emplace_back(BranchEntry{e.kind, e.source, e.target, e.taken});
            }
          } else if constexpr (std::is_same_v<T, Allocation>) {
            node.entries.emplace_back(AllocationEntry{tree_.next_alloc_id_++, {}});
          } else {
            node.entries.emplace_back(MemoryAccessEntry{e.kind, e.instruction, {}});
          }
        },
        entry);
    advance(node.entries.back(), entry);
  }

  // Records `entry` in the matching tree entry at the cursor and moves on.
  void advance(NodeEntry& existing, const TraceEntry& entry) {
    ++cur_.pos;
    if (auto* call = std::get_if<CallEntry>(&existing)) {
      stack_.push_back(cur_);
      call->body->trace_ids.insert(id_);
      cur_ = {call->body.get(), 0};
    } else if (auto* branch = std::get_if<BranchEntry>(&existing)) {
      if (branch->kind == BranchKind::ret) {
        if (stack_.empty()) throw structural_error(fmt::format("trace {}: return without a matching call", id_));
        cur_ = stack_.back();
        stack_.pop_back();
      }
    } else if (auto* alloc = std::get_if<AllocationEntry>(&existing)) {
      const auto& a = std::get<Allocation>(entry);
      alloc_map_[a.alloc_id] = alloc->alloc_id;
      alloc->sizes.emplace_back(id_, a.size);
    } else {
      auto& mem = std::get<MemoryAccessEntry>(existing);
      const auto& m = std::get<MemoryAccess>(entry);
      auto it = alloc_map_.find(m.alloc_id);
      if (it == alloc_map_.end()) {
        throw structural_error(fmt::format("trace {}: memory access to allocation {} before it was allocated", id_, m.alloc_id));
      }
      MemoryKey key{it->second, m.offset};
      auto pos = std::lower_bound(mem.buckets.begin(), mem.buckets.end(), key, [](const auto& b, const MemoryKey& k) { return b.first < k; });
      if (pos == mem.buckets.end() || pos->first != key) pos = mem.buckets.insert(pos, {key, TraceIdSet{}});
      pos->second.insert(id_);
    }
  }

  void end_at(Cursor at) {
    CallTreeNode& node = *at.node;
    if (at.pos < node.entries.size()) {
      cut(node, at.pos);
      add_child(node);
      return;
    }
    if (node.splits.empty()) return;
    for (auto& split : node.splits) {
      if (split.child->entries.empty() && split.child->splits.empty()) {
        split.child->trace_ids.insert(id_);
        return;
      }
    }
    add_child(node);
  }

  CallTree& tree_;
  TraceId id_;
  Cursor cur_;
  std::vector<Cursor> stack_;
  std::unordered_map<std::uint32_t, std::uint32_t> alloc_map_;
};

CallTree::CallTree() : root_(std::make_unique<CallTreeNode>()), images_(std::make_shared<ImageTable>()) {}

void CallTree::set_images(std::shared_ptr<const ImageTable> images) {
  if (!images) throw contract_error("image table must not be null");
  images_ = std::make_shared<ImageTable>(*images);
  images_fixed_ = true;
}

void CallTree::insert(const PreprocessedTrace& trace) {
  if (trace.images) {
    if (!images_fixed_) {
      set_images(trace.images);
    } else if (!(*images_ == *trace.images)) {
      throw lookup_error(fmt::format("trace {} uses a different image set than earlier traces", trace.testcase.value));
    }
  }
  images_->add_extern_names(trace.extern_names);
  property_names_.insert(trace.property_names.begin(), trace.property_names.end());
  insert(trace.testcase.value, trace.entries);
}

void CallTree::insert(TraceId id, std::span<const TraceEntry> entries) {
  TreeInserter inserter(*this, id);
  for (const auto& entry : entries) inserter.step(entry);
  inserter.finish();
}

namespace {

class Dumper {
 public:
  Dumper(const CallTree& tree, const DumpOptions& options) : tree_(tree), options_(options) {}

  std::string run() {
    line(0, "@root");
    // Explicit stack: split chains and call nesting can be very deep.
    frames_.push_back({&tree_.root(), 2, 0, 0, false});
    while (!frames_.empty()) {
      Frame& f = frames_.back();
      const CallTreeNode& node = *f.node;
      if (!f.started) {
        f.started = true;
        if (!node.entries.empty()) line(f.indent, "Trace entries:");
      }
      if (f.entry < node.entries.size()) {
        const NodeEntry& entry = node.entries[f.entry++];
        if (const CallTreeNode* body = render(entry, f.indent + 2)) {
          frames_.push_back({body, f.indent + 4, 0, 0, false});
        }
        continue;
      }
      if (f.split < node.splits.size()) {
        if (f.split == 0) line(f.indent, "Splits:");
        const CallTreeNode& child = *node.splits[f.split++].child;
        line(f.indent + 2, "@split: " + child.trace_ids.to_string());
        frames_.push_back({&child, f.indent + 4, 0, 0, false});
        continue;
      }
      frames_.pop_back();
    }
    return std::move(out_);
  }

 private:
  struct Frame {
    const CallTreeNode* node;
    int indent;
    std::size_t entry;
    std::size_t split;
    bool started;
  };

  void line(int indent, std::string_view text) {
    out_.append(static_cast<std::size_t>(indent), ' ');
    out_.append(text);
    out_.push_back('\n');
  }

  std::string addr(CodeAddress a) const { return format_address(a, tree_.images()); }

  std::string allocation(std::uint32_t id) const {
    auto it = options_.allocation_labels.find(id);
    return it != options_.allocation_labels.end() ? it->second : fmt::format("alloc{}", id);
  }

  std::string memory_slot(const MemoryKey& key) const {
    if (key.offset & kPropertyOffsetBit) {
      auto it = tree_.property_names().find(key.offset);
      if (it != tree_.property_names().end()) return fmt::format("{}.{}", allocation(key.alloc_id), it->second);
      return fmt::format("{}.<{:#x}>", allocation(key.alloc_id), key.offset);
    }
    return fmt::format("{}[{}]", allocation(key.alloc_id), key.offset);
  }

  // Returns the body to descend into for call entries.
  const CallTreeNode* render(const NodeEntry& entry, int indent) {
    if (const auto* b = std::get_if<BranchEntry>(&entry)) {
      std::string text = fmt::format("#{} {} -> {}", b->kind == BranchKind::ret ? "return" : "jump", addr(b->source), addr(b->target));
      if (!b->taken) text += " (not taken)";
      line(indent, text);
      return nullptr;
    }
    if (const auto* c = std::get_if<CallEntry>(&entry)) {
      line(indent, fmt::format("#call {} -> {}", addr(c->source), addr(c->target)));
      return c->body.get();
    }
    if (const auto* a = std::get_if<AllocationEntry>(&entry)) {
      if (options_.show_allocations) line(indent, "#allocation " + allocation(a->alloc_id));
      return nullptr;
    }
    const auto& m = std::get<MemoryAccessEntry>(entry);
    line(indent, fmt::format("#memory-{} at {}", to_string(m.kind), addr(m.instruction)));
    for (const auto& [key, ids] : m.buckets) line(indent + 2, fmt::format("{}: {}", memory_slot(key), ids.to_string()));
    return nullptr;
  }

  const CallTree& tree_;
  const DumpOptions& options_;
  std::vector<Frame> frames_;
  std::string out_;
};

}  // namespace

std::string dump_tree(const CallTree& tree, const DumpOptions& options) { return Dumper(tree, options).run(); }

}  // namespace leakscope
