#pragma once

// Radix-trie call tree merging the preprocessed traces of one target.
//
// A node holds the entries shared by every trace that reached it. Call
// entries own the node of the callee body; after the body returns, the
// traces resume behind the call entry. When traces disagree on a branch or
// call target, the node is cut at that position and the disagreeing
// continuations become sibling split children. Differing memory offsets
// never cut a node; they are recorded per trace inside the access entry.

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "leakscope/trace_id_set.hpp"
#include "leakscope/trace_model.hpp"

namespace leakscope {

struct CallTreeNode;

// Jump or return. Calls are CallEntry.
struct BranchEntry {
  BranchKind kind = BranchKind::jump;
  CodeAddress source;
  CodeAddress target;
  bool taken = true;
};

struct CallEntry {
  CodeAddress source;
  CodeAddress target;
  std::unique_ptr<CallTreeNode> body;
};

struct AllocationEntry {
  // Tree-wide id; traces map their own ids onto it while being inserted.
  std::uint32_t alloc_id = 0;
  std::vector<std::pair<TraceId, std::uint64_t>> sizes;
};

struct MemoryKey {
  std::uint32_t alloc_id = 0;
  std::uint64_t offset = 0;

  friend auto operator<=>(const MemoryKey&, const MemoryKey&) = default;
};

struct MemoryAccessEntry {
  AccessKind kind = AccessKind::read;
  CodeAddress instruction;
  // Sorted by key; the id sets partition the traces executing the entry.
  std::vector<std::pair<MemoryKey, TraceIdSet>> buckets;

  TraceIdSet trace_ids() const;
};

using NodeEntry = std::variant<BranchEntry, CallEntry, AllocationEntry, MemoryAccessEntry>;

struct SplitEdge {
  // child->trace_ids are the ids following this edge. A child without
  // entries holds the traces that ended at the split point.
  std::unique_ptr<CallTreeNode> child;
};

struct CallTreeNode {
  std::vector<NodeEntry> entries;
  std::vector<SplitEdge> splits;
  TraceIdSet trace_ids;

  CallTreeNode() = default;
  CallTreeNode(CallTreeNode&&) = default;
  CallTreeNode& operator=(CallTreeNode&&) = default;
  // Tears deep trees down without recursion.
  ~CallTreeNode();
};

// Address that a split or leak is attributed to; `kind` disambiguates a read
// and a write at the same source location.
enum class InstructionKind : std::uint8_t { jump, call, ret, memory_read, memory_write };

struct InstructionKey {
  CodeAddress address;
  InstructionKind kind = InstructionKind::jump;

  friend auto operator<=>(const InstructionKey&, const InstructionKey&) = default;
};

// "jump", "call", "return", "memory access".
std::string_view describe(InstructionKind kind);

// Instruction of an entry; nullopt for allocations.
std::optional<InstructionKey> instruction_of(const NodeEntry& entry);

class CallTree {
 public:
  CallTree();

  // Traces may arrive in any id order; each id at most once.
  void insert(const PreprocessedTrace& trace);
  void insert(TraceId id, std::span<const TraceEntry> entries);

  const CallTreeNode& root() const { return *root_; }
  const TraceIdSet& trace_ids() const { return root_->trace_ids; }
  std::size_t trace_count() const { return root_->trace_ids.size(); }

  // Union of the rendering tables of all inserted traces.
  const ImageTable& images() const { return *images_; }
  void set_images(std::shared_ptr<const ImageTable> images);
  const std::map<std::uint64_t, std::string>& property_names() const { return property_names_; }

 private:
  friend class TreeInserter;

  std::unique_ptr<CallTreeNode> root_;
  std::shared_ptr<ImageTable> images_;
  bool images_fixed_ = false;
  std::map<std::uint64_t, std::string> property_names_;
  std::uint32_t next_alloc_id_ = 1;
};

struct DumpOptions {
  // Print allocation entries; the classic dump leaves them out.
  bool show_allocations = false;
  // Names for tree allocation ids; unnamed ones print as alloc<id>.
  std::map<std::uint32_t, std::string> allocation_labels;
};

// Depth-first text rendering, two spaces per level:
//   @root
//     Trace entries:
//       #call main+1 -> func+0
//         Trace entries: ...
//     Splits:
//       @split: 0
//         Trace entries: ...
std::string dump_tree(const CallTree& tree, const DumpOptions& options = {});

}  // namespace leakscope
