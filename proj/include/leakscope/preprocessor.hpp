#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "leakscope/rawtrace.hpp"
#include "leakscope/trace_model.hpp"

namespace leakscope {

// Incremental raw-event to trace-entry translation for one trace.
//
// Conditionals are resolved by the next executed location: an Expr right
// after a Cond whose range strictly contains the condition supplies the
// governed body range; the first location after that decides the jump.
// Shadow objects become allocations in first-access order, so identical
// access orders yield identical allocation ids across traces.
class TracePreprocessor {
 public:
  TracePreprocessor(TestcaseId testcase, std::shared_ptr<const ImageTable> images);

  void feed(const RawEvent& event);
  PreprocessedTrace finish();

  std::size_t events_seen() const { return event_index_; }

 private:
  struct Frame {
    std::optional<Loc> ret1;
  };
  struct PendingCond {
    Loc cond;
    std::optional<Loc> body;
  };
  struct ShadowObject {
    std::uint32_t alloc_id;
    std::size_t entry_index;
    std::vector<std::uint64_t> offsets;
  };

  CodeAddress address_of(const Loc& loc);
  void resolve_cond(const RawEvent& next);
  void memory_access(AccessKind kind, const Loc& loc, std::uint64_t shadow_id, const std::string& property);

  PreprocessedTrace trace_;
  std::vector<Frame> frames_;
  std::optional<PendingCond> pending_;
  std::unordered_map<std::uint64_t, ShadowObject> shadows_;
  std::uint32_t next_alloc_id_ = 1;
  std::size_t event_index_ = 0;
};

PreprocessedTrace preprocess(std::span<const RawEvent> events, TestcaseId testcase, std::shared_ptr<const ImageTable> images);

// Reads and preprocesses one raw trace file without materializing its events.
PreprocessedTrace preprocess_file(const std::filesystem::path& path, TestcaseId testcase, std::shared_ptr<const ImageTable> images);

struct TraceSet {
  std::shared_ptr<const ImageTable> images;
  // Index = testcase id.
  std::vector<std::filesystem::path> traces;
};

// Lists `<k>.trace` files and loads `map.txt`; ids must be dense from 0.
TraceSet discover_traces(const std::filesystem::path& dir);

// Preprocesses every trace of `set` with up to `workers` threads and hands
// results to `sink` strictly in testcase order. At most `workers` traces are
// held in memory at once.
void preprocess_each(const TraceSet& set, std::size_t workers, const std::function<void(PreprocessedTrace&&)>& sink);

std::vector<PreprocessedTrace> preprocess_all(const std::filesystem::path& dir, std::size_t workers = 4);

}  // namespace leakscope
