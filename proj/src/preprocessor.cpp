#include "leakscope/preprocessor.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <future>
#include <unordered_set>

#include <fmt/format.h>

#include "leakscope/errors.hpp"

namespace leakscope {

namespace {

bool strictly_contains(const Loc& outer, const Loc& inner) { return contains(outer, inner) && !(outer == inner); }

bool at_or_before(const Loc& a, const Loc& b) {
  return a.file == b.file && !a.is_extern && !b.is_extern &&
         (a.start_line < b.start_line || (a.start_line == b.start_line && a.start_col <= b.start_col));
}

std::optional<std::uint64_t> numeric_offset(std::string_view text) {
  std::uint64_t value = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (text.empty() || ec != std::errc{} || ptr != text.data() + text.size() || value >= kPropertyOffsetBit) return std::nullopt;
  return value;
}

}  // namespace

TracePreprocessor::TracePreprocessor(TestcaseId testcase, std::shared_ptr<const ImageTable> images) {
  if (!images) throw contract_error("preprocessor needs an image table");
  trace_.testcase = testcase;
  trace_.images = std::move(images);
}

CodeAddress TracePreprocessor::address_of(const Loc& loc) {
  if (loc.is_extern) {
    CodeAddress addr = encode_extern(loc.extern_name);
    auto [it, inserted] = trace_.extern_names.emplace(addr.offset, loc.extern_name);
    if (!inserted && it->second != loc.extern_name) {
      throw lookup_error(fmt::format("extern names '{}' and '{}' collide", it->second, loc.extern_name));
    }
    return addr;
  }
  auto id = trace_.images->find(loc.file);
  if (!id) throw lookup_error(fmt::format("event {}: source file '{}' is not listed in the map file", event_index_, loc.file));
  return encode_address(*id, loc.start_line, loc.start_col);
}

void TracePreprocessor::resolve_cond(const RawEvent& next) {
  const PendingCond cond = std::move(*pending_);
  pending_.reset();

  Branch jump{BranchKind::jump, address_of(cond.cond), kUnresolvedAddress, false};
  if (!std::holds_alternative<raw::Ret2>(next)) {
    const Loc& target = primary_loc(next);
    bool taken = at_or_before(target, cond.cond) || !cond.body || contains(*cond.body, target);
    if (taken) {
      jump.target = address_of(target);
      jump.taken = true;
    }
  }
  trace_.entries.emplace_back(jump);
}

void TracePreprocessor::memory_access(AccessKind kind, const Loc& loc, std::uint64_t shadow_id, const std::string& property) {
  auto it = shadows_.find(shadow_id);
  if (it == shadows_.end()) {
    it = shadows_.emplace(shadow_id, ShadowObject{next_alloc_id_++, trace_.entries.size(), {}}).first;
    trace_.entries.emplace_back(Allocation{it->second.alloc_id, 0});
  }
  std::uint64_t offset = 0;
  if (auto numeric = numeric_offset(property)) {
    offset = *numeric;
  } else {
    offset = property_offset(property);
    trace_.property_names.emplace(offset, property);
  }
  it->second.offsets.push_back(offset);
  trace_.entries.emplace_back(MemoryAccess{kind, address_of(loc), it->second.alloc_id, offset});
}

void TracePreprocessor::feed(const RawEvent& event) {
  if (pending_) {
    const auto* expr = std::get_if<raw::Expr>(&event);
    if (expr && !pending_->body && strictly_contains(expr->loc, pending_->cond)) {
      pending_->body = expr->loc;
      ++event_index_;
      return;
    }
    resolve_cond(event);
  }

  std::visit(
      [&](const auto& e) {
        using T = std::decay_t<decltype(e)>;
        if constexpr (std::is_same_v<T, raw::Call>) {
          trace_.entries.emplace_back(Branch{BranchKind::call, address_of(e.source), address_of(e.target), true});
          frames_.emplace_back();
        } else if constexpr (std::is_same_v<T, raw::Cond>) {
          pending_ = PendingCond{e.loc, std::nullopt};
        } else if constexpr (std::is_same_v<T, raw::Ret1>) {
          if (frames_.empty()) throw structural_error(fmt::format("event {}: Ret1 outside of any call", event_index_));
          frames_.back().ret1 = e.loc;
        } else if constexpr (std::is_same_v<T, raw::Ret2>) {
          if (frames_.empty()) throw structural_error(fmt::format("event {}: Ret2 with empty call stack", event_index_));
          const Frame& frame = frames_.back();
          CodeAddress source = address_of(frame.ret1 ? *frame.ret1 : e.callee);
          trace_.entries.emplace_back(Branch{BranchKind::ret, source, address_of(e.callsite), true});
          frames_.pop_back();
        } else if constexpr (std::is_same_v<T, raw::Get>) {
          memory_access(AccessKind::read, e.loc, e.shadow_id, e.property);
        } else if constexpr (std::is_same_v<T, raw::Put>) {
          memory_access(AccessKind::write, e.loc, e.shadow_id, e.property);
        }
      },
      event);
  ++event_index_;
}

PreprocessedTrace TracePreprocessor::finish() {
  if (pending_) {
    const Loc& c = pending_->cond;
    throw structural_error(fmt::format("conditional at {}:{}:{} never resolved before trace end", c.file, c.start_line, c.start_col));
  }
  for (auto& [id, object] : shadows_) {
    std::sort(object.offsets.begin(), object.offsets.end());
    auto distinct = std::unique(object.offsets.begin(), object.offsets.end()) - object.offsets.begin();
    std::get<Allocation>(trace_.entries[object.entry_index]).size = static_cast<std::uint64_t>(distinct);
  }
  shadows_.clear();
  return std::move(trace_);
}

PreprocessedTrace preprocess(std::span<const RawEvent> events, TestcaseId testcase, std::shared_ptr<const ImageTable> images) {
  TracePreprocessor pre(testcase, std::move(images));
  for (const auto& e : events) pre.feed(e);
  return pre.finish();
}

PreprocessedTrace preprocess_file(const std::filesystem::path& path, TestcaseId testcase, std::shared_ptr<const ImageTable> images) {
  std::ifstream in(path);
  if (!in) throw format_error(fmt::format("cannot open trace {}", path.string()));
  RawTraceReader reader(in, path.string());
  TracePreprocessor pre(testcase, std::move(images));
  RawEvent event;
  try {
    while (reader.next(event)) pre.feed(event);
    return pre.finish();
  } catch (const structural_error& e) {
    throw structural_error(fmt::format("{}:{}: {}", path.string(), reader.line(), e.what()));
  } catch (const lookup_error& e) {
    throw lookup_error(fmt::format("{}:{}: {}", path.string(), reader.line(), e.what()));
  } catch (const encoding_error& e) {
    throw encoding_error(fmt::format("{}:{}: {}", path.string(), reader.line(), e.what()));
  }
}

TraceSet discover_traces(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw format_error(fmt::format("trace directory {} does not exist", dir.string()));
  const fs::path map_path = dir / "map.txt";
  if (!fs::exists(map_path)) throw format_error(fmt::format("missing map.txt in {}", dir.string()));

  std::vector<std::pair<std::uint32_t, fs::path>> found;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".trace") continue;
    const std::string stem = entry.path().stem().string();
    std::uint32_t id = 0;
    auto [ptr, ec] = std::from_chars(stem.data(), stem.data() + stem.size(), id);
    if (stem.empty() || ec != std::errc{} || ptr != stem.data() + stem.size()) {
      throw format_error(fmt::format("trace file name {} is not <number>.trace", entry.path().string()));
    }
    found.emplace_back(id, entry.path());
  }
  if (found.empty()) throw format_error(fmt::format("no <k>.trace files in {}", dir.string()));
  std::sort(found.begin(), found.end());

  TraceSet set;
  for (std::size_t i = 0; i < found.size(); ++i) {
    if (found[i].first != i) throw format_error(fmt::format("non-dense testcase ids in {}: expected {}.trace", dir.string(), i));
    set.traces.push_back(found[i].second);
  }
  MapFile map = load_map_file(map_path.string());
  set.images = std::make_shared<const ImageTable>(ImageTable::from_files(map.files));
  return set;
}

void preprocess_each(const TraceSet& set, std::size_t workers, const std::function<void(PreprocessedTrace&&)>& sink) {
  if (workers == 0) throw contract_error("preprocess.workers must be at least 1");
  const std::size_t n = set.traces.size();
  for (std::size_t begin = 0; begin < n; begin += workers) {
    const std::size_t end = std::min(n, begin + workers);
    if (end - begin == 1) {
      sink(preprocess_file(set.traces[begin], TestcaseId{static_cast<std::uint32_t>(begin)}, set.images));
      continue;
    }
    std::vector<std::future<PreprocessedTrace>> batch;
    for (std::size_t i = begin; i < end; ++i) {
      batch.push_back(std::async(std::launch::async, [&set, i] {
        return preprocess_file(set.traces[i], TestcaseId{static_cast<std::uint32_t>(i)}, set.images);
      }));
    }
    // Drain every future before rethrowing so no worker outlives `set`.
    std::vector<PreprocessedTrace> done;
    std::exception_ptr failure;
    for (auto& f : batch) {
      try {
        done.push_back(f.get());
      } catch (...) {
        if (!failure) failure = std::current_exception();
      }
    }
    if (failure) std::rethrow_exception(failure);
    for (auto& t : done) sink(std::move(t));
  }
}

std::vector<PreprocessedTrace> preprocess_all(const std::filesystem::path& dir, std::size_t workers) {
  TraceSet set = discover_traces(dir);
  std::vector<PreprocessedTrace> out;
  out.reserve(set.traces.size());
  preprocess_each(set, workers, [&](PreprocessedTrace&& t) { out.push_back(std::move(t)); });
  return out;
}

}  // namespace leakscope
