#include "leakscope/trace_cache.hpp"

#include <algorithm>
#include <array>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include <fmt/format.h>

#include "leakscope/errors.hpp"

namespace leakscope {

namespace {

constexpr std::array<char, 4> kMagic{'L', 'S', 'T', 'C'};
constexpr std::uint32_t kVersion = 1;

enum class Tag : std::uint8_t { call = 1, ret, jump, allocation, read, write };

template <typename T>
void put(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

void put_string(std::ostream& out, const std::string& s) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

void put_address(std::ostream& out, CodeAddress a) {
  put(out, a.image_id);
  put(out, a.offset);
}

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  template <typename T>
  T get() {
    T value{};
    in_.read(reinterpret_cast<char*>(&value), sizeof(T));
    if (!in_) throw format_error("preprocessed cache is truncated");
    return value;
  }

  std::string get_string() {
    auto n = get<std::uint32_t>();
    std::string s(n, '\0');
    in_.read(s.data(), n);
    if (!in_) throw format_error("preprocessed cache is truncated");
    return s;
  }

  CodeAddress get_address() {
    CodeAddress a;
    a.image_id = get<std::uint32_t>();
    a.offset = get<std::uint32_t>();
    return a;
  }

 private:
  std::istream& in_;
};

}  // namespace

void write_trace_cache(std::ostream& out, const PreprocessedTrace& trace) {
  out.write(kMagic.data(), kMagic.size());
  put(out, kVersion);
  put(out, trace.testcase.value);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(trace.extern_names.size()));
  for (const auto& [key, name] : trace.extern_names) {
    put(out, key);
    put_string(out, name);
  }
  put<std::uint32_t>(out, static_cast<std::uint32_t>(trace.property_names.size()));
  for (const auto& [key, name] : trace.property_names) {
    put(out, key);
    put_string(out, name);
  }
  put<std::uint64_t>(out, trace.entries.size());
  for (const auto& entry : trace.entries) {
    if (const auto* b = std::get_if<Branch>(&entry)) {
      Tag tag = b->kind == BranchKind::call ? Tag::call : b->kind == BranchKind::ret ? Tag::ret : Tag::jump;
      put(out, tag);
      put_address(out, b->source);
      put_address(out, b->target);
      put<std::uint8_t>(out, b->taken ? 1 : 0);
    } else if (const auto* a = std::get_if<Allocation>(&entry)) {
      put(out, Tag::allocation);
      put(out, a->alloc_id);
      put(out, a->size);
    } else {
      const auto& m = std::get<MemoryAccess>(entry);
      put(out, m.kind == AccessKind::read ? Tag::read : Tag::write);
      put_address(out, m.instruction);
      put(out, m.alloc_id);
      put(out, m.offset);
    }
  }
  if (!out) throw format_error("failed to write preprocessed cache");
}

PreprocessedTrace read_trace_cache(std::istream& in, std::shared_ptr<const ImageTable> images) {
  std::array<char, 4> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) throw format_error("not a preprocessed trace cache");
  Reader r(in);
  if (auto v = r.get<std::uint32_t>(); v != kVersion) throw format_error(fmt::format("unsupported cache version {}", v));

  PreprocessedTrace trace;
  trace.images = std::move(images);
  trace.testcase.value = r.get<std::uint32_t>();
  for (auto n = r.get<std::uint32_t>(); n > 0; --n) {
    auto key = r.get<std::uint32_t>();
    trace.extern_names.emplace(key, r.get_string());
  }
  for (auto n = r.get<std::uint32_t>(); n > 0; --n) {
    auto key = r.get<std::uint64_t>();
    trace.property_names.emplace(key, r.get_string());
  }
  const auto count = r.get<std::uint64_t>();
  trace.entries.reserve(static_cast<std::size_t>(std::min<std::uint64_t>(count, 1U << 24)));
  for (std::uint64_t i = 0; i < count; ++i) {
    const Tag tag = r.get<Tag>();
    switch (tag) {
      case Tag::call:
      case Tag::ret:
      case Tag::jump: {
        Branch b;
        b.kind = tag == Tag::call ? BranchKind::call : tag == Tag::ret ? BranchKind::ret : BranchKind::jump;
        b.source = r.get_address();
        b.target = r.get_address();
        b.taken = r.get<std::uint8_t>() != 0;
        trace.entries.emplace_back(b);
        break;
      }
      case Tag::allocation: {
        Allocation a;
        a.alloc_id = r.get<std::uint32_t>();
        a.size = r.get<std::uint64_t>();
        trace.entries.emplace_back(a);
        break;
      }
      case Tag::read:
      case Tag::write: {
        MemoryAccess m;
        m.kind = tag == Tag::read ? AccessKind::read : AccessKind::write;
        m.instruction = r.get_address();
        m.alloc_id = r.get<std::uint32_t>();
        m.offset = r.get<std::uint64_t>();
        trace.entries.emplace_back(m);
        break;
      }
      default:
        throw format_error(fmt::format("unknown entry tag {} in preprocessed cache", static_cast<int>(tag)));
    }
  }
  return trace;
}

}  // namespace leakscope

namespace leakscope {

void save_trace_cache(const std::filesystem::path& path, const PreprocessedTrace& trace) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw format_error(fmt::format("cannot write {}", path.string()));
  write_trace_cache(out, trace);
}

PreprocessedTrace load_trace_cache(const std::filesystem::path& path, std::shared_ptr<const ImageTable> images) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw format_error(fmt::format("cannot open {}", path.string()));
  try {
    return read_trace_cache(in, std::move(images));
  } catch (const format_error& e) {
    throw format_error(fmt::format("{}: {}", path.string(), e.what()));
  }
}

}  // namespace leakscope
