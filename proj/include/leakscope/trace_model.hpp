#pragma once

// Shared vocabulary of the pipeline: images, dummy code addresses, and the
// preprocessed trace entries every later stage works on.

#include <compare>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

namespace leakscope {

inline constexpr std::string_view kExternImageName = "[extern]";
inline constexpr std::uint32_t kExternImageId = 0;

enum class ImageKind : std::uint8_t {
  // Offsets encode (line << 16) | column.
  source,
  // Offsets are raw instruction offsets, rendered as name+offset.
  binary,
  // Offsets are keys into the extern function-name table.
  external,
};

struct ImageInfo {
  std::uint32_t id = 0;
  std::string name;
  ImageKind kind = ImageKind::source;

  friend bool operator==(const ImageInfo&, const ImageInfo&) = default;
};

struct CodeAddress {
  std::uint32_t image_id = 0;
  std::uint32_t offset = 0;

  friend auto operator<=>(const CodeAddress&, const CodeAddress&) = default;
};

// Target of a jump whose branch was not taken.
inline constexpr CodeAddress kUnresolvedAddress{0xFFFFFFFFU, 0xFFFFFFFFU};

struct CodeAddressHash {
  std::size_t operator()(const CodeAddress& a) const noexcept {
    return std::hash<std::uint64_t>{}((std::uint64_t{a.image_id} << 32) | a.offset);
  }
};

// Stable 32-bit key of an extern function name (FNV-1a).
std::uint32_t extern_name_key(std::string_view name) noexcept;

// Stable offset for a non-numeric property name: FNV-1a 64 with the top bit
// set, so it never collides with a numeric element index below 2^63.
std::uint64_t property_offset(std::string_view name) noexcept;
inline constexpr std::uint64_t kPropertyOffsetBit = std::uint64_t{1} << 63;

// Images of one analysis run plus the extern-name table shared by all traces.
class ImageTable {
 public:
  ImageTable();
  explicit ImageTable(std::vector<ImageInfo> images);

  // Builds a table from map-file order: index 0 must be `[extern]`.
  static ImageTable from_files(std::span<const std::string> files);

  const ImageInfo& at(std::uint32_t id) const;
  const ImageInfo* find(std::uint32_t id) const;
  std::optional<std::uint32_t> find(std::string_view name) const;
  std::span<const ImageInfo> images() const { return images_; }

  // Throws lookup_error when two different names share a key.
  void add_extern_name(std::uint32_t key, const std::string& name);
  void add_extern_names(const std::map<std::uint32_t, std::string>& names);
  const std::string* extern_name(std::uint32_t key) const;

  friend bool operator==(const ImageTable& a, const ImageTable& b) { return a.images_ == b.images_; }

 private:
  std::vector<ImageInfo> images_;
  std::unordered_map<std::string, std::uint32_t> by_name_;
  std::map<std::uint32_t, std::string> extern_names_;
};

struct SourceLocation {
  std::string file;
  std::uint32_t line = 0;
  std::uint32_t column = 0;
  ImageKind kind = ImageKind::source;
  // Set for extern addresses (kind == external).
  std::string extern_name;
  // Raw offset for binary images.
  std::uint32_t offset = 0;

  friend bool operator==(const SourceLocation&, const SourceLocation&) = default;
};

// "target.js:11:15", "[extern]:parseInt", "func+4".
std::string to_string(const SourceLocation& loc);

CodeAddress encode_address(std::uint32_t image_id, std::uint32_t line, std::uint32_t column);
CodeAddress encode_extern(std::string_view function_name);
SourceLocation decode_address(CodeAddress addr, const ImageTable& images);

// Compact rendering used by tree dumps and call stacks: "target.js+11:15",
// "func+4", "[extern]:parseInt", "<?>" for the unresolved sentinel.
std::string format_address(CodeAddress addr, const ImageTable& images);

enum class BranchKind : std::uint8_t { call, ret, jump };
enum class AccessKind : std::uint8_t { read, write };

struct Branch {
  BranchKind kind = BranchKind::jump;
  CodeAddress source;
  CodeAddress target;
  bool taken = true;

  friend bool operator==(const Branch&, const Branch&) = default;
};

struct Allocation {
  std::uint32_t alloc_id = 0;
  // Informational only; never compared by the analysis.
  std::uint64_t size = 0;

  friend bool operator==(const Allocation&, const Allocation&) = default;
};

struct MemoryAccess {
  AccessKind kind = AccessKind::read;
  CodeAddress instruction;
  std::uint32_t alloc_id = 0;
  std::uint64_t offset = 0;

  friend bool operator==(const MemoryAccess&, const MemoryAccess&) = default;
};

using TraceEntry = std::variant<Branch, Allocation, MemoryAccess>;

struct TestcaseId {
  std::uint32_t value = 0;

  friend auto operator<=>(const TestcaseId&, const TestcaseId&) = default;
};

struct PreprocessedTrace {
  TestcaseId testcase;
  std::vector<TraceEntry> entries;
  std::shared_ptr<const ImageTable> images;
  // Names behind hashed keys, for rendering only.
  std::map<std::uint32_t, std::string> extern_names;
  std::map<std::uint64_t, std::string> property_names;
};

std::string_view to_string(BranchKind kind);
std::string_view to_string(AccessKind kind);

}  // namespace leakscope
