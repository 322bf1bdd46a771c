#include "leakscope/trace_model.hpp"

#include <fmt/format.h>

#include "leakscope/errors.hpp"

namespace leakscope {

parse_error::parse_error(std::string source, std::size_t line, const std::string& what)
    : error(fmt::format("{}:{}: {}", source, line, what)), source_(std::move(source)), line_(line) {}

std::uint32_t extern_name_key(std::string_view name) noexcept {
  std::uint32_t h = 2166136261U;
  for (unsigned char c : name) {
    h ^= c;
    h *= 16777619U;
  }
  return h;
}

std::uint64_t property_offset(std::string_view name) noexcept {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : name) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return kPropertyOffsetBit | (h >> 1);
}

ImageTable::ImageTable() : ImageTable(std::vector<ImageInfo>{{kExternImageId, std::string(kExternImageName), ImageKind::external}}) {}

ImageTable::ImageTable(std::vector<ImageInfo> images) : images_(std::move(images)) {
  for (std::size_t i = 0; i < images_.size(); ++i) {
    if (images_[i].id != i) throw format_error(fmt::format("image ids must be dense; found {} at position {}", images_[i].id, i));
    if (!by_name_.emplace(images_[i].name, images_[i].id).second) throw format_error(fmt::format("duplicate image name '{}'", images_[i].name));
  }
  if (images_.empty() || images_[0].name != kExternImageName) throw format_error("image 0 must be [extern]");
  images_[0].kind = ImageKind::external;
}

ImageTable ImageTable::from_files(std::span<const std::string> files) {
  std::vector<ImageInfo> images;
  images.reserve(files.size());
  for (std::size_t i = 0; i < files.size(); ++i) {
    images.push_back({static_cast<std::uint32_t>(i), files[i], i == 0 ? ImageKind::external : ImageKind::source});
  }
  return ImageTable(std::move(images));
}

const ImageInfo* ImageTable::find(std::uint32_t id) const { return id < images_.size() ? &images_[id] : nullptr; }

const ImageInfo& ImageTable::at(std::uint32_t id) const {
  if (auto* img = find(id)) return *img;
  throw lookup_error(fmt::format("unknown image id {}", id));
}

std::optional<std::uint32_t> ImageTable::find(std::string_view name) const {
  auto it = by_name_.find(std::string(name));
  if (it == by_name_.end()) return std::nullopt;
  return it->second;
}

void ImageTable::add_extern_name(std::uint32_t key, const std::string& name) {
  auto [it, inserted] = extern_names_.emplace(key, name);
  if (!inserted && it->second != name) {
    throw lookup_error(fmt::format("extern names '{}' and '{}' share key {:#010x}", it->second, name, key));
  }
}

void ImageTable::add_extern_names(const std::map<std::uint32_t, std::string>& names) {
  for (const auto& [key, name] : names) add_extern_name(key, name);
}

const std::string* ImageTable::extern_name(std::uint32_t key) const {
  auto it = extern_names_.find(key);
  return it == extern_names_.end() ? nullptr : &it->second;
}

CodeAddress encode_address(std::uint32_t image_id, std::uint32_t line, std::uint32_t column) {
  if (line == 0 || line > 0xFFFF || column > 0xFFFF) {
    throw encoding_error(fmt::format("cannot encode location {}:{} in image {}: line must be in 1..65535, column in 0..65535", line, column, image_id));
  }
  return {image_id, (line << 16) | column};
}

CodeAddress encode_extern(std::string_view function_name) { return {kExternImageId, extern_name_key(function_name)}; }

SourceLocation decode_address(CodeAddress addr, const ImageTable& images) {
  const ImageInfo& image = images.at(addr.image_id);
  SourceLocation loc;
  loc.file = image.name;
  loc.kind = image.kind;
  switch (image.kind) {
    case ImageKind::source:
      loc.line = addr.offset >> 16;
      loc.column = addr.offset & 0xFFFF;
      break;
    case ImageKind::binary:
      loc.offset = addr.offset;
      break;
    case ImageKind::external:
      if (const std::string* name = images.extern_name(addr.offset)) {
        loc.extern_name = *name;
      } else {
        loc.extern_name = fmt::format("{:#010x}", addr.offset);
      }
      break;
  }
  return loc;
}

std::string to_string(const SourceLocation& loc) {
  switch (loc.kind) {
    case ImageKind::source:
      return fmt::format("{}:{}:{}", loc.file, loc.line, loc.column);
    case ImageKind::binary:
      return fmt::format("{}+{}", loc.file, loc.offset);
    case ImageKind::external:
      break;
  }
  return fmt::format("{}:{}", kExternImageName, loc.extern_name);
}

std::string format_address(CodeAddress addr, const ImageTable& images) {
  if (addr == kUnresolvedAddress) return "<?>";
  if (images.find(addr.image_id) == nullptr) return fmt::format("<image {}>+{:#x}", addr.image_id, addr.offset);
  SourceLocation loc = decode_address(addr, images);
  if (loc.kind == ImageKind::source) return fmt::format("{}+{}:{}", loc.file, loc.line, loc.column);
  return to_string(loc);
}

std::string_view to_string(BranchKind kind) {
  switch (kind) {
    case BranchKind::call:
      return "call";
    case BranchKind::ret:
      return "return";
    case BranchKind::jump:
      break;
  }
  return "jump";
}

std::string_view to_string(AccessKind kind) { return kind == AccessKind::read ? "read" : "write"; }

}  // namespace leakscope
