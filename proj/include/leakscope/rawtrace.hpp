#pragma once

// Line-oriented raw trace format written by source-level tracers.
//
//   Call;<src loc>;<target loc>:;<function name>
//   Expr;<loc>            Cond;<loc>            Ret1;<loc>
//   Ret2;<callee loc>:;<call-site loc>
//   Get;<loc>;<shadow object id>;<property or offset>
//   Put;<loc>;<shadow object id>;<property or offset>
//
// A loc is `file:start_line:start_col:end_line:end_col` or, for functions
// without source, `[extern]:<name>:`. A trailing colon after any loc is
// accepted. Lines starting with whitespace continue the previous line.
//
// Compression directives:
//   #def <id>=<string>   later lines may write `$<id>` in place of <string>
//   #rep <k>             repeat the previous logical line k more times
// A literal `$` is written as `$$`.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

namespace leakscope {

struct Loc {
  std::string file;
  std::uint32_t start_line = 0;
  std::uint32_t start_col = 0;
  std::uint32_t end_line = 0;
  std::uint32_t end_col = 0;
  bool is_extern = false;
  std::string extern_name;

  static Loc make(std::string file, std::uint32_t sl, std::uint32_t sc, std::uint32_t el, std::uint32_t ec);
  static Loc external(std::string name);

  friend bool operator==(const Loc&, const Loc&) = default;
};

// True when `inner` lies within `outer` (same file, positionally).
bool contains(const Loc& outer, const Loc& inner);

namespace raw {

struct Call {
  Loc source;
  Loc target;
  std::string function_name;
  friend bool operator==(const Call&, const Call&) = default;
};
struct Expr {
  Loc loc;
  friend bool operator==(const Expr&, const Expr&) = default;
};
struct Cond {
  Loc loc;
  friend bool operator==(const Cond&, const Cond&) = default;
};
struct Ret1 {
  Loc loc;
  friend bool operator==(const Ret1&, const Ret1&) = default;
};
struct Ret2 {
  Loc callee;
  Loc callsite;
  friend bool operator==(const Ret2&, const Ret2&) = default;
};
struct Get {
  Loc loc;
  std::uint64_t shadow_id = 0;
  std::string property;
  friend bool operator==(const Get&, const Get&) = default;
};
struct Put {
  Loc loc;
  std::uint64_t shadow_id = 0;
  std::string property;
  friend bool operator==(const Put&, const Put&) = default;
};

}  // namespace raw

using RawEvent = std::variant<raw::Call, raw::Expr, raw::Cond, raw::Ret1, raw::Ret2, raw::Get, raw::Put>;

// Location that drives conditional resolution (call source, callee for Ret2).
const Loc& primary_loc(const RawEvent& event);

// Streaming single-pass reader. Memory is bounded by the dictionary plus one
// logical line.
class RawTraceReader {
 public:
  RawTraceReader(std::istream& in, std::string source_name = "<trace>");

  // Returns false at end of input.
  bool next(RawEvent& event);

  // Physical line number of the last line consumed.
  std::size_t line() const { return line_; }
  const std::string& source_name() const { return source_; }

 private:
  bool read_physical(std::string& out);
  bool next_logical(std::string& out, std::size_t& first_line);
  RawEvent parse_line(std::string_view line, std::size_t line_no) const;
  std::string expand(std::string_view line, std::size_t line_no) const;

  std::istream& in_;
  std::string source_;
  std::size_t line_ = 0;
  std::optional<std::string> pending_;
  std::size_t pending_line_ = 0;
  std::unordered_map<std::uint64_t, std::string> dictionary_;
  std::optional<RawEvent> last_;
  std::size_t repeat_left_ = 0;
};

std::vector<RawEvent> parse_raw_trace(std::istream& in, std::string source_name = "<trace>");
std::vector<RawEvent> parse_raw_trace(std::string_view text, std::string source_name = "<trace>");

struct WriteOptions {
  // Emit #def / #rep directives.
  bool compress = false;
};

// Streaming writer; the compressed form needs one line of look-behind.
class RawTraceWriter {
 public:
  RawTraceWriter(std::ostream& out, WriteOptions options = {});
  ~RawTraceWriter();
  RawTraceWriter(const RawTraceWriter&) = delete;
  RawTraceWriter& operator=(const RawTraceWriter&) = delete;

  void write(const RawEvent& event);
  void flush();

 private:
  std::string render(const RawEvent& event);
  std::string render_loc(const Loc& loc, bool trailing_colon);
  std::string file_token(const std::string& file);

  std::ostream& out_;
  WriteOptions options_;
  std::unordered_map<std::string, std::uint64_t> dictionary_;
  std::string previous_;
  std::size_t repeats_ = 0;
  bool has_previous_ = false;
};

void write_raw_trace(std::ostream& out, std::span<const RawEvent> events, WriteOptions options = {});
std::string write_raw_trace(std::span<const RawEvent> events, WriteOptions options = {});

// Source-file map: line `<image_id>\t<file name>`, id 0 is `[extern]`.
struct MapFile {
  std::vector<std::string> files;

  friend bool operator==(const MapFile&, const MapFile&) = default;
};

MapFile load_map_file(std::istream& in);
MapFile load_map_file(const std::string& path);
void write_map_file(std::ostream& out, const MapFile& map);

}  // namespace leakscope
