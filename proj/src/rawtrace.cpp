#include "leakscope/rawtrace.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include <fmt/format.h>

#include "leakscope/errors.hpp"
#include "leakscope/trace_model.hpp"

namespace leakscope {

Loc Loc::make(std::string file, std::uint32_t sl, std::uint32_t sc, std::uint32_t el, std::uint32_t ec) {
  Loc loc;
  loc.file = std::move(file);
  loc.start_line = sl;
  loc.start_col = sc;
  loc.end_line = el;
  loc.end_col = ec;
  return loc;
}

Loc Loc::external(std::string name) {
  Loc loc;
  loc.file = std::string(kExternImageName);
  loc.is_extern = true;
  loc.extern_name = std::move(name);
  return loc;
}

namespace {

bool before_or_at(std::uint32_t l1, std::uint32_t c1, std::uint32_t l2, std::uint32_t c2) {
  return l1 < l2 || (l1 == l2 && c1 <= c2);
}

}  // namespace

bool contains(const Loc& outer, const Loc& inner) {
  if (outer.is_extern || inner.is_extern || outer.file != inner.file) return false;
  return before_or_at(outer.start_line, outer.start_col, inner.start_line, inner.start_col) &&
         before_or_at(inner.end_line, inner.end_col, outer.end_line, outer.end_col);
}

const Loc& primary_loc(const RawEvent& event) {
  return std::visit(
      [](const auto& e) -> const Loc& {
        using T = std::decay_t<decltype(e)>;
        if constexpr (std::is_same_v<T, raw::Call>) {
          return e.source;
        } else if constexpr (std::is_same_v<T, raw::Ret2>) {
          return e.callee;
        } else {
          return e.loc;
        }
      },
      event);
}

// ---------------------------------------------------------------------------
// Reader

namespace {

template <typename T>
bool parse_number(std::string_view text, T& out) {
  if (text.empty()) return false;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  return ec == std::errc{} && ptr == text.data() + text.size();
}

// Splits off the text before the next ';'.
bool take_field(std::string_view& rest, std::string_view& field) {
  auto pos = rest.find(';');
  if (pos == std::string_view::npos) return false;
  field = rest.substr(0, pos);
  rest.remove_prefix(pos + 1);
  return true;
}

std::optional<Loc> parse_loc(std::string_view text) {
  if (!text.empty() && text.back() == ':') text.remove_suffix(1);
  constexpr std::string_view kExternPrefix = "[extern]:";
  if (text.starts_with(kExternPrefix)) {
    text.remove_prefix(kExternPrefix.size());
    if (text.empty()) return std::nullopt;
    return Loc::external(std::string(text));
  }
  std::uint32_t fields[4];
  for (int i = 3; i >= 0; --i) {
    auto pos = text.rfind(':');
    if (pos == std::string_view::npos || !parse_number(text.substr(pos + 1), fields[i])) return std::nullopt;
    text = text.substr(0, pos);
  }
  if (text.empty()) return std::nullopt;
  if (!before_or_at(fields[0], fields[1], fields[2], fields[3])) return std::nullopt;
  return Loc::make(std::string(text), fields[0], fields[1], fields[2], fields[3]);
}

}  // namespace

RawTraceReader::RawTraceReader(std::istream& in, std::string source_name) : in_(in), source_(std::move(source_name)) {}

bool RawTraceReader::read_physical(std::string& out) {
  if (!std::getline(in_, out)) return false;
  ++line_;
  if (in_.eof() && !out.empty()) throw parse_error(source_, line_, "truncated final line (missing line feed)");
  if (!out.empty() && out.back() == '\r') out.pop_back();
  return true;
}

bool RawTraceReader::next_logical(std::string& out, std::size_t& first_line) {
  for (;;) {
    if (pending_) {
      out = std::move(*pending_);
      first_line = pending_line_;
      pending_.reset();
    } else {
      if (!read_physical(out)) return false;
      first_line = line_;
    }
    if (out.empty()) continue;
    if (out.front() == ' ' || out.front() == '\t') throw parse_error(source_, first_line, "continuation line without a preceding line");
    break;
  }
  std::string next;
  while (read_physical(next)) {
    if (!next.empty() && (next.front() == ' ' || next.front() == '\t')) {
      auto start = next.find_first_not_of(" \t");
      out.append(next, start);
      continue;
    }
    pending_ = std::move(next);
    pending_line_ = line_;
    break;
  }
  return true;
}

std::string RawTraceReader::expand(std::string_view line, std::size_t line_no) const {
  std::string out;
  out.reserve(line.size() + 16);
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] != '$') {
      out.push_back(line[i]);
      continue;
    }
    if (i + 1 < line.size() && line[i + 1] == '$') {
      out.push_back('$');
      ++i;
      continue;
    }
    std::size_t j = i + 1;
    while (j < line.size() && line[j] >= '0' && line[j] <= '9') ++j;
    std::uint64_t id = 0;
    if (!parse_number(line.substr(i + 1, j - i - 1), id)) throw parse_error(source_, line_no, "stray '$' (write a literal '$' as '$$')");
    auto it = dictionary_.find(id);
    if (it == dictionary_.end()) throw parse_error(source_, line_no, fmt::format("undefined dictionary entry ${}", id));
    out += it->second;
    i = j - 1;
  }
  return out;
}

RawEvent RawTraceReader::parse_line(std::string_view line, std::size_t line_no) const {
  auto fail = [&](std::string_view what) { return parse_error(source_, line_no, fmt::format("{}: '{}'", what, line)); };
  auto loc = [&](std::string_view text) {
    auto parsed = parse_loc(text);
    if (!parsed) throw fail(fmt::format("malformed location '{}'", text));
    return std::move(*parsed);
  };

  std::string_view rest = line;
  std::string_view tag;
  if (!take_field(rest, tag)) throw fail("missing field separator");

  if (tag == "Expr") return raw::Expr{loc(rest)};
  if (tag == "Cond") return raw::Cond{loc(rest)};
  if (tag == "Ret1") return raw::Ret1{loc(rest)};
  if (tag == "Call") {
    std::string_view src, tgt;
    if (!take_field(rest, src) || !take_field(rest, tgt)) throw fail("Call needs source, target and function name");
    return raw::Call{loc(src), loc(tgt), std::string(rest)};
  }
  if (tag == "Ret2") {
    std::string_view callee;
    if (!take_field(rest, callee)) throw fail("Ret2 needs callee and call-site locations");
    return raw::Ret2{loc(callee), loc(rest)};
  }
  if (tag == "Get" || tag == "Put") {
    std::string_view where, id_text;
    if (!take_field(rest, where) || !take_field(rest, id_text)) throw fail("memory event needs location, object id and property");
    std::uint64_t id = 0;
    if (!parse_number(id_text, id)) throw fail(fmt::format("malformed shadow object id '{}'", id_text));
    if (tag == "Get") return raw::Get{loc(where), id, std::string(rest)};
    return raw::Put{loc(where), id, std::string(rest)};
  }
  throw fail(fmt::format("unknown event tag '{}'", tag));
}

bool RawTraceReader::next(RawEvent& event) {
  if (repeat_left_ > 0) {
    --repeat_left_;
    event = *last_;
    return true;
  }
  std::string line;
  std::size_t line_no = 0;
  while (next_logical(line, line_no)) {
    if (line.front() != '#') {
      event = line.find('$') == std::string::npos ? parse_line(line, line_no) : parse_line(expand(line, line_no), line_no);
      last_ = event;
      return true;
    }
    std::string_view directive = line;
    if (directive.starts_with("#def ")) {
      directive.remove_prefix(5);
      auto eq = directive.find('=');
      std::uint64_t id = 0;
      if (eq == std::string_view::npos || !parse_number(directive.substr(0, eq), id)) {
        throw parse_error(source_, line_no, fmt::format("malformed dictionary directive '{}'", line));
      }
      dictionary_[id] = std::string(directive.substr(eq + 1));
    } else if (directive.starts_with("#rep ")) {
      std::size_t count = 0;
      if (!parse_number(directive.substr(5), count) || count == 0) throw parse_error(source_, line_no, fmt::format("malformed repeat directive '{}'", line));
      if (!last_) throw parse_error(source_, line_no, "repeat directive without a preceding event");
      repeat_left_ = count - 1;
      event = *last_;
      return true;
    } else {
      throw parse_error(source_, line_no, fmt::format("unknown directive '{}'", line));
    }
  }
  return false;
}

std::vector<RawEvent> parse_raw_trace(std::istream& in, std::string source_name) {
  RawTraceReader reader(in, std::move(source_name));
  std::vector<RawEvent> events;
  RawEvent event;
  while (reader.next(event)) events.push_back(std::move(event));
  return events;
}

std::vector<RawEvent> parse_raw_trace(std::string_view text, std::string source_name) {
  std::istringstream in{std::string(text)};
  return parse_raw_trace(in, std::move(source_name));
}

// ---------------------------------------------------------------------------
// Writer

namespace {

std::string escape(std::string_view text) {
  if (text.find_first_of("$\n") == std::string_view::npos) return std::string(text);
  std::string out;
  for (char c : text) {
    if (c == '\n') throw format_error(fmt::format("cannot write a line feed inside trace field '{}'", text));
    if (c == '$') out.push_back('$');
    out.push_back(c);
  }
  return out;
}

}  // namespace

RawTraceWriter::RawTraceWriter(std::ostream& out, WriteOptions options) : out_(out), options_(options) {}

RawTraceWriter::~RawTraceWriter() {
  try {
    flush();
  } catch (...) {
  }
}

std::string RawTraceWriter::file_token(const std::string& file) {
  if (!options_.compress) return escape(file);
  auto it = dictionary_.find(file);
  if (it == dictionary_.end()) {
    if (file.find('\n') != std::string::npos) throw format_error("file names cannot contain line feeds");
    if (has_previous_) {
      out_ << previous_ << '\n';
      if (repeats_ > 0) out_ << "#rep " << repeats_ << '\n';
      has_previous_ = false;
      repeats_ = 0;
    }
    it = dictionary_.emplace(file, dictionary_.size() + 1).first;
    out_ << "#def " << it->second << '=' << file << '\n';
  }
  return fmt::format("${}", it->second);
}

std::string RawTraceWriter::render_loc(const Loc& loc, bool trailing_colon) {
  if (loc.is_extern) return fmt::format("{}:{}:", kExternImageName, escape(loc.extern_name));
  return fmt::format("{}:{}:{}:{}:{}{}", file_token(loc.file), loc.start_line, loc.start_col, loc.end_line, loc.end_col,
                     trailing_colon ? ":" : "");
}

std::string RawTraceWriter::render(const RawEvent& event) {
  return std::visit(
      [&](const auto& e) -> std::string {
        using T = std::decay_t<decltype(e)>;
        if constexpr (std::is_same_v<T, raw::Call>) {
          return fmt::format("Call;{};{};{}", render_loc(e.source, false), render_loc(e.target, true), escape(e.function_name));
        } else if constexpr (std::is_same_v<T, raw::Expr>) {
          return "Expr;" + render_loc(e.loc, false);
        } else if constexpr (std::is_same_v<T, raw::Cond>) {
          return "Cond;" + render_loc(e.loc, false);
        } else if constexpr (std::is_same_v<T, raw::Ret1>) {
          return "Ret1;" + render_loc(e.loc, false);
        } else if constexpr (std::is_same_v<T, raw::Ret2>) {
          return fmt::format("Ret2;{};{}", render_loc(e.callee, true), render_loc(e.callsite, false));
        } else {
          return fmt::format("{};{};{};{}", std::is_same_v<T, raw::Get> ? "Get" : "Put", render_loc(e.loc, false), e.shadow_id,
                             escape(e.property));
        }
      },
      event);
}

void RawTraceWriter::write(const RawEvent& event) {
  std::string line = render(event);
  if (!options_.compress) {
    out_ << line << '\n';
    return;
  }
  if (has_previous_ && line == previous_) {
    ++repeats_;
    return;
  }
  if (has_previous_) {
    out_ << previous_ << '\n';
    if (repeats_ > 0) out_ << "#rep " << repeats_ << '\n';
  }
  previous_ = std::move(line);
  repeats_ = 0;
  has_previous_ = true;
}

void RawTraceWriter::flush() {
  if (has_previous_) {
    out_ << previous_ << '\n';
    if (repeats_ > 0) out_ << "#rep " << repeats_ << '\n';
    has_previous_ = false;
    repeats_ = 0;
  }
  out_.flush();
}

void write_raw_trace(std::ostream& out, std::span<const RawEvent> events, WriteOptions options) {
  RawTraceWriter writer(out, options);
  for (const auto& e : events) writer.write(e);
  writer.flush();
}

std::string write_raw_trace(std::span<const RawEvent> events, WriteOptions options) {
  std::ostringstream out;
  write_raw_trace(out, events, options);
  return out.str();
}

// ---------------------------------------------------------------------------
// Map file

MapFile load_map_file(std::istream& in) {
  std::map<std::uint64_t, std::string> by_id;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto tab = line.find('\t');
    std::uint64_t id = 0;
    if (tab == std::string::npos || !parse_number(std::string_view(line).substr(0, tab), id)) {
      throw format_error(fmt::format("map file line {}: expected '<image id>\\t<file name>'", line_no));
    }
    if (!by_id.emplace(id, line.substr(tab + 1)).second) throw format_error(fmt::format("map file line {}: duplicate image id {}", line_no, id));
  }
  MapFile map;
  for (const auto& [id, name] : by_id) {
    if (id != map.files.size()) throw format_error(fmt::format("map file image ids are not dense: expected {}, found {}", map.files.size(), id));
    map.files.push_back(name);
  }
  if (map.files.empty() || map.files[0] != kExternImageName) throw format_error("map file must assign image id 0 to [extern]");
  return map;
}

MapFile load_map_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw format_error(fmt::format("cannot open map file {}", path));
  return load_map_file(in);
}

void write_map_file(std::ostream& out, const MapFile& map) {
  for (std::size_t i = 0; i < map.files.size(); ++i) out << i << '\t' << map.files[i] << '\n';
}

}  // namespace leakscope
