#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace leakscope {

// Base class of every error raised by the library.
class error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A source location cannot be mapped to a dummy address.
class encoding_error : public error {
 public:
  using error::error;
};

// An image id or name is not known.
class lookup_error : public error {
 public:
  using error::error;
};

// Raw trace text does not follow the documented format.
class parse_error : public error {
 public:
  parse_error(std::string source, std::size_t line, const std::string& what);

  const std::string& source() const noexcept { return source_; }
  std::size_t line() const noexcept { return line_; }

 private:
  std::string source_;
  std::size_t line_;
};

// Map file or preprocessed cache file is malformed.
class format_error : public error {
 public:
  using error::error;
};

// Event sequence is well-formed text but describes impossible control flow.
class structural_error : public error {
 public:
  using error::error;
};

// Caller broke a documented precondition.
class contract_error : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class config_error : public error {
 public:
  using error::error;
};

}  // namespace leakscope
