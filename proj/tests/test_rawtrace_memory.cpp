// Parses a generated 10^6-line trace that never exists in memory as a whole
// and checks that peak RSS stays flat while reading it.

#include <sys/resource.h>

#include <cstdio>
#include <istream>
#include <streambuf>
#include <string>

#include "leakscope/rawtrace.hpp"

namespace {

constexpr std::size_t kLines = 1'000'000;
constexpr long kCapKiB = 8 * 1024;

class GeneratedTrace : public std::streambuf {
 public:
  explicit GeneratedTrace(std::size_t lines) : left_(lines) {}

 protected:
  int_type underflow() override {
    if (gptr() < egptr()) return traits_type::to_int_type(*gptr());
    if (left_ == 0) return traits_type::eof();
    --left_;
    const std::size_t i = left_;
    if (i == kLines - 1) {
      line_ = "#def 1=target.js\n";
    } else if (i % 3 == 0) {
      line_ = "Get;$1:11:15:11:25;" + std::to_string(i % 97) + ";" + std::to_string(i % 1024) + "\n";
    } else if (i % 3 == 1) {
      const std::string l = std::to_string(1 + i % 4000);
      line_ = "Expr;$1:" + l + ":9:" + l + ":30\n";
    } else {
      line_ = "Cond;target.js:10:8:10:21\n#rep 3\n";
    }
    setg(line_.data(), line_.data(), line_.data() + line_.size());
    return traits_type::to_int_type(*gptr());
  }

 private:
  std::size_t left_;
  std::string line_;
};

long peak_kib() {
  rusage usage{};
  getrusage(RUSAGE_SELF, &usage);
  return usage.ru_maxrss;
}

}  // namespace

int main() {
  GeneratedTrace buffer(kLines);
  std::istream in(&buffer);
  leakscope::RawTraceReader reader(in, "generated.trace");
  leakscope::RawEvent event;
  // Warm up allocations of the reader itself before taking the baseline.
  for (int i = 0; i < 10 && reader.next(event); ++i) {
  }
  const long before = peak_kib();
  std::size_t events = 10;
  while (reader.next(event)) ++events;
  const long growth = peak_kib() - before;
  const bool ok = reader.line() >= kLines && growth < kCapKiB;
  std::printf("%s: parsed %zu events from %zu lines, peak RSS growth %ld KiB (cap %ld KiB)\n", ok ? "PASS" : "FAIL", events,
              reader.line(), growth, kCapKiB);
  return ok ? 0 : 1;
}
