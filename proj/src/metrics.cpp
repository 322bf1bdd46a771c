#include "leakscope/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "leakscope/errors.hpp"

namespace leakscope {

namespace {

void check_partition(std::span<const std::size_t> leaf_sizes, std::size_t n) {
  if (leaf_sizes.empty()) throw contract_error("partition has no leaves");
  std::size_t sum = 0;
  for (std::size_t s : leaf_sizes) {
    if (s == 0) throw contract_error("partition has an empty leaf");
    sum += s;
  }
  if (sum != n) throw contract_error(fmt::format("leaf sizes sum to {}, expected n = {}", sum, n));
}

}  // namespace

double mutual_information(std::span<const std::size_t> leaf_sizes, std::size_t n) {
  check_partition(leaf_sizes, n);
  const double dn = static_cast<double>(n);
  double sum = 0;
  for (std::size_t s : leaf_sizes) {
    const double ds = static_cast<double>(s);
    sum += ds * std::log2(dn / ds);
  }
  return sum / dn;
}

double conditional_guessing_entropy(std::span<const std::size_t> leaf_sizes, std::size_t n) {
  check_partition(leaf_sizes, n);
  double sum = 0;
  for (std::size_t s : leaf_sizes) sum += static_cast<double>(s) * static_cast<double>(s + 1);
  return sum / (2.0 * static_cast<double>(n));
}

double minimal_guessing_entropy(std::span<const std::size_t> leaf_sizes) {
  if (leaf_sizes.empty()) throw contract_error("partition has no leaves");
  std::size_t smallest = *std::min_element(leaf_sizes.begin(), leaf_sizes.end());
  if (smallest == 0) throw contract_error("partition has an empty leaf");
  return static_cast<double>(smallest + 1) / 2.0;
}

double leakage_score(double min_ge, std::size_t n) {
  if (n < 2) throw contract_error(fmt::format("leakage score needs at least 2 traces, got {}", n));
  const double upper = (static_cast<double>(n) + 1.0) / 2.0;
  if (min_ge < 1.0 || min_ge > upper) throw contract_error(fmt::format("minimal GE {} outside [1, {}]", min_ge, upper));
  return 100.0 * (upper - min_ge) / (upper - 1.0);
}

TreeMetrics evaluate(std::span<const std::size_t> leaf_sizes) {
  TreeMetrics m;
  m.n = std::accumulate(leaf_sizes.begin(), leaf_sizes.end(), std::size_t{0});
  m.mutual_information = mutual_information(leaf_sizes, m.n);
  m.conditional_ge = conditional_guessing_entropy(leaf_sizes, m.n);
  m.minimal_ge = minimal_guessing_entropy(leaf_sizes);
  m.score = m.n < 2 ? 0.0 : leakage_score(m.minimal_ge, m.n);
  return m;
}

Statistic summarize(std::span<const double> values) {
  if (values.empty()) throw contract_error("cannot summarize an empty sample");
  Statistic s;
  s.min = *std::min_element(values.begin(), values.end());
  s.max = *std::max_element(values.begin(), values.end());
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  double sq = 0;
  for (double v : values) sq += (v - s.mean) * (v - s.mean);
  s.stddev = std::sqrt(sq / static_cast<double>(values.size()));
  // Identical samples must report exactly zero spread.
  if (s.min == s.max) {
    s.mean = s.min;
    s.stddev = 0;
  }
  return s;
}

std::string_view to_string(Severity severity) {
  switch (severity) {
    case Severity::info:
      return "info";
    case Severity::minor:
      return "minor";
    case Severity::major:
      return "major";
    case Severity::critical:
      return "critical";
    case Severity::blocker:
      break;
  }
  return "blocker";
}

Severity severity_for(double min_ge, std::size_t n) {
  // 0.8 * (n+1)/2 and 0.2 * (n+1)/2, rearranged so the boundaries are exact.
  const double twice_upper = static_cast<double>(n) + 1.0;
  if (2.5 * min_ge > twice_upper) return Severity::minor;
  if (10.0 * min_ge < twice_upper) return Severity::critical;
  return Severity::major;
}

}  // namespace leakscope
