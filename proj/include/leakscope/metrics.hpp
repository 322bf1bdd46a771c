#pragma once

// Leakage metrics over a partition of n traces into leaves L_1..L_l, where a
// leaf holds traces an attacker cannot tell apart at one instruction.

#include <cstddef>
#include <span>
#include <string_view>

namespace leakscope {

// (1/n) * sum |L_i| * log2(n / |L_i|), in bits.
double mutual_information(std::span<const std::size_t> leaf_sizes, std::size_t n);

// (1/2n) * sum |L_i| * (|L_i| + 1), in guesses.
double conditional_guessing_entropy(std::span<const std::size_t> leaf_sizes, std::size_t n);

// min (|L_i| + 1) / 2.
double minimal_guessing_entropy(std::span<const std::size_t> leaf_sizes);

// Linear map of min_ge from [1, (n+1)/2] onto [100, 0]. Requires n >= 2.
double leakage_score(double min_ge, std::size_t n);

struct TreeMetrics {
  std::size_t n = 0;
  double mutual_information = 0;
  double conditional_ge = 0;
  double minimal_ge = 0;
  // 0 when n < 2: nothing can be told apart.
  double score = 0;
};

TreeMetrics evaluate(std::span<const std::size_t> leaf_sizes);

struct Statistic {
  double mean = 0;
  double min = 0;
  double max = 0;
  // Population standard deviation.
  double stddev = 0;
};

Statistic summarize(std::span<const double> values);

enum class Severity { info, minor, major, critical, blocker };

std::string_view to_string(Severity severity);

// Against the upper bound U = (n+1)/2: minor above 0.8*U, critical below
// 0.2*U, major in between (both boundaries included).
Severity severity_for(double min_ge, std::size_t n);

}  // namespace leakscope
