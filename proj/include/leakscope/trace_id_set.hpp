#pragma once

#include <bit>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace leakscope {

using TraceId = std::uint32_t;

// Set of trace ids stored as a bitfield. Ids below 64 live inline, so the
// common case of <= 64 testcases never allocates.
class TraceIdSet {
 public:
  TraceIdSet() = default;
  TraceIdSet(std::initializer_list<TraceId> ids);

  static TraceIdSet range(TraceId count);

  void insert(TraceId id);
  void erase(TraceId id);
  bool contains(TraceId id) const;

  bool empty() const;
  std::size_t size() const;
  std::optional<TraceId> first() const;

  std::vector<TraceId> to_vector() const;

  // "0, 1, 2"
  std::string to_string() const;

  template <typename F>
  void for_each(F&& f) const {
    for_each_word([&](std::size_t base, std::uint64_t word) {
      while (word != 0) {
        int bit = std::countr_zero(word);
        f(static_cast<TraceId>(base + static_cast<std::size_t>(bit)));
        word &= word - 1;
      }
    });
  }

  TraceIdSet& operator|=(const TraceIdSet& other);
  TraceIdSet& operator-=(const TraceIdSet& other);
  TraceIdSet& operator&=(const TraceIdSet& other);

  friend TraceIdSet operator|(TraceIdSet a, const TraceIdSet& b) { return a |= b; }
  friend TraceIdSet operator-(TraceIdSet a, const TraceIdSet& b) { return a -= b; }
  friend TraceIdSet operator&(TraceIdSet a, const TraceIdSet& b) { return a &= b; }

  bool intersects(const TraceIdSet& other) const;
  bool is_subset_of(const TraceIdSet& other) const;

  friend bool operator==(const TraceIdSet& a, const TraceIdSet& b);

  // Orders by the sorted id sequence, lexicographically.
  friend bool operator<(const TraceIdSet& a, const TraceIdSet& b);

 private:
  std::uint64_t word(std::size_t index) const {
    return index == 0 ? head_ : (index - 1 < tail_.size() ? tail_[index - 1] : 0);
  }
  std::size_t word_count() const { return 1 + tail_.size(); }
  std::uint64_t& word_ref(std::size_t index);
  void trim();

  template <typename F>
  void for_each_word(F&& f) const {
    f(0, head_);
    for (std::size_t i = 0; i < tail_.size(); ++i) f((i + 1) * 64, tail_[i]);
  }

  std::uint64_t head_ = 0;
  std::vector<std::uint64_t> tail_;
};

}  // namespace leakscope
