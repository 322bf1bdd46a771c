#include "leakscope/trace_id_set.hpp"

#include <algorithm>

#include <fmt/format.h>

namespace leakscope {

TraceIdSet::TraceIdSet(std::initializer_list<TraceId> ids) {
  for (TraceId id : ids) insert(id);
}

TraceIdSet TraceIdSet::range(TraceId count) {
  TraceIdSet s;
  for (TraceId id = 0; id < count; ++id) s.insert(id);
  return s;
}

std::uint64_t& TraceIdSet::word_ref(std::size_t index) {
  if (index == 0) return head_;
  if (tail_.size() < index) tail_.resize(index, 0);
  return tail_[index - 1];
}

void TraceIdSet::trim() {
  while (!tail_.empty() && tail_.back() == 0) tail_.pop_back();
}

void TraceIdSet::insert(TraceId id) { word_ref(id / 64) |= std::uint64_t{1} << (id % 64); }

void TraceIdSet::erase(TraceId id) {
  if (id / 64 >= word_count()) return;
  word_ref(id / 64) &= ~(std::uint64_t{1} << (id % 64));
  trim();
}

bool TraceIdSet::contains(TraceId id) const { return (word(id / 64) >> (id % 64)) & 1U; }

bool TraceIdSet::empty() const { return head_ == 0 && tail_.empty(); }

std::size_t TraceIdSet::size() const {
  std::size_t n = static_cast<std::size_t>(std::popcount(head_));
  for (auto w : tail_) n += static_cast<std::size_t>(std::popcount(w));
  return n;
}

std::optional<TraceId> TraceIdSet::first() const {
  for (std::size_t i = 0; i < word_count(); ++i) {
    if (auto w = word(i); w != 0) return static_cast<TraceId>(i * 64 + std::countr_zero(w));
  }
  return std::nullopt;
}

std::vector<TraceId> TraceIdSet::to_vector() const {
  std::vector<TraceId> out;
  out.reserve(size());
  for_each([&](TraceId id) { out.push_back(id); });
  return out;
}

std::string TraceIdSet::to_string() const { return fmt::format("{}", fmt::join(to_vector(), ", ")); }

TraceIdSet& TraceIdSet::operator|=(const TraceIdSet& other) {
  head_ |= other.head_;
  if (tail_.size() < other.tail_.size()) tail_.resize(other.tail_.size(), 0);
  for (std::size_t i = 0; i < other.tail_.size(); ++i) tail_[i] |= other.tail_[i];
  return *this;
}

TraceIdSet& TraceIdSet::operator-=(const TraceIdSet& other) {
  head_ &= ~other.head_;
  for (std::size_t i = 0; i < std::min(tail_.size(), other.tail_.size()); ++i) tail_[i] &= ~other.tail_[i];
  trim();
  return *this;
}

TraceIdSet& TraceIdSet::operator&=(const TraceIdSet& other) {
  head_ &= other.head_;
  for (std::size_t i = 0; i < tail_.size(); ++i) tail_[i] &= i < other.tail_.size() ? other.tail_[i] : 0;
  trim();
  return *this;
}

bool TraceIdSet::intersects(const TraceIdSet& other) const {
  if (head_ & other.head_) return true;
  for (std::size_t i = 0; i < std::min(tail_.size(), other.tail_.size()); ++i) {
    if (tail_[i] & other.tail_[i]) return true;
  }
  return false;
}

bool TraceIdSet::is_subset_of(const TraceIdSet& other) const {
  for (std::size_t i = 0; i < word_count(); ++i) {
    if (word(i) & ~other.word(i)) return false;
  }
  return true;
}

bool operator==(const TraceIdSet& a, const TraceIdSet& b) { return a.head_ == b.head_ && a.tail_ == b.tail_; }

bool operator<(const TraceIdSet& a, const TraceIdSet& b) { return a.to_vector() < b.to_vector(); }

}  // namespace leakscope
