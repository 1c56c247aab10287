#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <vector>

namespace pqscan {

struct Neighbor {
  std::int64_t id = -1;
  float distance = 0.0f;

  friend bool operator<(const Neighbor& a, const Neighbor& b) {
    return a.distance < b.distance || (a.distance == b.distance && a.id < b.id);
  }
  friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

/// Bounded max-heap keeping the `capacity` smallest (distance, id) pairs seen.
/// Ties on distance keep the smaller id, so the final content does not depend
/// on insertion order.
class NeighborSet {
 public:
  explicit NeighborSet(std::size_t capacity) : capacity_(capacity) { heap_.reserve(capacity); }

  std::size_t capacity() const noexcept { return capacity_; }
  std::size_t size() const noexcept { return heap_.size(); }
  bool full() const noexcept { return heap_.size() >= capacity_; }

  /// Current worst retained entry. Only meaningful when non-empty.
  const Neighbor& worst() const { return heap_.front(); }

  /// Would (id, distance) enter the set?
  bool admits(std::int64_t id, float distance) const {
    if (!full()) return capacity_ > 0;
    return Neighbor{id, distance} < heap_.front();
  }

  /// Returns true when the entry was retained.
  bool add(std::int64_t id, float distance) {
    if (capacity_ == 0) return false;
    const Neighbor n{id, distance};
    if (heap_.size() < capacity_) {
      heap_.push_back(n);
      std::push_heap(heap_.begin(), heap_.end());
      return true;
    }
    if (!(n < heap_.front())) return false;
    std::pop_heap(heap_.begin(), heap_.end());
    heap_.back() = n;
    std::push_heap(heap_.begin(), heap_.end());
    return true;
  }

  void merge(const NeighborSet& other) {
    for (const auto& n : other.heap_) add(n.id, n.distance);
  }

  /// Entries in ascending (distance, id) order.
  std::vector<Neighbor> sorted() const {
    std::vector<Neighbor> out = heap_;
    std::sort(out.begin(), out.end());
    return out;
  }

  std::vector<std::int64_t> ids() const {
    std::vector<std::int64_t> out;
    for (const auto& n : sorted()) out.push_back(n.id);
    return out;
  }

 private:
  std::size_t capacity_;
  std::vector<Neighbor> heap_;
};

}  // namespace pqscan
