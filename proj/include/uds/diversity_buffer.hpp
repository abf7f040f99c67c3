#pragma once

#include <deque>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "uds/srft.hpp"

namespace uds {

// Fixed-capacity FIFO of embeddings of previously selected samples. Eviction
// removes the oldest entry only; all stored embeddings share one dimension.
template <class Scalar = double>
class MemoryBuffer {
 public:
  MemoryBuffer(Index capacity, Index dim) : capacity_(capacity), dim_(dim) {
    if (capacity < 1) throw std::invalid_argument("MemoryBuffer: capacity must be >= 1");
    if (dim < 1) throw std::invalid_argument("MemoryBuffer: dimension must be >= 1");
  }

  Index capacity() const { return capacity_; }
  Index dim() const { return dim_; }
  Index size() const { return static_cast<Index>(entries_.size()); }
  std::uint64_t total_pushed() const { return total_pushed_; }
  const std::deque<Embedding<Scalar>>& entries() const { return entries_; }

  void push_one(Embedding<Scalar> e) {
    check_dim(e);
    if (size() == capacity_) entries_.pop_front();
    entries_.push_back(std::move(e));
    ++total_pushed_;
  }

  // Restore support for checkpoints; replays entries through the same path.
  void restore(std::vector<Embedding<Scalar>> entries, std::uint64_t total_pushed) {
    if (static_cast<Index>(entries.size()) > capacity_)
      throw std::invalid_argument("MemoryBuffer::restore: more entries than capacity");
    entries_.clear();
    for (auto& e : entries) {
      check_dim(e);
      entries_.push_back(std::move(e));
    }
    total_pushed_ = total_pushed;
  }

 private:
  void check_dim(const Embedding<Scalar>& e) const {
    if (e.data.size() != dim_) {
      std::ostringstream os;
      os << "MemoryBuffer: embedding dimension " << e.data.size()
         << " does not match buffer dimension " << dim_;
      throw std::invalid_argument(os.str());
    }
  }

  Index capacity_;
  Index dim_;
  std::deque<Embedding<Scalar>> entries_;
  std::uint64_t total_pushed_ = 0;
};

// Mean Euclidean distance from a candidate to every stored embedding.
// An empty buffer scores exactly zero.
template <class Scalar>
Scalar diversity_distance(const Embedding<Scalar>& candidate,
                          const MemoryBuffer<Scalar>& buffer) {
  if (buffer.size() == 0) return Scalar(0);
  if (candidate.data.size() != buffer.dim()) {
    std::ostringstream os;
    os << "diversity_distance: candidate dimension " << candidate.data.size()
       << " does not match buffer dimension " << buffer.dim();
    throw std::invalid_argument(os.str());
  }
  Scalar sum = 0;
  for (const auto& e : buffer.entries()) sum += (candidate.data - e.data).norm();
  return sum / static_cast<Scalar>(buffer.size());
}

// Queue update after selection: evict oldest entries until the new batch
// fits, then append in the given order. A batch larger than the capacity is
// a configuration error (K must not exceed M) and is rejected.
template <class Scalar>
void push_selected(MemoryBuffer<Scalar>& buffer,
                   const std::vector<Embedding<Scalar>>& selected) {
  if (static_cast<Index>(selected.size()) > buffer.capacity()) {
    std::ostringstream os;
    os << "push_selected: batch of " << selected.size()
       << " exceeds buffer capacity " << buffer.capacity();
    throw std::invalid_argument(os.str());
  }
  for (const auto& e : selected) buffer.push_one(e);
}

}  // namespace uds
