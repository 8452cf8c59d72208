#pragma once

#include <algorithm>
#include <cstdint>
#include <memory>
#include <type_traits>
#include <vector>

namespace crfgrad {

// Operation ledger mirroring the complexity-table columns: log-domain
// additions (each costs an exp and a log1p), real additions (log-domain
// multiplications land here), real multiplications, and explicit log
// evaluations.
struct OpCounters {
  std::uint64_t log_adds = 0;
  std::uint64_t adds = 0;
  std::uint64_t muls = 0;
  std::uint64_t log_evals = 0;
};

// Live/peak count of engine-owned buffer cells. Cells, not bytes: the
// claims under test concern working-set growth, not element layout.
class MemCounter {
 public:
  void add(std::int64_t cells) {
    live_ += cells;
    peak_ = std::max(peak_, live_);
  }
  void sub(std::int64_t cells) { live_ -= cells; }
  std::int64_t live() const { return live_; }
  std::int64_t peak() const { return peak_; }

 private:
  std::int64_t live_ = 0;
  std::int64_t peak_ = 0;
};

// Allocator that reports element counts to a MemCounter. A null counter
// makes it behave exactly like std::allocator.
template <typename T>
class CountingAllocator {
 public:
  using value_type = T;
  using propagate_on_container_copy_assignment = std::true_type;
  using propagate_on_container_move_assignment = std::true_type;
  using propagate_on_container_swap = std::true_type;

  CountingAllocator() noexcept = default;
  explicit CountingAllocator(MemCounter* counter) noexcept : counter_(counter) {}
  template <typename U>
  CountingAllocator(const CountingAllocator<U>& other) noexcept : counter_(other.counter()) {}

  T* allocate(std::size_t n) {
    if (counter_) counter_->add(static_cast<std::int64_t>(n));
    return std::allocator<T>{}.allocate(n);
  }
  void deallocate(T* p, std::size_t n) noexcept {
    if (counter_) counter_->sub(static_cast<std::int64_t>(n));
    std::allocator<T>{}.deallocate(p, n);
  }
  MemCounter* counter() const noexcept { return counter_; }

  friend bool operator==(const CountingAllocator& a, const CountingAllocator& b) {
    return a.counter_ == b.counter_;
  }

 private:
  MemCounter* counter_ = nullptr;
};

template <typename T>
using CountedVec = std::vector<T, CountingAllocator<T>>;

// Shared instrumentation handle threaded through the engines.
// position_reads counts feature-extraction visits to sequence positions;
// divided by T it gives the number of passes over the input stream.
struct EngineStats {
  OpCounters ops;
  MemCounter mem;
  std::uint64_t position_reads = 0;
};

}  // namespace crfgrad
