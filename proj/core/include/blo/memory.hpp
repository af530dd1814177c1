#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <new>

namespace blo {

// Process-wide accounting of live floating-point storage, measured in 8-byte units.
// Every container that holds numerical state (vectors, matrices, solver scratch) allocates
// through CountingAllocator so that estimator memory footprints can be compared directly.
class FloatAccounting {
 public:
  static void add(std::size_t floats) noexcept {
    const std::int64_t now = live_.fetch_add(static_cast<std::int64_t>(floats)) +
                             static_cast<std::int64_t>(floats);
    std::int64_t peak = peak_.load(std::memory_order_relaxed);
    while (now > peak && !peak_.compare_exchange_weak(peak, now)) {
    }
  }
  static void remove(std::size_t floats) noexcept {
    live_.fetch_sub(static_cast<std::int64_t>(floats));
  }

  static std::int64_t live() noexcept { return live_.load(); }
  static std::int64_t peak() noexcept { return peak_.load(); }
  static void reset_peak() noexcept { peak_.store(live_.load()); }

 private:
  static inline std::atomic<std::int64_t> live_{0};
  static inline std::atomic<std::int64_t> peak_{0};
};

// Measures the peak number of floats allocated above the level live at construction.
class PeakProbe {
 public:
  PeakProbe() : base_(FloatAccounting::live()) { FloatAccounting::reset_peak(); }
  std::int64_t peak_above_base() const noexcept { return FloatAccounting::peak() - base_; }

 private:
  std::int64_t base_;
};

template <class T>
struct CountingAllocator {
  using value_type = T;

  CountingAllocator() noexcept = default;
  template <class U>
  CountingAllocator(const CountingAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) {
    T* p = std::allocator<T>{}.allocate(n);
    FloatAccounting::add(units(n));
    return p;
  }
  void deallocate(T* p, std::size_t n) noexcept {
    FloatAccounting::remove(units(n));
    std::allocator<T>{}.deallocate(p, n);
  }

  template <class U>
  bool operator==(const CountingAllocator<U>&) const noexcept {
    return true;
  }

 private:
  static std::size_t units(std::size_t n) noexcept {
    return (n * sizeof(T) + sizeof(double) - 1) / sizeof(double);
  }
};

}  // namespace blo
