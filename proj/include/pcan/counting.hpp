#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>

namespace pcan {

struct OpCounts {
  std::uint64_t multiplies = 0;
  std::uint64_t adds = 0;  // additions and subtractions
  std::uint64_t divides = 0;
  std::uint64_t exps = 0;
  std::uint64_t logs = 0;
};

namespace detail {
struct OpCounters {
  std::atomic<std::uint64_t> multiplies{0};
  std::atomic<std::uint64_t> adds{0};
  std::atomic<std::uint64_t> divides{0};
  std::atomic<std::uint64_t> exps{0};
  std::atomic<std::uint64_t> logs{0};
};
inline OpCounters& op_counters() {
  static OpCounters counters;
  return counters;
}
inline void bump(std::atomic<std::uint64_t>& c) { c.fetch_add(1, std::memory_order_relaxed); }
}  // namespace detail

// Scalar that records every arithmetic operation applied to it. The numeric
// kernels are templates over the scalar type, so running them on Counted
// values executes the same code path as production and tallies its work.
class Counted {
 public:
  Counted() = default;
  Counted(double v) : v_(v) {}  // NOLINT: implicit so literals mix with counted values

  double value() const noexcept { return v_; }

  friend Counted operator+(Counted a, Counted b) { detail::bump(detail::op_counters().adds); return a.v_ + b.v_; }
  friend Counted operator-(Counted a, Counted b) { detail::bump(detail::op_counters().adds); return a.v_ - b.v_; }
  friend Counted operator*(Counted a, Counted b) { detail::bump(detail::op_counters().multiplies); return a.v_ * b.v_; }
  friend Counted operator/(Counted a, Counted b) { detail::bump(detail::op_counters().divides); return a.v_ / b.v_; }
  Counted operator-() const { return -v_; }

  Counted& operator+=(Counted o) { return *this = *this + o; }
  Counted& operator-=(Counted o) { return *this = *this - o; }
  Counted& operator*=(Counted o) { return *this = *this * o; }
  Counted& operator/=(Counted o) { return *this = *this / o; }

  friend bool operator<(Counted a, Counted b) { return a.v_ < b.v_; }
  friend bool operator>(Counted a, Counted b) { return a.v_ > b.v_; }
  friend bool operator<=(Counted a, Counted b) { return a.v_ <= b.v_; }
  friend bool operator>=(Counted a, Counted b) { return a.v_ >= b.v_; }
  friend bool operator==(Counted a, Counted b) { return a.v_ == b.v_; }

  friend Counted exp(Counted a) { detail::bump(detail::op_counters().exps); return std::exp(a.v_); }
  friend Counted log(Counted a) { detail::bump(detail::op_counters().logs); return std::log(a.v_); }

 private:
  double v_ = 0.0;
};

inline double value_of(double v) { return v; }
inline double value_of(Counted v) { return v.value(); }

// Zeroes the global counters on construction; `counts()` reads the tally so far.
// Only one scope should be live at a time.
class CountingScope {
 public:
  CountingScope() { reset(); }
  static void reset() {
    auto& c = detail::op_counters();
    c.multiplies = 0;
    c.adds = 0;
    c.divides = 0;
    c.exps = 0;
    c.logs = 0;
  }
  OpCounts counts() const {
    const auto& c = detail::op_counters();
    return {c.multiplies.load(), c.adds.load(), c.divides.load(), c.exps.load(), c.logs.load()};
  }
};

}  // namespace pcan
