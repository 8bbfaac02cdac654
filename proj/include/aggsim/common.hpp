#pragma once

#include <compare>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace aggsim {

/// Simulated duration in integer nanoseconds.
using Ticks = std::int64_t;

/// A point on the simulated clock. Integer nanoseconds since the start of
/// the simulation; never derived from wall-clock time.
struct VirtualTime {
  Ticks ticks = 0;

  constexpr auto operator<=>(const VirtualTime&) const = default;

  constexpr VirtualTime operator+(Ticks d) const { return VirtualTime{ticks + d}; }
  constexpr Ticks operator-(VirtualTime other) const { return ticks - other.ticks; }
};

/// Exact non-negative rational used for cost multipliers (work factors,
/// concurrency penalty, per-byte transfer cost). Scaling is integer-only so
/// event ordering never depends on floating-point rounding.
struct Ratio {
  std::int64_t num = 0;
  std::int64_t den = 1;

  constexpr bool operator==(const Ratio&) const = default;

  /// floor(value * num / den)
  constexpr Ticks scale(Ticks value) const {
    return static_cast<Ticks>((static_cast<__int128>(value) * num) / den);
  }

  constexpr bool valid() const { return den > 0 && num >= 0; }

  std::string str() const;
  /// Parses "3", "3/2" or a plain decimal such as "0.04".
  static Ratio parse(const std::string& text);
};

/// API misuse: calling an operation outside its precondition.
class UsageError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// A configuration or input value failed validation.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A fixed-size table (streams, executors) is full.
class CapacityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace aggsim
