#pragma once

#include <compare>
#include <cstdint>
#include <string>
#include <string_view>

namespace factorlab {

/// A calendar month stored as a single ordinal (year * 12 + month - 1).
class Month {
 public:
  constexpr Month() = default;
  constexpr Month(int year, int month) : ordinal_(year * 12 + (month - 1)) {}

  static constexpr Month from_ordinal(std::int32_t ordinal) {
    Month m;
    m.ordinal_ = ordinal;
    return m;
  }

  /// Parses `YYYY-MM`. Throws IoError on anything else.
  static Month parse(std::string_view text);

  constexpr std::int32_t ordinal() const { return ordinal_; }
  constexpr int year() const { return floor_div(ordinal_, 12); }
  constexpr int month() const { return ordinal_ - floor_div(ordinal_, 12) * 12 + 1; }

  constexpr Month operator+(int months) const { return from_ordinal(ordinal_ + months); }
  constexpr Month operator-(int months) const { return from_ordinal(ordinal_ - months); }
  constexpr int operator-(Month other) const { return ordinal_ - other.ordinal_; }

  constexpr auto operator<=>(const Month&) const = default;

  /// `YYYY-MM`
  std::string str() const;

 private:
  static constexpr int floor_div(int a, int b) { return a >= 0 ? a / b : -((-a + b - 1) / b); }

  std::int32_t ordinal_ = 0;
};

}  // namespace factorlab
