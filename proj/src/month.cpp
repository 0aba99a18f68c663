#include "factorlab/month.hpp"

#include <charconv>
#include <cstdio>

#include "factorlab/error.hpp"

namespace factorlab {

Month Month::parse(std::string_view text) {
  const auto fail = [&] { return IoError("invalid month '" + std::string(text) + "', expected YYYY-MM"); };
  if (text.size() != 7 || text[4] != '-') throw fail();
  int year = 0;
  int month = 0;
  auto [p1, e1] = std::from_chars(text.data(), text.data() + 4, year);
  auto [p2, e2] = std::from_chars(text.data() + 5, text.data() + 7, month);
  if (e1 != std::errc{} || e2 != std::errc{} || p1 != text.data() + 4 || p2 != text.data() + 7) throw fail();
  if (month < 1 || month > 12) throw fail();
  return Month(year, month);
}

std::string Month::str() const {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02d", year(), month());
  return buf;
}

}  // namespace factorlab
