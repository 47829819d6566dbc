#pragma once

#include <compare>
#include <cstdint>
#include <string>
#include <string_view>

namespace deeptfp::calendar {

/// UTC seconds since 1970-01-01T00:00:00Z.
using EpochSeconds = std::int64_t;

/// Parses `YYYY-MM-DDTHH:MM:SS` with an optional trailing `Z`. Throws DataError.
EpochSeconds parse_iso8601(std::string_view text);
std::string format_iso8601(EpochSeconds t);

struct YearMonth {
  int year = 1970;
  unsigned month = 1;  // 1..12

  auto operator<=>(const YearMonth&) const = default;

  /// Parses `YYYY-MM`. Throws ConfigError.
  static YearMonth parse(std::string_view text);
  std::string str() const;
  YearMonth next() const;
  EpochSeconds start() const;
  unsigned days() const;
};

YearMonth year_month_of(EpochSeconds t);
/// 0 = Sunday ... 6 = Saturday.
unsigned weekday_of(EpochSeconds t);

}  // namespace deeptfp::calendar
