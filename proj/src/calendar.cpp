#include "deeptfp/calendar.hpp"

#include <charconv>
#include <chrono>
#include <cstdio>

#include "deeptfp/error.hpp"

namespace deeptfp::calendar {

namespace {

using namespace std::chrono;

int parse_field(std::string_view text, std::size_t pos, std::size_t len, bool& ok) {
  int value = 0;
  if (pos + len > text.size()) {
    ok = false;
    return 0;
  }
  const char* first = text.data() + pos;
  auto [ptr, ec] = std::from_chars(first, first + len, value);
  if (ec != std::errc() || ptr != first + len) ok = false;
  return value;
}

}  // namespace

EpochSeconds parse_iso8601(std::string_view text) {
  if (!text.empty() && text.back() == 'Z') text.remove_suffix(1);
  bool ok = text.size() == 19 && text[4] == '-' && text[7] == '-' &&
            (text[10] == 'T' || text[10] == ' ') && text[13] == ':' && text[16] == ':';
  const int y = parse_field(text, 0, 4, ok);
  const int mo = parse_field(text, 5, 2, ok);
  const int d = parse_field(text, 8, 2, ok);
  const int hh = parse_field(text, 11, 2, ok);
  const int mm = parse_field(text, 14, 2, ok);
  const int ss = parse_field(text, 17, 2, ok);
  const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)},
                           day{static_cast<unsigned>(d)}};
  if (!ok || !ymd.ok() || hh > 23 || mm > 59 || ss > 59) {
    throw DataError("invalid ISO-8601 timestamp '" + std::string(text) + "'");
  }
  const auto days_since = sys_days{ymd}.time_since_epoch().count();
  return static_cast<EpochSeconds>(days_since) * 86400 + hh * 3600 + mm * 60 + ss;
}

std::string format_iso8601(EpochSeconds t) {
  const auto day_count = floor<days>(sys_seconds{seconds{t}});
  const year_month_day ymd{day_count};
  const auto rem = t - day_count.time_since_epoch().count() * 86400;
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02dZ", int(ymd.year()),
                unsigned(ymd.month()), unsigned(ymd.day()), int(rem / 3600),
                int(rem / 60 % 60), int(rem % 60));
  return buf;
}

YearMonth YearMonth::parse(std::string_view text) {
  bool ok = text.size() == 7 && text[4] == '-';
  const int y = parse_field(text, 0, 4, ok);
  const int m = parse_field(text, 5, 2, ok);
  if (!ok || m < 1 || m > 12) {
    throw ConfigError("invalid month '" + std::string(text) + "', expected YYYY-MM");
  }
  return {y, static_cast<unsigned>(m)};
}

std::string YearMonth::str() const {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u", year, month);
  return buf;
}

YearMonth YearMonth::next() const {
  return month == 12 ? YearMonth{year + 1, 1} : YearMonth{year, month + 1};
}

EpochSeconds YearMonth::start() const {
  const sys_days d{std::chrono::year{year} / std::chrono::month{month} / 1};
  return static_cast<EpochSeconds>(d.time_since_epoch().count()) * 86400;
}

unsigned YearMonth::days() const {
  return static_cast<unsigned>((next().start() - start()) / 86400);
}

YearMonth year_month_of(EpochSeconds t) {
  const year_month_day ymd{floor<std::chrono::days>(sys_seconds{seconds{t}})};
  return {int(ymd.year()), unsigned(ymd.month())};
}

unsigned weekday_of(EpochSeconds t) {
  return weekday{floor<std::chrono::days>(sys_seconds{seconds{t}})}.c_encoding();
}

}  // namespace deeptfp::calendar
