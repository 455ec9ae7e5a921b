#include "vtec/time.hpp"

#include <charconv>
#include <cstdio>

#include "vtec/errors.hpp"

namespace vtec {

using namespace std::chrono;

UtcDay make_day(int year, unsigned month, unsigned day) {
  const year_month_day ymd{std::chrono::year{year}, std::chrono::month{month},
                           std::chrono::day{day}};
  if (!ymd.ok()) throw ConfigError("invalid calendar date");
  return sys_days{ymd};
}

UtcTime make_utc(int year, unsigned month, unsigned day, int hour, int minute, int second) {
  return UtcTime{make_day(year, month, day)} + hours{hour} + minutes{minute} + seconds{second};
}

UtcDay utc_day(UtcTime t) { return floor<days>(t); }

CivilTime to_civil(UtcTime t) {
  const auto d = utc_day(t);
  const year_month_day ymd{d};
  const auto sod = (t - d).count();
  return CivilTime{int(ymd.year()), unsigned(ymd.month()), unsigned(ymd.day()),
                   int(sod / 3600), int(sod % 3600 / 60), int(sod % 60)};
}

int day_of_year(UtcTime t) {
  const auto d = utc_day(t);
  const year_month_day ymd{d};
  return int((d - sys_days{ymd.year() / January / 1}).count()) + 1;
}

int second_of_day(UtcTime t) { return int((t - utc_day(t)).count()); }

std::string format_date(UtcDay d) {
  const year_month_day ymd{d};
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", int(ymd.year()), unsigned(ymd.month()),
                unsigned(ymd.day()));
  return buf;
}

std::string format_iso(UtcTime t) {
  const auto c = to_civil(t);
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02dZ", c.year, c.month, c.day, c.hour,
                c.minute, c.second);
  return buf;
}

UtcDay parse_date(std::string_view text) {
  auto number = [&](std::size_t pos, std::size_t len) {
    int v = 0;
    const auto* first = text.data() + pos;
    const auto [ptr, ec] = std::from_chars(first, first + len, v);
    if (ec != std::errc{} || ptr != first + len) throw ParseError("bad date '" + std::string(text) + "'", 0);
    return v;
  };
  if (text.size() != 10 || text[4] != '-' || text[7] != '-')
    throw ParseError("bad date '" + std::string(text) + "', expected YYYY-MM-DD", 0);
  const year_month_day ymd{std::chrono::year{number(0, 4)}, std::chrono::month(unsigned(number(5, 2))),
                           std::chrono::day(unsigned(number(8, 2)))};
  if (!ymd.ok()) throw ParseError("invalid date '" + std::string(text) + "'", 0);
  return sys_days{ymd};
}

}  // namespace vtec
