#pragma once

#include <chrono>
#include <cstdint>
#include <string>
#include <string_view>

namespace vtec {

using UtcTime = std::chrono::sys_seconds;
using UtcDay = std::chrono::sys_days;

struct CivilTime {
  int year = 1970;
  unsigned month = 1;
  unsigned day = 1;
  int hour = 0;
  int minute = 0;
  int second = 0;
};

UtcTime make_utc(int year, unsigned month, unsigned day, int hour = 0, int minute = 0,
                 int second = 0);
UtcDay make_day(int year, unsigned month, unsigned day);

CivilTime to_civil(UtcTime t);
UtcDay utc_day(UtcTime t);

/// 1 for January 1st.
int day_of_year(UtcTime t);
int second_of_day(UtcTime t);

/// "2009-01-01"
std::string format_date(UtcDay d);
/// "2009-01-01T12:00:00Z"
std::string format_iso(UtcTime t);

/// Strict YYYY-MM-DD; throws ParseError.
UtcDay parse_date(std::string_view text);

}  // namespace vtec
