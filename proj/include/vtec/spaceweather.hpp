#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>

#include "vtec/time.hpp"

namespace vtec {

struct DailyIndices {
  double f107_adjusted = 0.0;  // sfu, 1 AU normalized
  std::array<double, 8> kp{};  // 3-hourly, 0..9
};

/// Daily adjusted F10.7 and 3-hourly Kp keyed by UTC day. Days absent from
/// the table are gaps; lookups on them fail.
class SpaceWeatherTable {
 public:
  /// Throws ConfigError on a duplicate day or out-of-range index.
  void insert(UtcDay day, const DailyIndices& indices);

  bool covers(UtcDay day) const { return days_.count(day) != 0; }
  /// Throws LookupError when the day is absent.
  const DailyIndices& at(UtcDay day) const;

  std::size_t size() const { return days_.size(); }
  bool empty() const { return days_.empty(); }
  const std::map<UtcDay, DailyIndices>& days() const { return days_; }

 private:
  std::map<UtcDay, DailyIndices> days_;
};

/// CSV with a header naming `date,f107_adjusted,kp1,...,kp8` (any column
/// order, extra columns ignored, '#' comment lines allowed). An empty input
/// yields an empty table.
SpaceWeatherTable parse_spaceweather(std::string_view text);
SpaceWeatherTable read_spaceweather_file(const std::filesystem::path& path);
std::string write_spaceweather(const SpaceWeatherTable& table);

double lookup_f107(const SpaceWeatherTable& table, UtcDay day);
/// Kp of the 3-hour bin floor(sod / 10800) containing t.
double lookup_kp(const SpaceWeatherTable& table, UtcTime t);

/// The six raw model inputs.
struct FeatureVector {
  double f107 = 0.0;
  double kp = 0.0;
  double doy = 1.0;
  double sod = 0.0;
  double lon = 0.0;  // (-180, 180]
  double lat = 0.0;  // [-90, 90]
};

/// Maps any longitude into (-180, 180].
double normalize_longitude(double lon);

FeatureVector build_feature(UtcTime t, double lat, double lon, const SpaceWeatherTable& table);

}  // namespace vtec
