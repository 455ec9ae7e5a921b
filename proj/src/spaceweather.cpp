#include "vtec/spaceweather.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <vector>

#include "vtec/errors.hpp"

namespace vtec {

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) {
    const auto b = cell.find_first_not_of(" \t\r");
    const auto e = cell.find_last_not_of(" \t\r");
    out.push_back(b == std::string::npos ? std::string{} : cell.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double number(const std::string& s, std::size_t line_no, const std::string& column) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(v))
    throw ParseError("non-numeric " + column + " value '" + s + "'", line_no);
  return v;
}

}  // namespace

void SpaceWeatherTable::insert(UtcDay day, const DailyIndices& indices) {
  if (!(indices.f107_adjusted > 0.0) || !std::isfinite(indices.f107_adjusted))
    throw ConfigError("f107_adjusted must be positive on " + format_date(day));
  for (double kp : indices.kp)
    if (!(kp >= 0.0 && kp <= 9.0)) throw ConfigError("kp outside [0, 9] on " + format_date(day));
  if (!days_.emplace(day, indices).second) throw ConfigError("duplicate day " + format_date(day));
}

const DailyIndices& SpaceWeatherTable::at(UtcDay day) const {
  const auto it = days_.find(day);
  if (it == days_.end()) throw LookupError("space-weather table has no entry for " + format_date(day));
  return it->second;
}

SpaceWeatherTable parse_spaceweather(std::string_view text) {
  SpaceWeatherTable table;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  std::vector<int> columns;  // date, f107, kp1..kp8
  std::size_t width = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos || line[line.find_first_not_of(" \t")] == '#') continue;
    const auto cells = split_csv(line);
    if (columns.empty()) {
      std::vector<std::string> wanted = {"date", "f107_adjusted"};
      for (int k = 1; k <= 8; ++k) wanted.push_back("kp" + std::to_string(k));
      for (const auto& name : wanted) {
        int found = -1;
        for (std::size_t c = 0; c < cells.size(); ++c)
          if (cells[c] == name) found = int(c);
        if (found < 0) throw ParseError("missing column '" + name + "'", line_no);
        columns.push_back(found);
      }
      width = cells.size();
      continue;
    }
    if (cells.size() != width)
      throw ParseError("expected " + std::to_string(width) + " columns, found " + std::to_string(cells.size()), line_no);
    UtcDay day;
    try {
      day = parse_date(cells[std::size_t(columns[0])]);
    } catch (const ParseError& e) {
      throw ParseError(e.what(), line_no);
    }
    DailyIndices d;
    d.f107_adjusted = number(cells[std::size_t(columns[1])], line_no, "f107_adjusted");
    for (int k = 0; k < 8; ++k) d.kp[std::size_t(k)] = number(cells[std::size_t(columns[std::size_t(k) + 2])], line_no, "kp");
    try {
      table.insert(day, d);
    } catch (const ConfigError& e) {
      throw ParseError(e.what(), line_no);
    }
  }
  return table;
}

SpaceWeatherTable read_spaceweather_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open space-weather file " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_spaceweather(text.str());
}

std::string write_spaceweather(const SpaceWeatherTable& table) {
  std::string out = "date,f107_adjusted,kp1,kp2,kp3,kp4,kp5,kp6,kp7,kp8\n";
  char buf[64];
  for (const auto& [day, d] : table.days()) {
    out += format_date(day);
    std::snprintf(buf, sizeof buf, ",%.1f", d.f107_adjusted);
    out += buf;
    for (double kp : d.kp) {
      std::snprintf(buf, sizeof buf, ",%.1f", kp);
      out += buf;
    }
    out += '\n';
  }
  return out;
}

double lookup_f107(const SpaceWeatherTable& table, UtcDay day) { return table.at(day).f107_adjusted; }

double lookup_kp(const SpaceWeatherTable& table, UtcTime t) {
  return table.at(utc_day(t)).kp[std::size_t(second_of_day(t) / 10800)];
}

double normalize_longitude(double lon) {
  double r = std::fmod(lon, 360.0);
  if (r > 180.0) r -= 360.0;
  if (r <= -180.0) r += 360.0;
  return r;
}

FeatureVector build_feature(UtcTime t, double lat, double lon, const SpaceWeatherTable& table) {
  if (!std::isfinite(lat) || lat < -90.0 || lat > 90.0) throw ConfigError("latitude outside [-90, 90]");
  if (!std::isfinite(lon)) throw ConfigError("non-finite longitude");
  FeatureVector f;
  f.f107 = lookup_f107(table, utc_day(t));
  f.kp = lookup_kp(table, t);
  f.doy = day_of_year(t);
  f.sod = second_of_day(t);
  f.lon = normalize_longitude(lon);
  f.lat = lat;
  return f;
}

}  // namespace vtec
