#include "vtec/ionex.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <set>
#include <sstream>

#include "vtec/errors.hpp"

namespace vtec {

namespace {

constexpr double kGridTolerance = 1e-6;

double pow10i(int n) {
  double r = 1.0;
  for (int i = 0; i < n; ++i) r *= 10.0;
  return r;
}

int axis_count(double start, double stop, double step) {
  return int(std::lround((stop - start) / step)) + 1;
}

void validate_axis(double start, double stop, double step, const char* name) {
  if (!std::isfinite(start) || !std::isfinite(stop) || !std::isfinite(step) || step == 0.0)
    throw ConfigError(std::string(name) + " axis: start/stop/step must be finite with nonzero step");
  const double ratio = (stop - start) / step;
  if (ratio < -kGridTolerance || std::abs(ratio - std::round(ratio)) > kGridTolerance)
    throw ConfigError(std::string(name) + " axis: (stop - start) / step is not a non-negative integer");
  if (std::lround(ratio) + 1 < 2) throw ConfigError(std::string(name) + " axis needs at least 2 nodes");
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return std::string(s.substr(b, e - b + 1));
}

std::string label_of(const std::string& line) { return line.size() > 60 ? trim(std::string_view(line).substr(60)) : std::string{}; }

std::string_view column(const std::string& line, std::size_t first, std::size_t width) {
  if (first >= line.size()) return {};
  return std::string_view(line).substr(first, std::min(width, line.size() - first));
}

class LineReader {
 public:
  explicit LineReader(std::istream& in) : in_(in) {}

  bool next(std::string& line) {
    if (!std::getline(in_, line)) return false;
    ++line_no_;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return true;
  }

  std::size_t line_no() const { return line_no_; }

 private:
  std::istream& in_;
  std::size_t line_no_ = 0;
};

double real_field(const std::string& line, std::size_t first, std::size_t width, std::size_t line_no,
                  const char* what) {
  const std::string text = trim(column(line, first, width));
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (text.empty() || ec != std::errc{} || ptr != text.data() + text.size())
    throw ParseError(std::string("non-numeric ") + what + " field '" + text + "'", line_no);
  return v;
}

long long int_field(const std::string& line, std::size_t first, std::size_t width, std::size_t line_no,
                    const char* what) {
  const std::string text = trim(column(line, first, width));
  long long v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (text.empty() || ec != std::errc{} || ptr != text.data() + text.size())
    throw ParseError(std::string("non-numeric ") + what + " field '" + text + "'", line_no);
  return v;
}

UtcTime epoch_field(const std::string& line, std::size_t line_no) {
  long long f[6];
  for (int k = 0; k < 6; ++k) f[k] = int_field(line, std::size_t(6 * k), 6, line_no, "epoch");
  if (f[1] < 1 || f[1] > 12 || f[2] < 1 || f[2] > 31 || f[3] < 0 || f[3] > 24 || f[4] < 0 ||
      f[4] > 59 || f[5] < 0 || f[5] > 60)
    throw ParseError("epoch out of range", line_no);
  try {
    return make_utc(int(f[0]), unsigned(f[1]), unsigned(f[2]), int(f[3]), int(f[4]), int(f[5]));
  } catch (const ConfigError&) {
    throw ParseError("invalid calendar epoch", line_no);
  }
}

bool same(double a, double b) { return std::abs(a - b) <= kGridTolerance; }

const std::set<std::string>& record_labels() {
  static const std::set<std::string> labels = {
      "START OF TEC MAP", "END OF TEC MAP",       "START OF RMS MAP",     "END OF RMS MAP",
      "START OF HEIGHT MAP", "END OF HEIGHT MAP", "EPOCH OF CURRENT MAP", "LAT/LON1/LON2/DLON/H",
      "EXPONENT",         "END OF FILE"};
  return labels;
}

void parse_header(LineReader& reader, IonexFile& file) {
  IonexHeader& h = file.header;
  std::string line;
  bool first = true;
  bool have_lat = false;
  bool have_lon = false;
  std::optional<double> height;
  while (reader.next(line)) {
    const std::size_t n = reader.line_no();
    const std::string label = label_of(line);
    if (first) {
      if (label != "IONEX VERSION / TYPE") throw ParseError("expected 'IONEX VERSION / TYPE' as first record", n);
      first = false;
      h.version = real_field(line, 0, 8, n, "version");
      h.file_type = trim(column(line, 20, 1));
      h.satellite_system = trim(column(line, 40, 3));
      if (h.file_type != "I") throw ParseError("unsupported IONEX file type '" + h.file_type + "'", n);
      continue;
    }
    if (label == "END OF HEADER") {
      if (!have_lat || !have_lon) throw ParseError("header lacks LAT1 / LAT2 / DLAT or LON1 / LON2 / DLON", n);
      try {
        h.grid.validate();
      } catch (const ConfigError& e) {
        throw ParseError(e.what(), n);
      }
      return;
    }
    if (label == "PGM / RUN BY / DATE") {
      h.program = trim(column(line, 0, 20));
      h.run_by = trim(column(line, 20, 20));
      h.date = trim(column(line, 40, 20));
    } else if (label == "DESCRIPTION") {
      h.descriptions.push_back(trim(column(line, 0, 60)));
    } else if (label == "COMMENT") {
      h.comments.push_back(trim(column(line, 0, 60)));
    } else if (label == "EPOCH OF FIRST MAP") {
      h.epoch_first = epoch_field(line, n);
    } else if (label == "EPOCH OF LAST MAP") {
      h.epoch_last = epoch_field(line, n);
    } else if (label == "INTERVAL") {
      h.interval = int(int_field(line, 0, 6, n, "interval"));
    } else if (label == "# OF MAPS IN FILE") {
      h.map_count = int(int_field(line, 0, 6, n, "map count"));
    } else if (label == "MAPPING FUNCTION") {
      h.mapping_function = trim(column(line, 2, 4));
    } else if (label == "ELEVATION CUTOFF") {
      h.elevation_cutoff = real_field(line, 0, 8, n, "elevation cutoff");
    } else if (label == "OBSERVABLES USED") {
      h.observables = trim(column(line, 0, 60));
    } else if (label == "# OF STATIONS") {
      h.station_count = int(int_field(line, 0, 6, n, "station count"));
    } else if (label == "# OF SATELLITES") {
      h.satellite_count = int(int_field(line, 0, 6, n, "satellite count"));
    } else if (label == "BASE RADIUS") {
      h.base_radius = real_field(line, 0, 8, n, "base radius");
    } else if (label == "MAP DIMENSION") {
      if (int_field(line, 0, 6, n, "map dimension") != 2) throw ParseError("only 2-D IONEX maps are supported", n);
    } else if (label == "HGT1 / HGT2 / DHGT") {
      const double h1 = real_field(line, 2, 6, n, "HGT1");
      const double h2 = real_field(line, 8, 6, n, "HGT2");
      if (!same(h1, h2)) throw ParseError("multi-height IONEX is not supported", n);
      height = h1;
      h.grid.height = h1;
    } else if (label == "LAT1 / LAT2 / DLAT") {
      h.grid.lat_start = real_field(line, 2, 6, n, "LAT1");
      h.grid.lat_stop = real_field(line, 8, 6, n, "LAT2");
      h.grid.lat_step = real_field(line, 14, 6, n, "DLAT");
      have_lat = true;
    } else if (label == "LON1 / LON2 / DLON") {
      h.grid.lon_start = real_field(line, 2, 6, n, "LON1");
      h.grid.lon_stop = real_field(line, 8, 6, n, "LON2");
      h.grid.lon_step = real_field(line, 14, 6, n, "DLON");
      have_lon = true;
    } else if (label == "EXPONENT") {
      h.exponent = int(int_field(line, 0, 6, n, "exponent"));
    } else if (label == "START OF AUX DATA") {
      // DCB and other auxiliary blocks are skipped wholesale.
      while (true) {
        if (!reader.next(line)) throw ParseError("unterminated AUX DATA block", reader.line_no());
        if (label_of(line) == "END OF AUX DATA") break;
      }
    } else {
      throw ParseError("malformed header label '" + label + "'", n);
    }
  }
  throw ParseError("missing END OF HEADER", reader.line_no());
}

TecMap parse_map(LineReader& reader, IonexFile& file, bool rms) {
  const std::string end_label = rms ? "END OF RMS MAP" : "END OF TEC MAP";
  const GridSpec& grid = file.header.grid;
  const int n_lat = grid.n_lat();
  const int n_lon = grid.n_lon();

  std::optional<UtcTime> epoch;
  int exponent = file.header.exponent;
  std::vector<long long> raw;
  raw.reserve(std::size_t(n_lat) * std::size_t(n_lon));
  int rows = 0;

  std::string line;
  while (reader.next(line)) {
    const std::size_t n = reader.line_no();
    if (trim(line).empty()) continue;
    const std::string label = label_of(line);
    if (label == "EPOCH OF CURRENT MAP") {
      epoch = epoch_field(line, n);
    } else if (label == "EXPONENT") {
      exponent = int(int_field(line, 0, 6, n, "exponent"));
    } else if (label == "LAT/LON1/LON2/DLON/H") {
      if (rows >= n_lat) throw ParseError("more latitude rows than the header grid defines", n);
      const double lat = real_field(line, 2, 6, n, "LAT");
      const double lon1 = real_field(line, 8, 6, n, "LON1");
      const double lon2 = real_field(line, 14, 6, n, "LON2");
      const double dlon = real_field(line, 20, 6, n, "DLON");
      const double hgt = real_field(line, 26, 6, n, "H");
      if (!same(lat, grid.lat_at(rows)) || !same(lon1, grid.lon_start) || !same(lon2, grid.lon_stop) ||
          !same(dlon, grid.lon_step) || !same(hgt, grid.height))
        throw ParseError("grid line inconsistent with header grid", n);
      int needed = n_lon;
      while (needed > 0) {
        if (!reader.next(line)) throw ParseError("truncated map block", reader.line_no());
        const std::size_t ln = reader.line_no();
        if (record_labels().count(label_of(line))) throw ParseError("truncated map block", ln);
        const int count = std::min(needed, 16);
        if (line.size() < std::size_t(5 * (count - 1) + 1)) throw ParseError("truncated data line", ln);
        for (int f = 0; f < count; ++f) raw.push_back(int_field(line, std::size_t(5 * f), 5, ln, "value"));
        needed -= count;
        file.fields_read += std::size_t(count);
      }
      ++rows;
    } else if (label == end_label) {
      if (rows != n_lat) throw ParseError("truncated map block: " + std::to_string(rows) + " of " +
                                              std::to_string(n_lat) + " latitude rows", n);
      if (!epoch) throw ParseError("map block without EPOCH OF CURRENT MAP", n);
      TecMap map(*epoch, grid);
      for (int i = 0; i < n_lat; ++i) {
        for (int j = 0; j < n_lon; ++j) {
          const long long r = raw[std::size_t(i) * std::size_t(n_lon) + std::size_t(j)];
          if (r == kIonexMissing) continue;
          const double v = unscale_value(r, exponent);
          if (v < 0.0) throw ParseError("negative TEC/RMS value in map ending", n);
          map.set(i, j, v);
        }
      }
      return map;
    } else {
      throw ParseError(label.empty() ? "unexpected line inside map block" : "unexpected record '" + label + "' inside map block", n);
    }
  }
  throw ParseError("truncated map block (end of input)", reader.line_no());
}

std::string record(const std::string& content, std::string_view label) {
  std::string out = content;
  out.resize(60, ' ');
  out.append(label);
  out.push_back('\n');
  return out;
}

template <typename... Args>
std::string fmt(const char* format, Args... args) {
  char buf[128];
  std::snprintf(buf, sizeof buf, format, args...);
  return buf;
}

std::string epoch_content(UtcTime t) {
  const auto c = to_civil(t);
  return fmt("%6d%6u%6u%6d%6d%6d", c.year, c.month, c.day, c.hour, c.minute, c.second);
}

void write_map(std::ostream& out, const TecMap& map, int index, bool rms, int exponent) {
  const GridSpec& g = map.grid();
  out << record(fmt("%6d", index), rms ? "START OF RMS MAP" : "START OF TEC MAP");
  out << record(epoch_content(map.epoch()), "EPOCH OF CURRENT MAP");
  for (int i = 0; i < map.n_lat(); ++i) {
    out << record(fmt("  %6.1f%6.1f%6.1f%6.1f%6.1f", g.lat_at(i), g.lon_start, g.lon_stop, g.lon_step, g.height),
                  "LAT/LON1/LON2/DLON/H");
    std::string data;
    for (int j = 0; j < map.n_lon(); ++j) {
      long long raw = kIonexMissing;
      if (map.present(i, j)) {
        raw = scale_value(map.value(i, j), exponent);
        if (raw > 99998 || raw < -9999)
          throw ConfigError("value " + std::to_string(map.value(i, j)) + " TECU overflows a 5-column field at exponent " +
                            std::to_string(exponent));
        if (raw == kIonexMissing)
          throw ConfigError("value " + std::to_string(map.value(i, j)) + " TECU collides with the 9999 sentinel");
      }
      data += fmt("%5lld", raw);
      if (j % 16 == 15 || j + 1 == map.n_lon()) {
        out << data << '\n';
        data.clear();
      }
    }
  }
  out << record(fmt("%6d", index), rms ? "END OF RMS MAP" : "END OF TEC MAP");
}

}  // namespace

int GridSpec::n_lat() const { return axis_count(lat_start, lat_stop, lat_step); }
int GridSpec::n_lon() const { return axis_count(lon_start, lon_stop, lon_step); }

void GridSpec::validate() const {
  validate_axis(lat_start, lat_stop, lat_step, "latitude");
  validate_axis(lon_start, lon_stop, lon_step, "longitude");
}

GridSpec igs_grid() { return GridSpec{}; }

TecMap::TecMap(UtcTime epoch, const GridSpec& grid) : epoch_(epoch), grid_(grid) {
  grid_.validate();
  n_lat_ = grid_.n_lat();
  n_lon_ = grid_.n_lon();
  values_.assign(std::size_t(n_lat_) * std::size_t(n_lon_), 0.0);
  present_.assign(values_.size(), 0);
}

std::optional<double> TecMap::at(int i, int j) const {
  if (!present(i, j)) return std::nullopt;
  return value(i, j);
}

void TecMap::set(int i, int j, double tecu) {
  if (i < 0 || i >= n_lat_ || j < 0 || j >= n_lon_) throw LookupError("map index out of range");
  if (!std::isfinite(tecu)) throw ConfigError("non-finite map value");
  values_[index(i, j)] = tecu;
  present_[index(i, j)] = 1;
}

void TecMap::set_missing(int i, int j) {
  if (i < 0 || i >= n_lat_ || j < 0 || j >= n_lon_) throw LookupError("map index out of range");
  values_[index(i, j)] = 0.0;
  present_[index(i, j)] = 0;
}

std::size_t TecMap::present_count() const {
  return std::size_t(std::count(present_.begin(), present_.end(), std::uint8_t{1}));
}

void IonexFile::validate() const {
  for (std::size_t m = 1; m < tec_maps.size(); ++m)
    if (tec_maps[m].epoch() <= tec_maps[m - 1].epoch())
      throw ConfigError("TEC maps are not in strictly increasing epoch order");
  if (!rms_maps.empty()) {
    if (rms_maps.size() != tec_maps.size()) throw ConfigError("RMS map count differs from TEC map count");
    for (std::size_t m = 0; m < rms_maps.size(); ++m)
      if (rms_maps[m].epoch() != tec_maps[m].epoch()) throw ConfigError("RMS map epochs do not match TEC map epochs");
  }
  for (const auto* maps : {&tec_maps, &rms_maps})
    for (const auto& m : *maps)
      if (!(m.grid() == header.grid)) throw ConfigError("map grid differs from header grid");
}

IonexFile parse_ionex(std::istream& in) {
  LineReader reader(in);
  IonexFile file;
  parse_header(reader, file);

  std::string line;
  while (reader.next(line)) {
    const std::size_t n = reader.line_no();
    if (trim(line).empty()) continue;
    const std::string label = label_of(line);
    if (label == "START OF TEC MAP") {
      file.tec_maps.push_back(parse_map(reader, file, false));
    } else if (label == "START OF RMS MAP") {
      file.rms_maps.push_back(parse_map(reader, file, true));
    } else if (label == "START OF HEIGHT MAP") {
      throw ParseError("height maps are not supported", n);
    } else if (label == "END OF FILE") {
      break;
    } else {
      throw ParseError("unexpected record '" + label + "' in data section", n);
    }
  }

  try {
    file.validate();
  } catch (const ConfigError& e) {
    throw ParseError(e.what(), 0);
  }

  const auto& h = file.header;
  if (!file.tec_maps.empty()) {
    if (h.epoch_first && *h.epoch_first != file.tec_maps.front().epoch())
      file.warnings.push_back("EPOCH OF FIRST MAP " + format_iso(*h.epoch_first) + " differs from first map " +
                              format_iso(file.tec_maps.front().epoch()));
    if (h.epoch_last && *h.epoch_last != file.tec_maps.back().epoch())
      file.warnings.push_back("EPOCH OF LAST MAP " + format_iso(*h.epoch_last) + " differs from last map " +
                              format_iso(file.tec_maps.back().epoch()));
  }
  if (h.map_count && std::size_t(*h.map_count) != file.tec_maps.size())
    file.warnings.push_back("# OF MAPS IN FILE says " + std::to_string(*h.map_count) + ", found " +
                            std::to_string(file.tec_maps.size()));
  return file;
}

IonexFile parse_ionex(std::string_view text) {
  std::istringstream in{std::string(text)};
  return parse_ionex(in);
}

IonexFile read_ionex_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open IONEX file " + path.string());
  IonexFile file = parse_ionex(in);
  file.source = path.filename().string();
  return file;
}

void write_ionex(const IonexFile& file, std::ostream& out) {
  file.validate();
  const IonexHeader& h = file.header;
  const GridSpec& g = h.grid;
  out << record(fmt("%8.1f%12s%-20s%-20s", h.version, "", h.file_type.c_str(), h.satellite_system.c_str()),
                "IONEX VERSION / TYPE");
  out << record(fmt("%-20.20s%-20.20s%-20.20s", h.program.c_str(), h.run_by.c_str(), h.date.c_str()),
                "PGM / RUN BY / DATE");
  for (const auto& d : h.descriptions) out << record(d.substr(0, 60), "DESCRIPTION");

  std::optional<UtcTime> first = h.epoch_first;
  std::optional<UtcTime> last = h.epoch_last;
  if (!first && !file.tec_maps.empty()) first = file.tec_maps.front().epoch();
  if (!last && !file.tec_maps.empty()) last = file.tec_maps.back().epoch();
  if (first) out << record(epoch_content(*first), "EPOCH OF FIRST MAP");
  if (last) out << record(epoch_content(*last), "EPOCH OF LAST MAP");
  out << record(fmt("%6d", h.interval), "INTERVAL");
  out << record(fmt("%6d", int(file.tec_maps.size())), "# OF MAPS IN FILE");
  out << record(fmt("  %-4.4s", h.mapping_function.c_str()), "MAPPING FUNCTION");
  out << record(fmt("%8.1f", h.elevation_cutoff), "ELEVATION CUTOFF");
  out << record(h.observables.substr(0, 60), "OBSERVABLES USED");
  if (h.station_count) out << record(fmt("%6d", *h.station_count), "# OF STATIONS");
  if (h.satellite_count) out << record(fmt("%6d", *h.satellite_count), "# OF SATELLITES");
  out << record(fmt("%8.1f", h.base_radius), "BASE RADIUS");
  out << record(fmt("%6d", 2), "MAP DIMENSION");
  out << record(fmt("  %6.1f%6.1f%6.1f", g.height, g.height, 0.0), "HGT1 / HGT2 / DHGT");
  out << record(fmt("  %6.1f%6.1f%6.1f", g.lat_start, g.lat_stop, g.lat_step), "LAT1 / LAT2 / DLAT");
  out << record(fmt("  %6.1f%6.1f%6.1f", g.lon_start, g.lon_stop, g.lon_step), "LON1 / LON2 / DLON");
  out << record(fmt("%6d", h.exponent), "EXPONENT");
  for (const auto& c : h.comments) out << record(c.substr(0, 60), "COMMENT");
  out << record("", "END OF HEADER");

  for (std::size_t m = 0; m < file.tec_maps.size(); ++m)
    write_map(out, file.tec_maps[m], int(m) + 1, false, h.exponent);
  for (std::size_t m = 0; m < file.rms_maps.size(); ++m)
    write_map(out, file.rms_maps[m], int(m) + 1, true, h.exponent);
  out << record("", "END OF FILE");
}

std::string write_ionex(const IonexFile& file) {
  std::ostringstream out;
  write_ionex(file, out);
  return out.str();
}

void write_ionex_file(const IonexFile& file, const std::filesystem::path& path) {
  const std::string text = write_ionex(file);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

std::optional<double> grid_value(const TecMap& map, int lat_index, int lon_index) {
  if (lat_index < 0 || lat_index >= map.n_lat() || lon_index < 0 || lon_index >= map.n_lon())
    throw LookupError("grid index (" + std::to_string(lat_index) + ", " + std::to_string(lon_index) +
                      ") outside " + std::to_string(map.n_lat()) + "x" + std::to_string(map.n_lon()) + " grid");
  return map.at(lat_index, lon_index);
}

double interpolate_bilinear(const TecMap& map, double lat, double lon) {
  const GridSpec& g = map.grid();
  const double fi = (lat - g.lat_start) / g.lat_step;
  const double fj = (lon - g.lon_start) / g.lon_step;
  const double max_i = map.n_lat() - 1;
  const double max_j = map.n_lon() - 1;
  if (!(fi >= -kGridTolerance && fi <= max_i + kGridTolerance && fj >= -kGridTolerance &&
        fj <= max_j + kGridTolerance))
    throw LookupError("point outside grid bounds");
  const int i0 = std::clamp(int(std::floor(fi + kGridTolerance)), 0, map.n_lat() - 2);
  const int j0 = std::clamp(int(std::floor(fj + kGridTolerance)), 0, map.n_lon() - 2);
  double t = std::clamp(fi - i0, 0.0, 1.0);
  double u = std::clamp(fj - j0, 0.0, 1.0);
  if (t < kGridTolerance) t = 0.0;
  if (u < kGridTolerance) u = 0.0;
  if (1.0 - t < kGridTolerance) t = 1.0;
  if (1.0 - u < kGridTolerance) u = 1.0;

  double sum = 0.0;
  const double wi[2] = {1.0 - t, t};
  const double wj[2] = {1.0 - u, u};
  for (int a = 0; a < 2; ++a) {
    for (int b = 0; b < 2; ++b) {
      const double w = wi[a] * wj[b];
      if (w == 0.0) continue;
      if (!map.present(i0 + a, j0 + b)) throw LookupError("interpolation node missing");
      sum += w * map.value(i0 + a, j0 + b);
    }
  }
  return sum;
}

long long scale_value(double tecu, int exponent) {
  return exponent < 0 ? std::llround(tecu * pow10i(-exponent)) : std::llround(tecu / pow10i(exponent));
}

double unscale_value(long long raw, int exponent) {
  return exponent < 0 ? double(raw) / pow10i(-exponent) : double(raw) * pow10i(exponent);
}

}  // namespace vtec
