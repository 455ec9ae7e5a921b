#pragma once

// IONEX 1.0 reader/writer for 2-D TEC and RMS maps.
//
// Layout follows the IONEX 1.0 format description: 80-column records with
// labels in columns 61-80, map rows introduced by LAT/LON1/LON2/DLON/H and
// values written as 16 x I5 per data line. Values are kept in TECU as
// doubles; the scaled integer representation only exists at the text
// boundary (raw * 10^EXPONENT).

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "vtec/time.hpp"

namespace vtec {

inline constexpr int kIonexMissing = 9999;

struct GridSpec {
  double lat_start = 87.5;
  double lat_stop = -87.5;
  double lat_step = -2.5;
  double lon_start = -180.0;
  double lon_stop = 180.0;
  double lon_step = 5.0;
  double height = 450.0;

  int n_lat() const;
  int n_lon() const;
  double lat_at(int i) const { return lat_start + i * lat_step; }
  double lon_at(int j) const { return lon_start + j * lon_step; }

  /// Throws ConfigError unless both axes hold a whole, non-negative number of
  /// steps and at least two nodes.
  void validate() const;

  bool operator==(const GridSpec&) const = default;
};

/// The global grid of the IGS daily products (71 latitudes x 73 longitudes).
GridSpec igs_grid();

class TecMap {
 public:
  TecMap() = default;
  /// All cells start missing.
  TecMap(UtcTime epoch, const GridSpec& grid);

  UtcTime epoch() const { return epoch_; }
  const GridSpec& grid() const { return grid_; }
  int n_lat() const { return n_lat_; }
  int n_lon() const { return n_lon_; }

  bool present(int i, int j) const { return present_[index(i, j)] != 0; }
  /// Raw stored value; meaningless for missing cells.
  double value(int i, int j) const { return values_[index(i, j)]; }
  std::optional<double> at(int i, int j) const;

  void set(int i, int j, double tecu);
  void set_missing(int i, int j);

  std::size_t present_count() const;

 private:
  std::size_t index(int i, int j) const { return std::size_t(i) * std::size_t(n_lon_) + std::size_t(j); }

  UtcTime epoch_{};
  GridSpec grid_{};
  int n_lat_ = 0;
  int n_lon_ = 0;
  std::vector<double> values_;
  std::vector<std::uint8_t> present_;
};

struct IonexHeader {
  double version = 1.0;
  std::string file_type = "I";
  std::string satellite_system = "GPS";
  std::string program = "vtecbnn";
  std::string run_by;
  std::string date;
  std::vector<std::string> descriptions;
  std::optional<UtcTime> epoch_first;
  std::optional<UtcTime> epoch_last;
  int interval = 0;  // seconds
  std::optional<int> map_count;
  std::string mapping_function = "NONE";
  double elevation_cutoff = 0.0;
  std::string observables;
  std::optional<int> station_count;
  std::optional<int> satellite_count;
  double base_radius = 6371.0;
  GridSpec grid{};
  int exponent = -1;
  std::vector<std::string> comments;
};

struct IonexFile {
  IonexHeader header;
  std::vector<TecMap> tec_maps;
  std::vector<TecMap> rms_maps;

  /// Non-fatal findings from parsing (e.g. header epochs disagreeing with the maps).
  std::vector<std::string> warnings;
  /// Value fields consumed by the parser.
  std::size_t fields_read = 0;
  std::string source;

  /// Throws ConfigError when epochs are not strictly increasing or RMS maps do
  /// not pair one-to-one with TEC maps.
  void validate() const;
};

IonexFile parse_ionex(std::istream& in);
IonexFile parse_ionex(std::string_view text);
IonexFile read_ionex_file(const std::filesystem::path& path);

/// Throws ConfigError when a value does not fit a 5-column field at the
/// header exponent or collides with the missing-value sentinel.
void write_ionex(const IonexFile& file, std::ostream& out);
std::string write_ionex(const IonexFile& file);
void write_ionex_file(const IonexFile& file, const std::filesystem::path& path);

/// Stored cell, no interpolation. Throws LookupError for indices outside the grid.
std::optional<double> grid_value(const TecMap& map, int lat_index, int lon_index);

/// Bilinear blend of the surrounding nodes. Throws LookupError when the
/// point is outside the grid or a contributing node is missing.
double interpolate_bilinear(const TecMap& map, double lat, double lon);

/// Scaled integer written for `tecu` at `exponent` (round half away from zero).
long long scale_value(double tecu, int exponent);
double unscale_value(long long raw, int exponent);

}  // namespace vtec
