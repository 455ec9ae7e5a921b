#pragma once

// Latitude-banded affine recalibration of ensemble spread:
//   sigma_cal = scale(band) * sigma_raw + offset(band)
// fitted so that, under a Gaussian error model, E|eps| = sqrt(2/pi) * sigma_cal.

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace vtec {

inline constexpr double kDefaultBandWidth = 10.0;  // degrees
inline constexpr std::size_t kMinPairsPerBand = 30;

/// sqrt(2/pi): mean absolute value of a unit Gaussian.
double gaussian_mad_factor();

struct CalibrationPair {
  double sigma_raw = 0.0;  // TECU
  double abs_error = 0.0;  // TECU
  double lat = 0.0;        // degrees
};

struct CalibrationBand {
  double lat_lo = -90.0;
  double lat_hi = 90.0;
  double scale = 1.0;
  double offset = 0.0;  // TECU
  std::size_t pairs = 0;  // pairs the band was fitted on (0 = inherited global fit)
};

/// Uniform half-open bands [lo, hi) covering [-90, 90]; +90 belongs to the last band.
std::size_t band_count(double band_width);
std::size_t band_index(double lat, double band_width);

class CalibrationModel {
 public:
  CalibrationModel() = default;
  CalibrationModel(double band_width, std::vector<CalibrationBand> bands);

  static CalibrationModel identity(double band_width = kDefaultBandWidth);

  double band_width() const { return band_width_; }
  const std::vector<CalibrationBand>& bands() const { return bands_; }
  const CalibrationBand& band_for(double lat) const;

 private:
  double band_width_ = kDefaultBandWidth;
  std::vector<CalibrationBand> bands_;
};

/// Nonnegative least squares of |eps| * sqrt(pi/2) on sigma_raw per band.
/// Bands with fewer than `min_pairs` pairs inherit the global fit. Throws
/// ConfigError when `pairs` is empty.
CalibrationModel fit_calibration(std::span<const CalibrationPair> pairs, double band_width = kDefaultBandWidth,
                                 std::size_t min_pairs = kMinPairsPerBand);

double apply_calibration(const CalibrationModel& model, double sigma_raw, double lat);

/// band_lo,band_hi,scale,offset
std::string write_calibration_csv(const CalibrationModel& model);
CalibrationModel parse_calibration_csv(std::string_view text);
CalibrationModel read_calibration_file(const std::filesystem::path& path);

}  // namespace vtec
