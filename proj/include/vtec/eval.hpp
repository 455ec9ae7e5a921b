#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vtec/calibrate.hpp"
#include "vtec/inference.hpp"
#include "vtec/ionex.hpp"

namespace vtec {

enum class Regime { Day, Night };

/// Local solar time from longitude only: LT = UTC hours + lon / 15 (mod 24);
/// Day iff LT in [6, 18).
Regime day_night(UtcTime epoch, double lon);
const char* regime_name(Regime r);

struct ErrorRecord {
  UtcTime epoch{};
  double lat = 0.0;
  double lon = 0.0;
  double eps = 0.0;  // predicted - truth, TECU
  double sigma_raw = 0.0;
  std::optional<double> sigma_cal;
  Regime regime = Regime::Day;
};

/// One record per cell present in both prediction and truth. Every predicted
/// epoch must exist in the truth file with an identical grid.
std::vector<ErrorRecord> error_records(const PredictedMapSet& pred, const IonexFile& truth);

void attach_calibration(std::vector<ErrorRecord>& records, const CalibrationModel& model);
std::vector<CalibrationPair> calibration_pairs(std::span<const ErrorRecord> records);

struct RegimeStats {
  std::size_t count = 0;
  double mean_abs_error = 0.0;
  double max_abs_error = 0.0;
  double rms_error = 0.0;
  double mean_sigma = 0.0;
  std::optional<double> mean_sigma_cal;
};

struct BandStats {
  double lat_lo = -90.0;
  double lat_hi = 90.0;
  RegimeStats day;
  RegimeStats night;
};

/// Per latitude band and regime; empty bands report count 0.
std::vector<BandStats> band_stats(std::span<const ErrorRecord> records, double band_width = kDefaultBandWidth);

struct BandRatio {
  double lat_lo = -90.0;
  double lat_hi = 90.0;
  std::size_t count = 0;
  double ratio = 0.0;  // NaN for empty bands
};

/// mean|eps| / (sqrt(2/pi) * mean sigma) per band over both regimes.
std::vector<BandRatio> coverage_ratio(std::span<const ErrorRecord> records, bool use_calibrated,
                                      double band_width = kDefaultBandWidth);

std::string records_csv(std::span<const ErrorRecord> records);
std::string band_stats_csv(std::span<const BandStats> stats);

}  // namespace vtec
