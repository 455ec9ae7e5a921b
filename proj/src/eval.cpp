#include "vtec/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>

#include "vtec/errors.hpp"

namespace vtec {

namespace {

struct Accumulator {
  std::size_t count = 0;
  double sum_abs = 0.0;
  double max_abs = 0.0;
  double sum_sq = 0.0;
  double sum_sigma = 0.0;
  double sum_sigma_cal = 0.0;
  std::size_t count_cal = 0;

  void add(const ErrorRecord& r) {
    ++count;
    sum_abs += std::abs(r.eps);
    max_abs = std::max(max_abs, std::abs(r.eps));
    sum_sq += r.eps * r.eps;
    sum_sigma += r.sigma_raw;
    if (r.sigma_cal) {
      sum_sigma_cal += *r.sigma_cal;
      ++count_cal;
    }
  }

  RegimeStats stats() const {
    RegimeStats s;
    s.count = count;
    if (count == 0) return s;
    const double n = double(count);
    s.mean_abs_error = sum_abs / n;
    s.max_abs_error = max_abs;
    s.rms_error = std::sqrt(sum_sq / n);
    s.mean_sigma = sum_sigma / n;
    if (count_cal == count) s.mean_sigma_cal = sum_sigma_cal / n;
    return s;
  }
};

std::string fmt_opt(const std::optional<double>& v) {
  if (!v) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", *v);
  return buf;
}

}  // namespace

Regime day_night(UtcTime epoch, double lon) {
  double lt = std::fmod(second_of_day(epoch) / 3600.0 + lon / 15.0, 24.0);
  if (lt < 0.0) lt += 24.0;
  return lt >= 6.0 && lt < 18.0 ? Regime::Day : Regime::Night;
}

const char* regime_name(Regime r) { return r == Regime::Day ? "day" : "night"; }

std::vector<ErrorRecord> error_records(const PredictedMapSet& pred, const IonexFile& truth) {
  if (!(pred.grid == truth.header.grid)) throw ConfigError("predicted and truth grids differ");
  std::map<UtcTime, const TecMap*> by_epoch;
  for (const auto& m : truth.tec_maps) by_epoch[m.epoch()] = &m;
  std::vector<ErrorRecord> out;
  for (std::size_t e = 0; e < pred.epochs.size(); ++e) {
    const auto it = by_epoch.find(pred.epochs[e]);
    if (it == by_epoch.end()) throw ConfigError("truth has no map at predicted epoch " + format_iso(pred.epochs[e]));
    const TecMap& t = *it->second;
    for (int i = 0; i < t.n_lat(); ++i) {
      for (int j = 0; j < t.n_lon(); ++j) {
        if (!t.present(i, j) || !pred.mean[e].present(i, j)) continue;
        ErrorRecord r;
        r.epoch = pred.epochs[e];
        r.lat = pred.grid.lat_at(i);
        r.lon = pred.grid.lon_at(j);
        r.eps = pred.mean[e].value(i, j) - t.value(i, j);
        r.sigma_raw = pred.sigma[e].present(i, j) ? pred.sigma[e].value(i, j) : 0.0;
        r.regime = day_night(r.epoch, r.lon);
        out.push_back(r);
      }
    }
  }
  return out;
}

void attach_calibration(std::vector<ErrorRecord>& records, const CalibrationModel& model) {
  for (auto& r : records) r.sigma_cal = apply_calibration(model, r.sigma_raw, r.lat);
}

std::vector<CalibrationPair> calibration_pairs(std::span<const ErrorRecord> records) {
  std::vector<CalibrationPair> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back({r.sigma_raw, std::abs(r.eps), r.lat});
  return out;
}

std::vector<BandStats> band_stats(std::span<const ErrorRecord> records, double band_width) {
  const std::size_t n = band_count(band_width);
  std::vector<Accumulator> day(n), night(n);
  for (const auto& r : records) (r.regime == Regime::Day ? day : night)[band_index(r.lat, band_width)].add(r);
  std::vector<BandStats> out(n);
  for (std::size_t b = 0; b < n; ++b) {
    out[b].lat_lo = -90.0 + double(b) * band_width;
    out[b].lat_hi = std::min(90.0, out[b].lat_lo + band_width);
    out[b].day = day[b].stats();
    out[b].night = night[b].stats();
  }
  return out;
}

std::vector<BandRatio> coverage_ratio(std::span<const ErrorRecord> records, bool use_calibrated, double band_width) {
  const std::size_t n = band_count(band_width);
  std::vector<double> sum_abs(n, 0.0), sum_sigma(n, 0.0);
  std::vector<std::size_t> count(n, 0);
  for (const auto& r : records) {
    if (use_calibrated && !r.sigma_cal) throw ConfigError("record lacks a calibrated sigma");
    const std::size_t b = band_index(r.lat, band_width);
    sum_abs[b] += std::abs(r.eps);
    sum_sigma[b] += use_calibrated ? *r.sigma_cal : r.sigma_raw;
    ++count[b];
  }
  std::vector<BandRatio> out(n);
  for (std::size_t b = 0; b < n; ++b) {
    out[b].lat_lo = -90.0 + double(b) * band_width;
    out[b].lat_hi = std::min(90.0, out[b].lat_lo + band_width);
    out[b].count = count[b];
    out[b].ratio = count[b] ? sum_abs[b] / (gaussian_mad_factor() * sum_sigma[b])
                            : std::numeric_limits<double>::quiet_NaN();
  }
  return out;
}

std::string records_csv(std::span<const ErrorRecord> records) {
  std::string out = "epoch,lat,lon,regime,eps,sigma_raw,sigma_cal\n";
  char buf[160];
  for (const auto& r : records) {
    std::snprintf(buf, sizeof buf, ",%.2f,%.2f,%s,%.4f,%.4f,", r.lat, r.lon, regime_name(r.regime), r.eps, r.sigma_raw);
    out += format_iso(r.epoch);
    out += buf;
    out += fmt_opt(r.sigma_cal);
    out += '\n';
  }
  return out;
}

std::string band_stats_csv(std::span<const BandStats> stats) {
  std::string out =
      "band_lo,band_hi,regime,count,mean_abs_error,max_abs_error,rms_error,mean_sigma_raw,mean_sigma_cal\n";
  char buf[200];
  for (const auto& b : stats) {
    for (const Regime reg : {Regime::Day, Regime::Night}) {
      const RegimeStats& s = reg == Regime::Day ? b.day : b.night;
      std::snprintf(buf, sizeof buf, "%.6g,%.6g,%s,%zu,%.4f,%.4f,%.4f,%.4f,", b.lat_lo, b.lat_hi, regime_name(reg),
                    s.count, s.mean_abs_error, s.max_abs_error, s.rms_error, s.mean_sigma);
      out += buf;
      out += fmt_opt(s.mean_sigma_cal);
      out += '\n';
    }
  }
  return out;
}

}  // namespace vtec
