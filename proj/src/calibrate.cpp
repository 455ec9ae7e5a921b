#include "vtec/calibrate.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

#include "vtec/errors.hpp"

namespace vtec {

namespace {

struct AffineFit {
  double scale = 1.0;
  double offset = 0.0;
};

// Minimizes sum (y - scale*x - offset)^2 subject to scale, offset >= 0. The
// unconstrained optimum is used when feasible; otherwise the better of the
// two boundary solutions.
AffineFit nonnegative_affine(std::span<const double> x, std::span<const double> y) {
  const double n = double(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    sx += x[k];
    sy += y[k];
    sxx += x[k] * x[k];
    sxy += x[k] * y[k];
  }
  auto sse = [&](double a, double b) {
    double s = 0;
    for (std::size_t k = 0; k < x.size(); ++k) s += (y[k] - a * x[k] - b) * (y[k] - a * x[k] - b);
    return s;
  };
  const double det = n * sxx - sx * sx;
  if (det > 1e-12 * n * std::max(sxx, 1e-300)) {
    const double a = (n * sxy - sx * sy) / det;
    const double b = (sy - a * sx) / n;
    if (a >= 0.0 && b >= 0.0) return {a, b};
  }
  const AffineFit through_origin{sxx > 0.0 ? std::max(0.0, sxy / sxx) : 0.0, 0.0};
  const AffineFit constant{0.0, std::max(0.0, sy / n)};
  return sse(through_origin.scale, through_origin.offset) <= sse(constant.scale, constant.offset) ? through_origin
                                                                                                    : constant;
}

}  // namespace

double gaussian_mad_factor() { return std::sqrt(2.0 / std::numbers::pi); }

std::size_t band_count(double band_width) {
  if (!(band_width > 0.0) || band_width > 180.0) throw ConfigError("band width must lie in (0, 180] degrees");
  return std::size_t(std::ceil(180.0 / band_width - 1e-9));
}

std::size_t band_index(double lat, double band_width) {
  const std::size_t n = band_count(band_width);
  const double f = std::floor((lat + 90.0) / band_width + 1e-9);
  if (f < 0.0) return 0;
  return std::min(n - 1, std::size_t(f));
}

CalibrationModel::CalibrationModel(double band_width, std::vector<CalibrationBand> bands)
    : band_width_(band_width), bands_(std::move(bands)) {
  if (bands_.size() != band_count(band_width_)) throw ConfigError("calibration band count does not match band width");
  for (const auto& b : bands_)
    if (!std::isfinite(b.scale) || !std::isfinite(b.offset) || b.scale < 0.0 || b.offset < 0.0)
      throw ConfigError("calibration scale/offset must be finite and nonnegative");
}

CalibrationModel CalibrationModel::identity(double band_width) {
  std::vector<CalibrationBand> bands(band_count(band_width));
  for (std::size_t b = 0; b < bands.size(); ++b) {
    bands[b].lat_lo = -90.0 + double(b) * band_width;
    bands[b].lat_hi = std::min(90.0, bands[b].lat_lo + band_width);
  }
  return CalibrationModel(band_width, std::move(bands));
}

const CalibrationBand& CalibrationModel::band_for(double lat) const { return bands_[band_index(lat, band_width_)]; }

CalibrationModel fit_calibration(std::span<const CalibrationPair> pairs, double band_width, std::size_t min_pairs) {
  if (pairs.empty()) throw ConfigError("no calibration pairs");
  const double to_sigma = 1.0 / gaussian_mad_factor();
  CalibrationModel model = CalibrationModel::identity(band_width);
  std::vector<CalibrationBand> bands = model.bands();

  std::vector<std::vector<double>> xs(bands.size()), ys(bands.size());
  std::vector<double> all_x, all_y;
  for (const auto& p : pairs) {
    if (!std::isfinite(p.sigma_raw) || !std::isfinite(p.abs_error) || p.sigma_raw < 0.0)
      throw ConfigError("calibration pair with invalid sigma or error");
    const std::size_t b = band_index(p.lat, band_width);
    xs[b].push_back(p.sigma_raw);
    ys[b].push_back(std::abs(p.abs_error) * to_sigma);
    all_x.push_back(p.sigma_raw);
    all_y.push_back(std::abs(p.abs_error) * to_sigma);
  }
  const AffineFit global = nonnegative_affine(all_x, all_y);
  for (std::size_t b = 0; b < bands.size(); ++b) {
    const AffineFit fit = xs[b].size() >= min_pairs ? nonnegative_affine(xs[b], ys[b]) : global;
    bands[b].scale = fit.scale;
    bands[b].offset = fit.offset;
    bands[b].pairs = xs[b].size() >= min_pairs ? xs[b].size() : 0;
  }
  return CalibrationModel(band_width, std::move(bands));
}

double apply_calibration(const CalibrationModel& model, double sigma_raw, double lat) {
  const auto& b = model.band_for(lat);
  return b.scale * sigma_raw + b.offset;
}

std::string write_calibration_csv(const CalibrationModel& model) {
  std::string out = "band_lo,band_hi,scale,offset\n";
  char buf[128];
  for (const auto& b : model.bands()) {
    std::snprintf(buf, sizeof buf, "%.6g,%.6g,%.17g,%.17g\n", b.lat_lo, b.lat_hi, b.scale, b.offset);
    out += buf;
  }
  return out;
}

CalibrationModel parse_calibration_csv(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  std::vector<CalibrationBand> bands;
  bool header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (!header) {
      if (line != "band_lo,band_hi,scale,offset") throw ParseError("expected calibration CSV header", line_no);
      header = true;
      continue;
    }
    double v[4];
    std::size_t pos = 0;
    for (int c = 0; c < 4; ++c) {
      const std::size_t end = c < 3 ? line.find(',', pos) : line.size();
      if (end == std::string::npos) throw ParseError("expected 4 columns", line_no);
      const auto [ptr, ec] = std::from_chars(line.data() + pos, line.data() + end, v[c]);
      if (ec != std::errc{} || ptr != line.data() + end) throw ParseError("non-numeric calibration field", line_no);
      pos = end + 1;
    }
    bands.push_back({v[0], v[1], v[2], v[3], 0});
  }
  if (bands.empty()) throw ParseError("calibration CSV has no bands", line_no);
  const double width = bands.front().lat_hi - bands.front().lat_lo;
  try {
    CalibrationModel model(width, bands);
    for (std::size_t b = 0; b < bands.size(); ++b)
      if (std::abs(bands[b].lat_lo - (-90.0 + double(b) * width)) > 1e-6)
        throw ConfigError("calibration bands are not uniform from -90");
    return model;
  } catch (const ConfigError& e) {
    throw ParseError(e.what(), 0);
  }
}

CalibrationModel read_calibration_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open calibration file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_calibration_csv(buf.str());
}

}  // namespace vtec
