#include "vtec/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "vtec/rng.hpp"

namespace vtec {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

struct Harmonic {
  double amplitude;
  int lon_order;
  int lat_order;
  double phase;
};

}  // namespace

double climatology_vtec(UtcTime t, double lat, double lon, double f107, double kp) {
  const double hours = second_of_day(t) / 3600.0;
  double lt = std::fmod(hours + lon / 15.0, 24.0);
  if (lt < 0.0) lt += 24.0;
  const double c = 0.5 * (1.0 + std::cos(2.0 * std::numbers::pi * (lt - 14.0) / 24.0));
  const double diurnal = 0.2 + 0.8 * c * c;

  const double mlat = lat + 10.0 * std::cos((lon + 70.0) * kDeg);
  const double crests = std::exp(-std::pow((mlat - 15.0) / 12.0, 2)) + std::exp(-std::pow((mlat + 15.0) / 12.0, 2));
  const double coslat = std::cos(lat * kDeg);
  const double profile = 0.55 * crests * std::min(1.0, 0.4 + diurnal) + 0.45 * coslat * coslat;

  const double solar = (f107 - 40.0) / 30.0;
  const double doy = day_of_year(t);
  const double seasonal = (1.0 - 0.15 * std::sin(lat * kDeg)) * (1.0 + 0.08 * std::cos(2.0 * std::numbers::pi * (doy - 3.0) / 365.25));
  const double storm = 1.0 + 0.04 * (kp - 1.0) * coslat;
  return std::max(0.0, solar * (3.0 + 22.0 * diurnal * profile) * seasonal * storm);
}

SpaceWeatherTable synth_spaceweather(UtcDay first, int n_days, std::uint64_t seed) {
  SpaceWeatherTable table;
  Rng rng = make_rng(seed, {0x5e});
  std::normal_distribution<double> flux_noise(0.0, 0.6);
  std::discrete_distribution<int> kp_thirds({10, 14, 16, 15, 12, 9, 6, 4, 2, 1});
  for (int d = 0; d < n_days; ++d) {
    DailyIndices idx;
    idx.f107_adjusted = std::round((68.5 + 1.5 * std::sin(2.0 * std::numbers::pi * d / 27.0) + flux_noise(rng)) * 10.0) / 10.0;
    for (auto& kp : idx.kp) kp = std::round(kp_thirds(rng) / 3.0 * 10.0) / 10.0;
    table.insert(first + std::chrono::days{d}, idx);
  }
  return table;
}

IonexFile synth_ionex_day(UtcDay day, const SpaceWeatherTable& sw, const SynthOptions& options) {
  const std::uint64_t day_index = std::uint64_t(day.time_since_epoch().count());
  Rng rng = make_rng(options.seed, {day_index});
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);

  std::vector<Harmonic> harmonics;
  for (int h = 0; h < 4; ++h)
    harmonics.push_back({options.daily_variability * normal(rng), 1 + h % 3, 1 + h / 2, 2.0 * std::numbers::pi * uniform(rng)});

  IonexFile file;
  IonexHeader& hd = file.header;
  hd.program = "vtecbnn synth";
  hd.run_by = "vtecbnn";
  hd.date = format_date(day);
  hd.descriptions.push_back("Synthetic global ionosphere maps (parametric climatology)");
  hd.interval = options.interval_seconds;
  hd.mapping_function = "COSZ";
  hd.observables = "SYNTHETIC";
  hd.grid = igs_grid();
  hd.exponent = -1;
  hd.comments.push_back("TEC/RMS values in 0.1 TECU; 9999, if no value available");
  hd.comments.push_back("SYNTHETIC DATA - not an IGS product");

  const GridSpec& g = hd.grid;
  for (int s = 0; s < 86400; s += options.interval_seconds) {
    const UtcTime t = UtcTime{day} + std::chrono::seconds{s};
    const double f107 = lookup_f107(sw, day);
    const double kp = lookup_kp(sw, t);
    TecMap tec(t, g);
    TecMap rms(t, g);
    for (int i = 0; i < tec.n_lat(); ++i) {
      for (int j = 0; j < tec.n_lon(); ++j) {
        const double lat = g.lat_at(i);
        const double lon = g.lon_at(j);
        const double noise = normal(rng);
        const bool missing = options.missing_fraction > 0.0 && uniform(rng) < options.missing_fraction;
        if (missing) continue;
        double pert = 0.0;
        for (const auto& h : harmonics) pert += h.amplitude * std::sin(h.lon_order * lon * kDeg + h.lat_order * lat * kDeg + h.phase);
        const double clim = climatology_vtec(t, lat, lon, f107, kp);
        const double v = std::max(0.0, clim * (1.0 + pert) + options.noise_tecu * noise);
        tec.set(i, j, std::round(v * 10.0) / 10.0);
        const double r = 0.5 + 0.08 * clim + 1.5 * std::exp(-std::pow(lat / 25.0, 2));
        rms.set(i, j, std::round(r * 10.0) / 10.0);
      }
    }
    file.tec_maps.push_back(std::move(tec));
    if (options.with_rms) file.rms_maps.push_back(std::move(rms));
  }
  hd.epoch_first = file.tec_maps.front().epoch();
  hd.epoch_last = file.tec_maps.back().epoch();
  hd.map_count = int(file.tec_maps.size());
  return file;
}

}  // namespace vtec
