#pragma once

// Synthetic IGS-layout IONEX days and space-weather tables. The VTEC field
// is a smooth parametric climatology (diurnal cycle peaking mid-afternoon,
// equatorial anomaly crests around +-15 deg of a tilted dipole equator,
// solar-flux scaling, mild Kp and seasonal terms) plus a random smooth
// day-to-day perturbation and white noise, so part of the signal is not
// learnable from the six model inputs.

#include <cstdint>

#include "vtec/ionex.hpp"
#include "vtec/spaceweather.hpp"

namespace vtec {

struct SynthOptions {
  int interval_seconds = 7200;
  double noise_tecu = 0.6;
  double daily_variability = 0.08;  // relative amplitude of each perturbation harmonic
  double missing_fraction = 0.0;
  bool with_rms = true;
  std::uint64_t seed = 2009;
};

/// Noise-free model VTEC in TECU.
double climatology_vtec(UtcTime t, double lat, double lon, double f107, double kp);

/// Solar-minimum-like adjusted F10.7 (~65-72 sfu) and quiet Kp in thirds.
SpaceWeatherTable synth_spaceweather(UtcDay first, int n_days, std::uint64_t seed);

/// One day of maps on the IGS grid, epochs 00:00 .. 24h - interval, EXPONENT -1.
IonexFile synth_ionex_day(UtcDay day, const SpaceWeatherTable& sw, const SynthOptions& options);

}  // namespace vtec
