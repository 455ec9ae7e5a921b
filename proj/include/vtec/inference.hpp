#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "vtec/checkpoint.hpp"
#include "vtec/ionex.hpp"
#include "vtec/spaceweather.hpp"

namespace vtec {

inline constexpr int kDefaultEnsembleSize = 100;

struct EnsemblePrediction {
  double mean_vtec = 0.0;  // TECU
  double sigma = 0.0;      // sample standard deviation (divisor k - 1), TECU
  int k = 0;
};

/// Mean and K-1 standard deviation of ensemble members. Needs >= 2 members.
EnsemblePrediction summarize_ensemble(std::span<const double> members);

/// The k denormalized members behind predict_point, in draw order.
std::vector<double> ensemble_members(const Model& model, const FeatureVector& feature, int k, std::uint64_t seed);
/// k stochastic forward passes (fresh parameter draw each) at one point.
EnsemblePrediction predict_point(const Model& model, const FeatureVector& feature, int k, std::uint64_t seed);

/// One forward pass per model: posterior mean for deterministic networks,
/// one posterior draw for networks with variational layers.
EnsemblePrediction predict_bagged(std::span<const Model> models, const FeatureVector& feature, std::uint64_t seed);

struct PredictedMapSet {
  std::vector<UtcTime> epochs;
  GridSpec grid;
  std::vector<TecMap> mean;   // TECU
  std::vector<TecMap> sigma;  // TECU
  int k = 0;
  std::size_t clamped = 0;  // negative means reset to 0
};

/// Every node of every epoch. Node (e, i, j) uses an RNG stream derived from
/// (seed, e, i, j), so results do not depend on `threads`.
PredictedMapSet predict_grid(const Model& model, std::span<const UtcTime> epochs, const GridSpec& grid,
                             const SpaceWeatherTable& sw, int k, std::uint64_t seed, unsigned threads = 1);
PredictedMapSet predict_grid_bagged(std::span<const Model> models, std::span<const UtcTime> epochs,
                                    const GridSpec& grid, const SpaceWeatherTable& sw, std::uint64_t seed,
                                    unsigned threads = 1);

/// Epochs 00:00, interval, ... strictly before the next day.
std::vector<UtcTime> day_epochs(UtcDay day, int interval_seconds);

/// Mean maps as TEC maps, sigma maps as RMS maps, with the finest exponent
/// (not below -4) that keeps every value within 5 columns.
IonexFile export_predicted_ionex(const PredictedMapSet& p);
/// Inverse of export_predicted_ionex; requires RMS maps.
PredictedMapSet import_predicted_ionex(const IonexFile& file);

/// epoch,lat,lon,vtec,sigma
std::string predictions_csv(const PredictedMapSet& p);

}  // namespace vtec
