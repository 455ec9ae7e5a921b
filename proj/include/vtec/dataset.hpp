#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vtec/ionex.hpp"
#include "vtec/spaceweather.hpp"
#include "vtec/time.hpp"

namespace vtec {

inline constexpr std::size_t kEncodedDim = 10;
/// Identifies the channel layout produced by encode(); stored in checkpoints.
inline constexpr std::string_view kEncodingId = "cyclic10-v1";

using Encoded = std::array<double, kEncodedDim>;

/// [f107, kp, sin/cos(doy), sin/cos(sod), sin/cos(lon), sin(lat), lat/90]
Encoded encode(const FeatureVector& f);

struct Sample {
  FeatureVector features;
  Encoded encoded{};
  double target = 0.0;  // VTEC in TECU (or z-score after Normalizer::apply)
  double weight = 1.0;
  UtcTime epoch{};
};

struct Provenance {
  std::vector<std::string> sources;
  std::optional<UtcDay> first_day;
  std::optional<UtcDay> last_day;

  std::string describe() const;
};

struct SampleSet {
  std::vector<Sample> samples;
  Provenance provenance;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
};

inline constexpr double kDefaultRmsFloor = 0.5;  // TECU

/// One sample per present cell of every TEC map. With `use_rms_weights` the
/// weight is 1 / max(rms, rms_floor)^2 taken from the matching RMS cell.
SampleSet build_samples(std::span<const IonexFile> files, const SpaceWeatherTable& sw, bool use_rms_weights,
                        double rms_floor = kDefaultRmsFloor);

struct HoldoutSplit {
  SampleSet train;
  SampleSet validation;
};

/// Partition by the UTC date of each sample's epoch. Throws ConfigError when
/// the training side would be empty.
HoldoutSplit split_holdout(const SampleSet& set, const std::set<UtcDay>& holdout_days);

/// Z-score statistics per encoded channel and for the target. Channels with
/// zero variance keep std 1.
struct Normalizer {
  Encoded mean{};
  Encoded stddev{};
  double target_mean = 0.0;
  double target_stddev = 1.0;

  Encoded normalize(const Encoded& x) const;
  Encoded denormalize(const Encoded& z) const;
  double normalize_target(double y) const { return (y - target_mean) / target_stddev; }
  double denormalize_target(double z) const { return z * target_stddev + target_mean; }

  Sample apply(const Sample& s) const;
  SampleSet apply(const SampleSet& s) const;
  SampleSet apply(SampleSet&& s) const;
};

Normalizer fit_normalizer(const SampleSet& train);

/// A seeded permutation cut into consecutive batches; only the last batch may be short.
class BatchPlan {
 public:
  BatchPlan(std::vector<std::size_t> order, std::size_t batch_size);

  std::size_t count() const;
  std::size_t batch_size() const { return batch_size_; }
  std::span<const std::size_t> batch(std::size_t b) const;
  const std::vector<std::size_t>& order() const { return order_; }

 private:
  std::vector<std::size_t> order_;
  std::size_t batch_size_;
};

BatchPlan batches(const SampleSet& set, std::size_t batch_size, std::uint64_t seed);
BatchPlan batches(std::size_t n, std::size_t batch_size, std::uint64_t seed);

/// N draws with replacement.
SampleSet bootstrap_resample(const SampleSet& set, std::uint64_t seed);
std::vector<std::size_t> bootstrap_indices(std::size_t n, std::uint64_t seed);

}  // namespace vtec
