#include "vtec/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "vtec/errors.hpp"
#include "vtec/rng.hpp"

namespace vtec {

namespace {

void extend(Provenance& p, UtcDay day) {
  if (!p.first_day || day < *p.first_day) p.first_day = day;
  if (!p.last_day || day > *p.last_day) p.last_day = day;
}

Provenance provenance_of(const SampleSet& parent, const std::vector<Sample>& samples) {
  Provenance p;
  p.sources = parent.provenance.sources;
  for (const auto& s : samples) extend(p, utc_day(s.epoch));
  return p;
}

}  // namespace

Encoded encode(const FeatureVector& f) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  constexpr double deg = std::numbers::pi / 180.0;
  const double doy = two_pi * f.doy / 365.25;
  const double sod = two_pi * f.sod / 86400.0;
  return {f.f107,          f.kp,
          std::sin(doy),   std::cos(doy),
          std::sin(sod),   std::cos(sod),
          std::sin(f.lon * deg), std::cos(f.lon * deg),
          std::sin(f.lat * deg), f.lat / 90.0};
}

std::string Provenance::describe() const {
  std::string out = "sources=";
  for (std::size_t i = 0; i < sources.size(); ++i) out += (i ? ";" : "") + sources[i];
  out += " days=";
  out += first_day ? format_date(*first_day) : "-";
  out += "..";
  out += last_day ? format_date(*last_day) : "-";
  return out;
}

SampleSet build_samples(std::span<const IonexFile> files, const SpaceWeatherTable& sw, bool use_rms_weights,
                        double rms_floor) {
  if (use_rms_weights && !(rms_floor > 0.0)) throw ConfigError("rms_floor must be positive");
  SampleSet set;
  for (const auto& file : files) {
    if (use_rms_weights && file.rms_maps.size() != file.tec_maps.size())
      throw ConfigError("RMS weighting requested but " + (file.source.empty() ? std::string("an IONEX file") : file.source) +
                        " has no RMS maps");
    if (!file.source.empty()) set.provenance.sources.push_back(file.source);
    for (std::size_t m = 0; m < file.tec_maps.size(); ++m) {
      const TecMap& map = file.tec_maps[m];
      const UtcDay day = utc_day(map.epoch());
      if (!sw.covers(day)) throw LookupError("space-weather table does not cover map epoch " + format_iso(map.epoch()));
      extend(set.provenance, day);
      const GridSpec& g = map.grid();
      for (int i = 0; i < map.n_lat(); ++i) {
        for (int j = 0; j < map.n_lon(); ++j) {
          if (!map.present(i, j)) continue;
          Sample s;
          s.epoch = map.epoch();
          s.features = build_feature(map.epoch(), g.lat_at(i), g.lon_at(j), sw);
          s.encoded = encode(s.features);
          s.target = map.value(i, j);
          if (use_rms_weights) {
            const TecMap& rms = file.rms_maps[m];
            if (!rms.present(i, j)) continue;
            const double r = std::max(rms.value(i, j), rms_floor);
            s.weight = 1.0 / (r * r);
          }
          set.samples.push_back(s);
        }
      }
    }
  }
  return set;
}

HoldoutSplit split_holdout(const SampleSet& set, const std::set<UtcDay>& holdout_days) {
  HoldoutSplit out;
  for (const auto& s : set.samples) {
    (holdout_days.count(utc_day(s.epoch)) ? out.validation : out.train).samples.push_back(s);
  }
  if (out.train.empty()) throw ConfigError("holdout leaves no training samples");
  out.train.provenance = provenance_of(set, out.train.samples);
  out.validation.provenance = provenance_of(set, out.validation.samples);
  return out;
}

Encoded Normalizer::normalize(const Encoded& x) const {
  Encoded z;
  for (std::size_t c = 0; c < kEncodedDim; ++c) z[c] = (x[c] - mean[c]) / stddev[c];
  return z;
}

Encoded Normalizer::denormalize(const Encoded& z) const {
  Encoded x;
  for (std::size_t c = 0; c < kEncodedDim; ++c) x[c] = z[c] * stddev[c] + mean[c];
  return x;
}

Sample Normalizer::apply(const Sample& s) const {
  Sample out = s;
  out.encoded = normalize(s.encoded);
  out.target = normalize_target(s.target);
  return out;
}

SampleSet Normalizer::apply(const SampleSet& s) const {
  SampleSet copy = s;
  return apply(std::move(copy));
}

SampleSet Normalizer::apply(SampleSet&& s) const {
  for (auto& sample : s.samples) sample = apply(sample);
  return std::move(s);
}

Normalizer fit_normalizer(const SampleSet& train) {
  if (train.empty()) throw ConfigError("cannot fit a normalizer on an empty sample set");
  const double n = double(train.size());
  Normalizer norm;
  std::array<double, kEncodedDim + 1> mean{};
  for (const auto& s : train.samples) {
    for (std::size_t c = 0; c < kEncodedDim; ++c) mean[c] += s.encoded[c];
    mean[kEncodedDim] += s.target;
  }
  for (auto& m : mean) m /= n;
  std::array<double, kEncodedDim + 1> var{};
  for (const auto& s : train.samples) {
    for (std::size_t c = 0; c < kEncodedDim; ++c) var[c] += (s.encoded[c] - mean[c]) * (s.encoded[c] - mean[c]);
    var[kEncodedDim] += (s.target - mean[kEncodedDim]) * (s.target - mean[kEncodedDim]);
  }
  auto stddev_of = [&](std::size_t c) {
    const double sd = std::sqrt(var[c] / n);
    // Constant channels (and anything numerically constant) pass through unscaled.
    return sd > 1e-12 * std::max(1.0, std::abs(mean[c])) ? sd : 1.0;
  };
  for (std::size_t c = 0; c < kEncodedDim; ++c) {
    norm.mean[c] = mean[c];
    norm.stddev[c] = stddev_of(c);
  }
  norm.target_mean = mean[kEncodedDim];
  norm.target_stddev = stddev_of(kEncodedDim);
  return norm;
}

BatchPlan::BatchPlan(std::vector<std::size_t> order, std::size_t batch_size)
    : order_(std::move(order)), batch_size_(batch_size) {
  if (batch_size_ == 0) throw ConfigError("batch_size must be >= 1");
}

std::size_t BatchPlan::count() const { return (order_.size() + batch_size_ - 1) / batch_size_; }

std::span<const std::size_t> BatchPlan::batch(std::size_t b) const {
  const std::size_t first = b * batch_size_;
  return std::span<const std::size_t>(order_).subspan(first, std::min(batch_size_, order_.size() - first));
}

BatchPlan batches(std::size_t n, std::size_t batch_size, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng = make_rng(seed, {0xba7c4});
  std::shuffle(order.begin(), order.end(), rng);
  return BatchPlan(std::move(order), batch_size);
}

BatchPlan batches(const SampleSet& set, std::size_t batch_size, std::uint64_t seed) {
  return batches(set.size(), batch_size, seed);
}

std::vector<std::size_t> bootstrap_indices(std::size_t n, std::uint64_t seed) {
  if (n == 0) throw ConfigError("cannot resample an empty sample set");
  Rng rng = make_rng(seed, {0xb0075});
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  std::vector<std::size_t> idx(n);
  for (auto& i : idx) i = pick(rng);
  return idx;
}

SampleSet bootstrap_resample(const SampleSet& set, std::uint64_t seed) {
  SampleSet out;
  out.provenance = set.provenance;
  out.samples.reserve(set.size());
  for (std::size_t i : bootstrap_indices(set.size(), seed)) out.samples.push_back(set.samples[i]);
  return out;
}

}  // namespace vtec
