#include "vtec/inference.hpp"

#include <cmath>
#include <cstdio>
#include <thread>

#include "vtec/errors.hpp"

namespace vtec {

namespace {

constexpr int kMinExportExponent = -4;

Encoded model_input(const Model& model, const FeatureVector& f) { return model.normalizer.normalize(encode(f)); }

double member(PosteriorSampler& sampler, const Model& model, const Encoded& x, Rng* rng) {
  const double z = rng ? sampler.sample(x, *rng) : sampler.mean(x);
  const double y = model.normalizer.denormalize_target(z);
  if (!std::isfinite(y)) throw NumericError("non-finite ensemble member");
  return y;
}

void check_bag(std::span<const Model> models) {
  if (models.size() < 2) throw ConfigError("bagged prediction needs at least 2 models");
  for (const auto& m : models)
    if (!(m.network.spec() == models.front().network.spec()))
      throw ConfigError("bagged models disagree on architecture/input dimension: " + m.network.spec().architecture() +
                        " vs " + models.front().network.spec().architecture());
}

EnsemblePrediction bagged_with(std::span<const Model> models, std::vector<PosteriorSampler>& samplers,
                               const FeatureVector& f, std::uint64_t seed) {
  std::vector<double> members;
  members.reserve(models.size());
  for (std::size_t m = 0; m < models.size(); ++m) {
    const Encoded x = model_input(models[m], f);
    if (models[m].network.has_variational()) {
      Rng rng = make_rng(seed, {m});
      members.push_back(member(samplers[m], models[m], x, &rng));
    } else {
      members.push_back(member(samplers[m], models[m], x, nullptr));
    }
  }
  return summarize_ensemble(members);
}

// Runs `node(worker, flat_index)` over [0, n) split into contiguous chunks.
template <typename MakeWorker, typename Node>
void parallel_nodes(std::size_t n, unsigned threads, MakeWorker make_worker, Node node) {
  threads = std::max(1u, threads);
  if (threads == 1 || n < 2) {
    auto worker = make_worker();
    for (std::size_t i = 0; i < n; ++i) node(worker, i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(threads);
  const std::size_t chunk = (n + threads - 1) / threads;
  for (unsigned t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      try {
        auto worker = make_worker();
        for (std::size_t i = t * chunk; i < std::min(n, (t + 1) * chunk); ++i) node(worker, i);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

PredictedMapSet assemble(std::span<const UtcTime> epochs, const GridSpec& grid, int k, const std::vector<double>& mean,
                         const std::vector<double>& sigma) {
  PredictedMapSet out;
  out.epochs.assign(epochs.begin(), epochs.end());
  out.grid = grid;
  out.k = k;
  const int n_lat = grid.n_lat();
  const int n_lon = grid.n_lon();
  std::size_t idx = 0;
  for (const UtcTime t : epochs) {
    TecMap m(t, grid);
    TecMap s(t, grid);
    for (int i = 0; i < n_lat; ++i) {
      for (int j = 0; j < n_lon; ++j, ++idx) {
        double v = mean[idx];
        if (v < 0.0) {
          v = 0.0;
          ++out.clamped;
        }
        m.set(i, j, v);
        s.set(i, j, sigma[idx]);
      }
    }
    out.mean.push_back(std::move(m));
    out.sigma.push_back(std::move(s));
  }
  return out;
}

void check_grid_inputs(std::span<const UtcTime> epochs, const GridSpec& grid, const SpaceWeatherTable& sw) {
  if (epochs.empty()) throw ConfigError("no epochs to predict");
  grid.validate();
  for (const UtcTime t : epochs)
    if (!sw.covers(utc_day(t))) throw LookupError("space-weather table does not cover " + format_iso(t));
}

}  // namespace

EnsemblePrediction summarize_ensemble(std::span<const double> members) {
  if (members.size() < 2) throw ConfigError("ensemble needs k >= 2 for a standard deviation");
  // Shifted by the first member so identical members give exactly zero spread.
  const double shift = members.front();
  double d = 0.0;
  for (double v : members) d += v - shift;
  d /= double(members.size());
  const double mean = shift + d;
  double ss = 0.0;
  for (double v : members) ss += (v - shift - d) * (v - shift - d);
  return {mean, std::sqrt(ss / double(members.size() - 1)), int(members.size())};
}

std::vector<double> ensemble_members(const Model& model, const FeatureVector& feature, int k, std::uint64_t seed) {
  if (k < 2) throw ConfigError("ensemble size k must be >= 2");
  PosteriorSampler sampler(model.network);
  const Encoded x = model_input(model, feature);
  Rng rng = make_rng(seed);
  std::vector<double> out;
  out.reserve(std::size_t(k));
  for (int i = 0; i < k; ++i) out.push_back(member(sampler, model, x, &rng));
  return out;
}

EnsemblePrediction predict_point(const Model& model, const FeatureVector& feature, int k, std::uint64_t seed) {
  return summarize_ensemble(ensemble_members(model, feature, k, seed));
}

EnsemblePrediction predict_bagged(std::span<const Model> models, const FeatureVector& feature, std::uint64_t seed) {
  check_bag(models);
  std::vector<PosteriorSampler> samplers;
  for (const auto& m : models) samplers.emplace_back(m.network);
  return bagged_with(models, samplers, feature, seed);
}

PredictedMapSet predict_grid(const Model& model, std::span<const UtcTime> epochs, const GridSpec& grid,
                             const SpaceWeatherTable& sw, int k, std::uint64_t seed, unsigned threads) {
  if (k < 2) throw ConfigError("ensemble size k must be >= 2");
  check_grid_inputs(epochs, grid, sw);
  const std::size_t n_lat = std::size_t(grid.n_lat());
  const std::size_t n_lon = std::size_t(grid.n_lon());
  const std::size_t per_epoch = n_lat * n_lon;
  const std::size_t n = epochs.size() * per_epoch;
  std::vector<double> mean(n), sigma(n);

  struct Worker {
    PosteriorSampler sampler;
    std::vector<double> members;
  };
  parallel_nodes(
      n, threads, [&] { return Worker{PosteriorSampler(model.network), std::vector<double>(std::size_t(k))}; },
      [&](Worker& w, std::size_t idx) {
        const std::size_t e = idx / per_epoch;
        const std::size_t i = idx % per_epoch / n_lon;
        const std::size_t j = idx % n_lon;
        const FeatureVector f = build_feature(epochs[e], grid.lat_at(int(i)), grid.lon_at(int(j)), sw);
        const Encoded x = model_input(model, f);
        Rng rng = make_rng(seed, {e, i, j});
        for (auto& v : w.members) v = member(w.sampler, model, x, &rng);
        const EnsemblePrediction p = summarize_ensemble(w.members);
        mean[idx] = p.mean_vtec;
        sigma[idx] = p.sigma;
      });
  return assemble(epochs, grid, k, mean, sigma);
}

PredictedMapSet predict_grid_bagged(std::span<const Model> models, std::span<const UtcTime> epochs,
                                    const GridSpec& grid, const SpaceWeatherTable& sw, std::uint64_t seed,
                                    unsigned threads) {
  check_bag(models);
  check_grid_inputs(epochs, grid, sw);
  const std::size_t n_lat = std::size_t(grid.n_lat());
  const std::size_t n_lon = std::size_t(grid.n_lon());
  const std::size_t per_epoch = n_lat * n_lon;
  const std::size_t n = epochs.size() * per_epoch;
  std::vector<double> mean(n), sigma(n);
  parallel_nodes(
      n, threads,
      [&] {
        std::vector<PosteriorSampler> samplers;
        for (const auto& m : models) samplers.emplace_back(m.network);
        return samplers;
      },
      [&](std::vector<PosteriorSampler>& samplers, std::size_t idx) {
        const std::size_t e = idx / per_epoch;
        const std::size_t i = idx % per_epoch / n_lon;
        const std::size_t j = idx % n_lon;
        const FeatureVector f = build_feature(epochs[e], grid.lat_at(int(i)), grid.lon_at(int(j)), sw);
        const EnsemblePrediction p = bagged_with(models, samplers, f, derive_seed(seed, {e, i, j}));
        mean[idx] = p.mean_vtec;
        sigma[idx] = p.sigma;
      });
  return assemble(epochs, grid, int(models.size()), mean, sigma);
}

std::vector<UtcTime> day_epochs(UtcDay day, int interval_seconds) {
  if (interval_seconds < 1 || interval_seconds > 86400) throw ConfigError("interval must be in [1, 86400] seconds");
  std::vector<UtcTime> out;
  for (int s = 0; s < 86400; s += interval_seconds) out.push_back(UtcTime{day} + std::chrono::seconds{s});
  return out;
}

IonexFile export_predicted_ionex(const PredictedMapSet& p) {
  if (p.epochs.empty()) throw ConfigError("cannot export an empty prediction set");
  double max_value = 0.0;
  for (const auto* maps : {&p.mean, &p.sigma})
    for (const auto& m : *maps)
      for (int i = 0; i < m.n_lat(); ++i)
        for (int j = 0; j < m.n_lon(); ++j)
          if (m.present(i, j)) max_value = std::max(max_value, std::abs(m.value(i, j)));
  int exponent = kMinExportExponent;
  while (scale_value(max_value, exponent) > 9998) ++exponent;

  IonexFile file;
  IonexHeader& h = file.header;
  h.program = "vtecbnn";
  h.grid = p.grid;
  h.exponent = exponent;
  h.interval = p.epochs.size() > 1 ? int((p.epochs[1] - p.epochs[0]).count()) : 0;
  h.descriptions.push_back("Ensemble VTEC prediction");
  h.comments.push_back("TEC maps: ensemble mean; RMS maps: ensemble std dev");
  h.comments.push_back("ensemble size k = " + std::to_string(p.k));
  file.tec_maps = p.mean;
  file.rms_maps = p.sigma;
  file.validate();
  return file;
}

PredictedMapSet import_predicted_ionex(const IonexFile& file) {
  if (file.tec_maps.empty()) throw ConfigError("predicted IONEX has no TEC maps");
  if (file.rms_maps.size() != file.tec_maps.size()) throw ConfigError("predicted IONEX lacks sigma (RMS) maps");
  PredictedMapSet p;
  p.grid = file.header.grid;
  p.mean = file.tec_maps;
  p.sigma = file.rms_maps;
  for (const auto& m : file.tec_maps) p.epochs.push_back(m.epoch());
  for (const auto& c : file.header.comments)
    if (c.rfind("ensemble size k = ", 0) == 0) p.k = std::atoi(c.c_str() + 18);
  return p;
}

std::string predictions_csv(const PredictedMapSet& p) {
  std::string out = "epoch,lat,lon,vtec,sigma\n";
  char buf[128];
  for (std::size_t e = 0; e < p.epochs.size(); ++e) {
    const std::string epoch = format_iso(p.epochs[e]);
    for (int i = 0; i < p.grid.n_lat(); ++i) {
      for (int j = 0; j < p.grid.n_lon(); ++j) {
        if (!p.mean[e].present(i, j)) continue;
        std::snprintf(buf, sizeof buf, ",%.2f,%.2f,%.4f,%.4f\n", p.grid.lat_at(i), p.grid.lon_at(j),
                      p.mean[e].value(i, j), p.sigma[e].value(i, j));
        out += epoch;
        out += buf;
      }
    }
  }
  return out;
}

}  // namespace vtec
