#include "vtec/cli.hpp"

#include <fnmatch.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <ostream>
#include <set>
#include <sstream>

#include "vtec/checkpoint.hpp"
#include "vtec/dataset.hpp"
#include "vtec/errors.hpp"
#include "vtec/eval.hpp"
#include "vtec/inference.hpp"
#include "vtec/ionex.hpp"
#include "vtec/spaceweather.hpp"
#include "vtec/synth.hpp"

namespace vtec {

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const NumericError*>(&e)) return kExitNumeric;
  if (dynamic_cast<const ConfigError*>(&e)) return kExitConfig;
  if (dynamic_cast<const IoError*>(&e) || dynamic_cast<const ParseError*>(&e) ||
      dynamic_cast<const LookupError*>(&e))
    return kExitIo;
  return kExitUnexpected;
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value, const char* expected) {
  throw ConfigError("config key '" + std::string(key) + "': expected " + expected + ", got '" + std::string(value) +
                    "'");
}

template <class T>
T parse_integer(std::string_view key, std::string_view value) {
  T out{};
  auto [p, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc{} || p != value.data() + value.size()) bad_value(key, value, "an integer");
  return out;
}

double parse_real(std::string_view key, std::string_view value) {
  std::string s(value);
  char* end = nullptr;
  double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size() || !std::isfinite(v)) bad_value(key, value, "a number");
  return v;
}

bool parse_bool(std::string_view key, std::string_view value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  bad_value(key, value, "true or false");
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

struct PreparedData {
  SampleSet train;  // normalized
  SampleSet validation;  // normalized, may be empty
  Normalizer normalizer;
  std::string provenance;
};

PreparedData prepare(const RunConfig& cfg, std::ostream& log) {
  if (!cfg.seed) throw ConfigError("a seed is required (config key 'seed' or --seed)");
  if (cfg.spaceweather.empty()) throw ConfigError("no space-weather file configured");
  cfg.train.validate();
  NetworkSpec spec = parse_architecture(cfg.architecture, int(kEncodedDim));
  spec.validate();

  std::vector<fs::path> inputs = expand_ionex_inputs(cfg.ionex);
  SpaceWeatherTable sw = read_spaceweather_file(cfg.spaceweather);
  std::vector<IonexFile> files;
  files.reserve(inputs.size());
  for (const auto& p : inputs) {
    files.push_back(read_ionex_file(p));
    for (const auto& w : files.back().warnings) log << "warning: " << p.filename().string() << ": " << w << "\n";
  }

  PreparedData d;
  HoldoutSplit split;
  {
    SampleSet all = build_samples(files, sw, cfg.use_rms_weights, cfg.rms_floor);
    files.clear();
    files.shrink_to_fit();
    std::set<UtcDay> holdout(cfg.holdout.begin(), cfg.holdout.end());
    split = split_holdout(all, holdout);
  }
  log << "samples: train " << split.train.size() << ", validation " << split.validation.size() << "\n";
  d.normalizer = fit_normalizer(split.train);

  std::ostringstream prov;
  prov << split.train.provenance.describe() << "; holdout=";
  for (std::size_t i = 0; i < cfg.holdout.size(); ++i) prov << (i ? "," : "") << format_date(cfg.holdout[i]);
  prov << "; architecture=" << cfg.architecture << "; seed=" << *cfg.seed;
  d.provenance = prov.str();

  d.train = d.normalizer.apply(std::move(split.train));
  d.validation = d.normalizer.apply(std::move(split.validation));
  return d;
}

TrainHistory fit_one(Network& net, const SampleSet& train_set, const SampleSet& validation, TrainConfig tc,
                     std::ostream& log, const std::string& tag) {
  TrainHistory h = train(net, train_set, tc, validation.empty() ? nullptr : &validation);
  for (std::size_t e = 0; e < h.train_loss.size(); ++e) {
    log << tag << "epoch " << (e + 1) << "/" << h.train_loss.size() << " train_loss " << fmt(h.train_loss[e]);
    if (!std::isnan(h.validation_mse[e])) log << " validation_mse " << fmt(h.validation_mse[e]);
    log << "\n";
  }
  return h;
}

std::string history_csv(const TrainHistory& h) {
  std::string out = "epoch,train_loss,validation_mse\n";
  for (std::size_t e = 0; e < h.train_loss.size(); ++e) {
    out += std::to_string(e + 1) + "," + fmt(h.train_loss[e]) + ",";
    out += std::isnan(h.validation_mse[e]) ? std::string() : fmt(h.validation_mse[e]);
    out += "\n";
  }
  return out;
}

bool parse_hhmm(std::string_view s, int& seconds) {
  if (s.size() != 5 || s[2] != ':') return false;
  for (int i : {0, 1, 3, 4})
    if (s[i] < '0' || s[i] > '9') return false;
  int h = (s[0] - '0') * 10 + (s[1] - '0');
  int m = (s[3] - '0') * 10 + (s[4] - '0');
  if (h > 23 || m > 59) return false;
  seconds = h * 3600 + m * 60;
  return true;
}

}  // namespace

void apply_setting(RunConfig& cfg, std::string_view key, std::string_view value) {
  key = trim(key);
  value = trim(value);
  if (key == "ionex") {
    cfg.ionex = std::string(value);
  } else if (key == "spaceweather") {
    cfg.spaceweather = fs::path(std::string(value));
  } else if (key == "output_dir") {
    cfg.output_dir = fs::path(std::string(value));
  } else if (key == "checkpoint") {
    cfg.checkpoint = fs::path(std::string(value));
  } else if (key == "architecture") {
    parse_architecture(value, int(kEncodedDim)).validate();
    cfg.architecture = std::string(value);
  } else if (key == "batch_size") {
    auto v = parse_integer<long long>(key, value);
    if (v <= 0) bad_value(key, value, "a positive integer");
    cfg.train.batch_size = std::size_t(v);
  } else if (key == "epochs") {
    auto v = parse_integer<int>(key, value);
    if (v <= 0) bad_value(key, value, "a positive integer");
    cfg.train.epochs = v;
  } else if (key == "learning_rate") {
    cfg.train.adam.learning_rate = parse_real(key, value);
  } else if (key == "beta1") {
    cfg.train.adam.beta1 = parse_real(key, value);
  } else if (key == "beta2") {
    cfg.train.adam.beta2 = parse_real(key, value);
  } else if (key == "adam_epsilon") {
    cfg.train.adam.epsilon = parse_real(key, value);
  } else if (key == "kl_scale_mode") {
    if (value == "batch_over_n")
      cfg.train.kl_scale_mode = KlScaleMode::BatchOverN;
    else if (value == "constant")
      cfg.train.kl_scale_mode = KlScaleMode::Constant;
    else
      bad_value(key, value, "batch_over_n or constant");
  } else if (key == "kl_weight") {
    cfg.train.kl_weight = parse_real(key, value);
  } else if (key == "holdout") {
    cfg.holdout.clear();
    if (!value.empty()) {
      for (auto d : split(value, ',')) {
        try {
          cfg.holdout.push_back(parse_date(d));
        } catch (const ParseError&) {
          bad_value(key, d, "YYYY-MM-DD");
        }
      }
    }
  } else if (key == "k") {
    auto v = parse_integer<int>(key, value);
    if (v < 2) bad_value(key, value, "an ensemble size of at least 2");
    cfg.k = v;
  } else if (key == "band_width") {
    double v = parse_real(key, value);
    band_count(v);  // validates
    cfg.band_width = v;
  } else if (key == "seed") {
    cfg.seed = parse_integer<std::uint64_t>(key, value);
  } else if (key == "use_rms_weights") {
    cfg.use_rms_weights = parse_bool(key, value);
  } else if (key == "rms_floor") {
    double v = parse_real(key, value);
    if (v <= 0) bad_value(key, value, "a positive number");
    cfg.rms_floor = v;
  } else if (key == "threads") {
    auto v = parse_integer<unsigned>(key, value);
    if (v == 0) bad_value(key, value, "a positive integer");
    cfg.threads = v;
  } else if (key == "interval") {
    auto v = parse_integer<int>(key, value);
    if (v <= 0 || 86400 % v != 0) bad_value(key, value, "a positive divisor of 86400");
    cfg.interval = v;
  } else {
    throw ConfigError("unknown config key '" + std::string(key) + "'");
  }
}

RunConfig parse_run_config(std::string_view text) {
  RunConfig cfg;
  std::size_t line_no = 0;
  for (auto line : split(text, '\n')) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    try {
      apply_setting(cfg, line.substr(0, eq), line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError("config line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return cfg;
}

RunConfig load_run_config(const fs::path& path) {
  RunConfig cfg = parse_run_config(read_text(path));
  // Relative data paths in a config file are taken relative to the file.
  fs::path base = path.parent_path();
  auto rebase = [&](fs::path& p) {
    if (!p.empty() && p.is_relative()) p = base / p;
  };
  rebase(cfg.spaceweather);
  rebase(cfg.output_dir);
  rebase(cfg.checkpoint);
  if (!cfg.ionex.empty()) {
    std::string joined;
    for (auto part : split(cfg.ionex, ',')) {
      fs::path p{std::string(part)};
      if (p.is_relative()) p = base / p;
      joined += (joined.empty() ? "" : ",") + p.string();
    }
    cfg.ionex = joined;
  }
  return cfg;
}

std::vector<fs::path> expand_ionex_inputs(const std::string& pattern) {
  if (trim(pattern).empty()) throw ConfigError("no IONEX inputs configured");
  std::set<fs::path> found;
  for (auto part : split(pattern, ',')) {
    if (part.empty()) continue;
    fs::path p{std::string(part)};
    std::string name = p.filename().string();
    if (name.find_first_of("*?[") == std::string::npos) {
      if (!fs::exists(p)) throw IoError("IONEX file not found: " + p.string());
      found.insert(p);
      continue;
    }
    fs::path dir = p.parent_path().empty() ? fs::path(".") : p.parent_path();
    std::error_code ec;
    for (fs::directory_iterator it(dir, ec), end; !ec && it != end; it.increment(ec)) {
      if (!it->is_regular_file()) continue;
      if (fnmatch(name.c_str(), it->path().filename().c_str(), 0) == 0) found.insert(it->path());
    }
    if (ec) throw IoError("cannot list " + dir.string() + ": " + ec.message());
  }
  if (found.empty()) throw ConfigError("no IONEX files match '" + pattern + "'");
  return {found.begin(), found.end()};
}

void cmd_ionex_dump(const fs::path& file, const std::optional<std::string>& epoch_hhmm, const std::string& format,
                    std::ostream& out) {
  if (format != "summary" && format != "csv") throw ConfigError("unknown format '" + format + "'");
  int want = -1;
  if (epoch_hhmm && !parse_hhmm(*epoch_hhmm, want)) throw ConfigError("epoch must be HH:MM, got '" + *epoch_hhmm + "'");

  IonexFile f = read_ionex_file(file);
  std::vector<std::size_t> selected;
  for (std::size_t m = 0; m < f.tec_maps.size(); ++m)
    if (want < 0 || second_of_day(f.tec_maps[m].epoch()) == want) selected.push_back(m);
  if (epoch_hhmm && selected.empty()) throw LookupError("no map at " + *epoch_hhmm + " in " + file.string());
  const bool has_rms = f.rms_maps.size() == f.tec_maps.size() && !f.rms_maps.empty();

  if (format == "csv") {
    out << "epoch,lat,lon,vtec" << (has_rms ? ",rms" : "") << "\n";
    for (auto m : selected) {
      const TecMap& tec = f.tec_maps[m];
      std::string when = format_iso(tec.epoch());
      for (int i = 0; i < tec.n_lat(); ++i)
        for (int j = 0; j < tec.n_lon(); ++j) {
          if (!tec.present(i, j)) continue;
          out << when << "," << fmt(tec.grid().lat_at(i)) << "," << fmt(tec.grid().lon_at(j)) << ","
              << fmt(tec.value(i, j));
          if (has_rms) {
            auto r = f.rms_maps[m].at(i, j);
            out << "," << (r ? fmt(*r) : std::string());
          }
          out << "\n";
        }
    }
    return;
  }

  const GridSpec& g = f.header.grid;
  out << "file " << file.filename().string() << "\n";
  out << "maps " << f.tec_maps.size() << " tec, " << f.rms_maps.size() << " rms; interval " << f.header.interval
      << " s; exponent " << f.header.exponent << "\n";
  out << "grid lat " << fmt(g.lat_start) << ".." << fmt(g.lat_stop) << " step " << fmt(g.lat_step) << ", lon "
      << fmt(g.lon_start) << ".." << fmt(g.lon_stop) << " step " << fmt(g.lon_step) << " (" << g.n_lat() << "x"
      << g.n_lon() << ")\n";
  for (const auto& w : f.warnings) out << "warning " << w << "\n";
  for (auto m : selected) {
    const TecMap& tec = f.tec_maps[m];
    double lo = std::numeric_limits<double>::infinity(), hi = -lo, sum = 0;
    std::size_t n = 0;
    for (int i = 0; i < tec.n_lat(); ++i)
      for (int j = 0; j < tec.n_lon(); ++j)
        if (tec.present(i, j)) {
          double v = tec.value(i, j);
          lo = std::min(lo, v);
          hi = std::max(hi, v);
          sum += v;
          ++n;
        }
    out << format_iso(tec.epoch()) << " present " << n << "/" << std::size_t(tec.n_lat()) * std::size_t(tec.n_lon());
    if (n) out << " min " << fmt(lo) << " max " << fmt(hi) << " mean " << fmt(sum / double(n));
    out << "\n";
  }
}

TrainResult cmd_train(const RunConfig& cfg, std::ostream& log) {
  PreparedData d = prepare(cfg, log);
  ensure_dir(cfg.output_dir);

  Network net = init_network(parse_architecture(cfg.architecture, int(kEncodedDim)), *cfg.seed);
  TrainConfig tc = cfg.train;
  tc.seed = *cfg.seed;
  TrainResult r;
  r.history = fit_one(net, d.train, d.validation, tc, log, "");

  r.checkpoint = cfg.checkpoint_path();
  if (r.checkpoint.has_parent_path()) ensure_dir(r.checkpoint.parent_path());
  save_model_file(r.checkpoint, net, d.normalizer, d.provenance);
  r.history_csv = cfg.output_dir / "history.csv";
  write_text(r.history_csv, history_csv(r.history));
  log << "checkpoint " << r.checkpoint.string() << "\n";
  return r;
}

std::vector<fs::path> cmd_bag(const RunConfig& cfg, int n_models, std::ostream& log) {
  if (n_models < 1) throw ConfigError("bag needs at least one model");
  PreparedData d = prepare(cfg, log);
  ensure_dir(cfg.output_dir);
  NetworkSpec spec = parse_architecture(cfg.architecture, int(kEncodedDim));

  std::vector<fs::path> out;
  for (int m = 0; m < n_models; ++m) {
    const std::uint64_t seed = *cfg.seed + std::uint64_t(m);
    SampleSet resample = bootstrap_resample(d.train, seed);
    Network net = init_network(spec, seed);
    TrainConfig tc = cfg.train;
    tc.seed = seed;
    std::string tag = "model " + std::to_string(m) + " ";
    TrainHistory h = fit_one(net, resample, d.validation, tc, log, tag);
    fs::path ckpt = cfg.output_dir / ("bag_model_" + std::to_string(m) + ".ckpt");
    save_model_file(ckpt, net, d.normalizer,
                    d.provenance + "; bootstrap member " + std::to_string(m) + " seed=" + std::to_string(seed));
    write_text(cfg.output_dir / ("bag_history_" + std::to_string(m) + ".csv"), history_csv(h));
    log << "checkpoint " << ckpt.string() << "\n";
    out.push_back(ckpt);
  }
  return out;
}

PredictResult cmd_predict(const PredictOptions& opt, std::ostream& log) {
  if (!opt.seed) throw ConfigError("a seed is required for prediction");
  if (opt.checkpoints.empty()) throw ConfigError("no checkpoint given");
  if (opt.dates.empty()) throw ConfigError("no prediction date given");
  if (opt.spaceweather.empty()) throw ConfigError("no space-weather file given");
  if (opt.threads == 0) throw ConfigError("threads must be positive");
  const bool bagged = opt.checkpoints.size() > 1;
  if (!bagged && opt.k < 2) throw ConfigError("ensemble size k must be at least 2 (got " + std::to_string(opt.k) + ")");

  std::vector<Model> models;
  for (const auto& p : opt.checkpoints) models.push_back(load_model_file(p));
  if (!bagged && !models.front().network.has_variational())
    throw ConfigError("a single deterministic network has no predictive spread; use a variational model or bag");
  SpaceWeatherTable sw = read_spaceweather_file(opt.spaceweather);
  ensure_dir(opt.output_dir);

  PredictResult r;
  const GridSpec grid = igs_grid();
  for (std::size_t di = 0; di < opt.dates.size(); ++di) {
    UtcDay day = opt.dates[di];
    std::vector<UtcTime> epochs = day_epochs(day, opt.interval);
    // The per-date seed keeps a date's maps independent of the other dates requested.
    std::uint64_t seed = derive_seed(*opt.seed, {std::uint64_t(day.time_since_epoch().count())});
    PredictedMapSet p = bagged ? predict_grid_bagged(models, epochs, grid, sw, seed, opt.threads)
                               : predict_grid(models.front(), epochs, grid, sw, opt.k, seed, opt.threads);
    if (p.clamped) log << "warning: " << p.clamped << " negative mean predictions clamped to 0\n";

    IonexFile f = export_predicted_ionex(p);
    std::string stem = "predicted_" + format_date(day);
    fs::path ionex_path = opt.output_dir / (stem + ".ionex");
    fs::path csv_path = opt.output_dir / (stem + ".csv");
    write_ionex_file(f, ionex_path);
    write_text(csv_path, predictions_csv(p));
    log << format_date(day) << ": " << epochs.size() << " maps, k = " << p.k << " -> " << ionex_path.string()
        << "\n";
    r.ionex.push_back(ionex_path);
    r.csv.push_back(csv_path);
  }
  return r;
}

namespace {

std::vector<ErrorRecord> load_records(const fs::path& predicted, const fs::path& truth) {
  PredictedMapSet p = import_predicted_ionex(read_ionex_file(predicted));
  IonexFile t = read_ionex_file(truth);
  return error_records(p, t);
}

}  // namespace

EvaluateResult cmd_evaluate(const fs::path& predicted, const fs::path& truth,
                            const std::optional<fs::path>& calibration, double band_width, const fs::path& output_dir,
                            std::ostream& out) {
  band_count(band_width);
  std::vector<ErrorRecord> records = load_records(predicted, truth);
  if (records.empty()) throw LookupError("prediction and truth share no present cells");
  if (calibration) attach_calibration(records, read_calibration_file(*calibration));

  ensure_dir(output_dir);
  EvaluateResult r;
  auto stats = band_stats(records, band_width);
  r.band_stats_csv = output_dir / "band_stats.csv";
  r.records_csv = output_dir / "records.csv";
  write_text(r.band_stats_csv, band_stats_csv(stats));
  write_text(r.records_csv, records_csv(records));

  double abs_sum = 0, sq_sum = 0, sig_sum = 0, cal_sum = 0;
  for (const auto& rec : records) {
    abs_sum += std::abs(rec.eps);
    sq_sum += rec.eps * rec.eps;
    sig_sum += rec.sigma_raw;
    if (rec.sigma_cal) cal_sum += *rec.sigma_cal;
  }
  const double n = double(records.size());
  std::ostringstream s;
  s << "points " << records.size() << " mae " << fmt(abs_sum / n) << " rmse " << fmt(std::sqrt(sq_sum / n))
    << " mean_sigma_raw " << fmt(sig_sum / n);
  if (calibration) s << " mean_sigma_cal " << fmt(cal_sum / n);
  r.summary = s.str();
  out << r.summary << "\n";
  return r;
}

CalibrationModel cmd_calibrate(const fs::path& predicted, const fs::path& truth, double band_width,
                               const fs::path& output, std::ostream& out) {
  std::vector<ErrorRecord> records = load_records(predicted, truth);
  if (records.empty()) throw ConfigError("prediction and truth share no present cells; nothing to calibrate");
  CalibrationModel model = fit_calibration(calibration_pairs(records), band_width);
  if (output.has_parent_path()) ensure_dir(output.parent_path());
  write_text(output, write_calibration_csv(model));
  std::size_t inherited = 0;
  for (const auto& b : model.bands()) inherited += b.pairs == 0;
  out << "calibration: " << records.size() << " pairs, " << model.bands().size() << " bands (" << inherited
      << " on the global fit) -> " << output.string() << "\n";
  return model;
}

std::vector<fs::path> cmd_synth(UtcDay first, int n_days, const fs::path& output_dir, std::uint64_t seed,
                                double missing_fraction, std::ostream& log) {
  if (n_days < 1) throw ConfigError("synth needs at least one day");
  if (!(missing_fraction >= 0 && missing_fraction < 1)) throw ConfigError("missing fraction must be in [0, 1)");
  ensure_dir(output_dir);
  SpaceWeatherTable sw = synth_spaceweather(first, n_days, seed);
  fs::path sw_path = output_dir / "spaceweather.csv";
  write_text(sw_path, write_spaceweather(sw));
  std::vector<fs::path> out;
  SynthOptions opt;
  opt.seed = seed;
  opt.missing_fraction = missing_fraction;
  for (int d = 0; d < n_days; ++d) {
    UtcDay day = first + std::chrono::days(d);
    fs::path p = output_dir / ("synth_" + format_date(day) + ".ionex");
    write_ionex_file(synth_ionex_day(day, sw, opt), p);
    out.push_back(p);
  }
  log << "wrote " << out.size() << " IONEX days and " << sw_path.string() << "\n";
  return out;
}

}  // namespace vtec
