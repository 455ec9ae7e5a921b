#pragma once

// Pipeline commands behind the `vtecbnn` executable. Each command is a plain
// function so it can be driven from tests; the executable only parses flags
// and maps exceptions to exit codes.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "vtec/bnn.hpp"
#include "vtec/calibrate.hpp"
#include "vtec/time.hpp"

namespace vtec {

namespace fs = std::filesystem;

enum ExitCode : int {
  kExitOk = 0,
  kExitUnexpected = 1,
  kExitConfig = 2,
  kExitIo = 3,
  kExitNumeric = 4,
};

/// Maps the library's exception classes onto exit codes.
int exit_code_for(const std::exception& e);

/// Experiment configuration, read from `key = value` lines ('#' starts a comment).
///
/// Keys: ionex, spaceweather, output_dir, checkpoint, architecture,
/// batch_size, epochs, learning_rate, beta1, beta2, adam_epsilon,
/// kl_scale_mode (batch_over_n | constant), kl_weight, holdout (comma
/// separated YYYY-MM-DD), k, band_width, seed, use_rms_weights, rms_floor,
/// threads, interval.
struct RunConfig {
  std::string ionex;  // glob on the file name, e.g. data/igsg*.09i, or a comma list of paths
  fs::path spaceweather;
  fs::path output_dir = ".";
  fs::path checkpoint;  // default <output_dir>/model.ckpt
  std::string architecture = "V64-D32-D16-D1";
  TrainConfig train{};
  std::vector<UtcDay> holdout;
  int k = 100;
  double band_width = kDefaultBandWidth;
  std::optional<std::uint64_t> seed;
  bool use_rms_weights = false;
  double rms_floor = 0.5;
  unsigned threads = 1;
  int interval = 7200;

  fs::path checkpoint_path() const { return checkpoint.empty() ? output_dir / "model.ckpt" : checkpoint; }
};

/// Throws ConfigError on unknown keys or malformed values.
void apply_setting(RunConfig& cfg, std::string_view key, std::string_view value);
RunConfig parse_run_config(std::string_view text);
RunConfig load_run_config(const fs::path& path);

/// Sorted, de-duplicated IONEX paths. Throws ConfigError when nothing matches.
std::vector<fs::path> expand_ionex_inputs(const std::string& pattern);

void cmd_ionex_dump(const fs::path& file, const std::optional<std::string>& epoch_hhmm, const std::string& format,
                    std::ostream& out);

struct TrainResult {
  fs::path checkpoint;
  fs::path history_csv;
  TrainHistory history;
};

/// ingest -> holdout split -> normalize -> train -> checkpoint + history CSV.
TrainResult cmd_train(const RunConfig& cfg, std::ostream& log);

/// Trains `n_models` networks on bootstrap resamples of the training split,
/// model m with seed + m. Returns the checkpoint paths.
std::vector<fs::path> cmd_bag(const RunConfig& cfg, int n_models, std::ostream& log);

struct PredictOptions {
  std::vector<fs::path> checkpoints;  // one: ensemble of posterior draws; several: bagged
  std::vector<UtcDay> dates;
  fs::path spaceweather;
  int k = 100;
  std::optional<std::uint64_t> seed;
  fs::path output_dir = ".";
  unsigned threads = 1;
  int interval = 7200;
};

struct PredictResult {
  std::vector<fs::path> ionex;
  std::vector<fs::path> csv;
};

/// Writes predicted_<date>.ionex (mean as TEC, sigma as RMS) and predicted_<date>.csv per date.
PredictResult cmd_predict(const PredictOptions& opt, std::ostream& log);

struct EvaluateResult {
  fs::path band_stats_csv;
  fs::path records_csv;
  std::string summary;
};

/// Band statistics of a predicted IONEX against truth; calibrated columns
/// are filled when a calibration CSV is given.
EvaluateResult cmd_evaluate(const fs::path& predicted, const fs::path& truth,
                            const std::optional<fs::path>& calibration, double band_width, const fs::path& output_dir,
                            std::ostream& out);

/// Fits a calibration model on predicted-vs-truth pairs and writes it as CSV.
CalibrationModel cmd_calibrate(const fs::path& predicted, const fs::path& truth, double band_width,
                               const fs::path& output, std::ostream& out);

/// Synthetic IGS-layout day files synth_<date>.ionex plus spaceweather.csv.
std::vector<fs::path> cmd_synth(UtcDay first, int n_days, const fs::path& output_dir, std::uint64_t seed,
                                double missing_fraction, std::ostream& log);

}  // namespace vtec
