// vtecbnn: train, predict, calibrate and evaluate Bayesian VTEC models.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "vtec/cli.hpp"
#include "vtec/errors.hpp"
#include "vtec/time.hpp"

namespace {

using vtec::RunConfig;

// Flags shared by train and bag. Anything given on the command line is
// applied after the config file, so it wins.
struct Overrides {
  std::string config;
  std::vector<std::string> set;
  std::optional<std::string> seed, epochs, batch_size, learning_rate, architecture, output_dir, checkpoint, holdout,
      ionex, spaceweather;

  void add_to(CLI::App* cmd) {
    cmd->add_option("-c,--config", config, "key = value config file")->required()->check(CLI::ExistingFile);
    cmd->add_option("--set", set, "extra key=value override (repeatable)");
    cmd->add_option("--seed", seed);
    cmd->add_option("--epochs", epochs);
    cmd->add_option("--batch-size", batch_size);
    cmd->add_option("--learning-rate", learning_rate);
    cmd->add_option("--architecture", architecture);
    cmd->add_option("--output-dir", output_dir);
    cmd->add_option("--checkpoint", checkpoint);
    cmd->add_option("--holdout", holdout, "comma separated YYYY-MM-DD");
    cmd->add_option("--ionex", ionex, "IONEX glob or comma list");
    cmd->add_option("--spaceweather", spaceweather);
  }

  RunConfig load() const {
    RunConfig cfg = vtec::load_run_config(config);
    auto put = [&](const char* key, const std::optional<std::string>& v) {
      if (v) vtec::apply_setting(cfg, key, *v);
    };
    put("seed", seed);
    put("epochs", epochs);
    put("batch_size", batch_size);
    put("learning_rate", learning_rate);
    put("architecture", architecture);
    put("output_dir", output_dir);
    put("checkpoint", checkpoint);
    put("holdout", holdout);
    put("ionex", ionex);
    put("spaceweather", spaceweather);
    for (const auto& kv : set) {
      auto eq = kv.find('=');
      if (eq == std::string::npos) throw vtec::ConfigError("--set expects key=value, got '" + kv + "'");
      vtec::apply_setting(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }
    return cfg;
  }
};

std::vector<vtec::UtcDay> parse_dates(const std::vector<std::string>& in) {
  std::vector<vtec::UtcDay> out;
  for (const auto& s : in) {
    try {
      out.push_back(vtec::parse_date(s));
    } catch (const vtec::ParseError&) {
      throw vtec::ConfigError("date must be YYYY-MM-DD, got '" + s + "'");
    }
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian neural network VTEC modelling"};
  app.require_subcommand(1);

  // ionex-dump
  auto* dump = app.add_subcommand("ionex-dump", "print the maps of an IONEX file");
  std::string dump_file, dump_format = "summary";
  std::optional<std::string> dump_epoch;
  dump->add_option("file", dump_file)->required()->check(CLI::ExistingFile);
  dump->add_option("--epoch", dump_epoch, "HH:MM");
  dump->add_option("--format", dump_format)->check(CLI::IsMember({"summary", "csv"}));

  // train / bag
  auto* train = app.add_subcommand("train", "train one network");
  Overrides train_ov;
  train_ov.add_to(train);

  auto* bag = app.add_subcommand("bag", "train networks on bootstrap resamples");
  Overrides bag_ov;
  bag_ov.add_to(bag);
  int bag_n = 5;
  bag->add_option("-n,--models", bag_n, "number of resampled models")->check(CLI::PositiveNumber);

  // predict
  auto* predict = app.add_subcommand("predict", "ensemble VTEC maps for given dates");
  std::vector<std::string> pred_ckpt, pred_dates;
  std::string pred_sw, pred_out = ".";
  std::optional<std::uint64_t> pred_seed;
  int pred_k = 100, pred_interval = 7200;
  unsigned pred_threads = 1;
  predict->add_option("--checkpoint", pred_ckpt, "one checkpoint, or several for a bagged ensemble")
      ->required()
      ->check(CLI::ExistingFile);
  predict->add_option("--date", pred_dates, "YYYY-MM-DD (repeatable)")->required();
  predict->add_option("--spaceweather", pred_sw)->required()->check(CLI::ExistingFile);
  predict->add_option("--seed", pred_seed)->required();
  predict->add_option("-k,--ensemble-size", pred_k, "posterior draws per grid node");
  predict->add_option("--output-dir", pred_out);
  predict->add_option("--threads", pred_threads);
  predict->add_option("--interval", pred_interval, "seconds between maps");

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "error and spread statistics against truth maps");
  std::string ev_pred, ev_truth, ev_out = ".";
  std::optional<std::string> ev_cal;
  double ev_bw = vtec::kDefaultBandWidth;
  evaluate->add_option("--predicted", ev_pred)->required()->check(CLI::ExistingFile);
  evaluate->add_option("--truth", ev_truth)->required()->check(CLI::ExistingFile);
  evaluate->add_option("--calibration", ev_cal)->check(CLI::ExistingFile);
  evaluate->add_option("--band-width", ev_bw);
  evaluate->add_option("--output-dir", ev_out);

  // calibrate
  auto* calibrate = app.add_subcommand("calibrate", "fit latitude-banded spread calibration");
  std::string cal_pred, cal_truth, cal_out = "calibration.csv";
  double cal_bw = vtec::kDefaultBandWidth;
  calibrate->add_option("--predicted", cal_pred)->required()->check(CLI::ExistingFile);
  calibrate->add_option("--truth", cal_truth)->required()->check(CLI::ExistingFile);
  calibrate->add_option("--band-width", cal_bw);
  calibrate->add_option("-o,--output", cal_out);

  // synth
  auto* synth = app.add_subcommand("synth", "write synthetic IGS-layout IONEX days and indices");
  std::string syn_first, syn_out = ".";
  int syn_days = 1;
  std::uint64_t syn_seed = 2009;
  double syn_missing = 0.0;
  synth->add_option("--first-day", syn_first)->required();
  synth->add_option("--days", syn_days);
  synth->add_option("--output-dir", syn_out);
  synth->add_option("--seed", syn_seed);
  synth->add_option("--missing-fraction", syn_missing);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? vtec::kExitOk : vtec::kExitConfig;
  }

  try {
    if (*dump) {
      vtec::cmd_ionex_dump(dump_file, dump_epoch, dump_format, std::cout);
    } else if (*train) {
      vtec::cmd_train(train_ov.load(), std::cout);
    } else if (*bag) {
      vtec::cmd_bag(bag_ov.load(), bag_n, std::cout);
    } else if (*predict) {
      vtec::PredictOptions opt;
      for (const auto& c : pred_ckpt) opt.checkpoints.emplace_back(c);
      opt.dates = parse_dates(pred_dates);
      opt.spaceweather = pred_sw;
      opt.k = pred_k;
      opt.seed = pred_seed;
      opt.output_dir = pred_out;
      opt.threads = pred_threads;
      opt.interval = pred_interval;
      vtec::cmd_predict(opt, std::cout);
    } else if (*evaluate) {
      std::optional<vtec::fs::path> cal;
      if (ev_cal) cal = *ev_cal;
      vtec::cmd_evaluate(ev_pred, ev_truth, cal, ev_bw, ev_out, std::cout);
    } else if (*calibrate) {
      vtec::cmd_calibrate(cal_pred, cal_truth, cal_bw, cal_out, std::cout);
    } else if (*synth) {
      vtec::cmd_synth(parse_dates({syn_first}).front(), syn_days, syn_out, syn_seed, syn_missing, std::cout);
    }
  } catch (const std::exception& e) {
    std::cerr << "vtecbnn: " << e.what() << "\n";
    return vtec::exit_code_for(e);
  }
  return vtec::kExitOk;
}
