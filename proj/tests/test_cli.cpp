#include <sstream>

#include <gtest/gtest.h>

#include "test_util.hpp"
#include "vtec/checkpoint.hpp"
#include "vtec/cli.hpp"
#include "vtec/errors.hpp"
#include "vtec/inference.hpp"

namespace vtec {
namespace {

TEST(RunConfigParse, KeysAndComments) {
  const RunConfig c = parse_run_config(
      "# experiment\n"
      "ionex = data/igsg*.09i\n"
      "spaceweather=sw.csv   # trailing comment\n"
      "   \n"
      "architecture = V16-D8-D1\n"
      "batch_size = 32\n"
      "epochs = 3\n"
      "learning_rate = 0.01\n"
      "kl_scale_mode = constant\n"
      "kl_weight = 0.5\n"
      "holdout = 2009-01-01, 2009-01-02\n"
      "k = 10\n"
      "seed = 42\n"
      "use_rms_weights = true\n"
      "threads = 2\n"
      "interval = 3600\n");
  EXPECT_EQ(c.ionex, "data/igsg*.09i");
  EXPECT_EQ(c.spaceweather, "sw.csv");
  EXPECT_EQ(c.architecture, "V16-D8-D1");
  EXPECT_EQ(c.train.batch_size, 32u);
  EXPECT_EQ(c.train.epochs, 3);
  EXPECT_DOUBLE_EQ(c.train.adam.learning_rate, 0.01);
  EXPECT_EQ(c.train.kl_scale_mode, KlScaleMode::Constant);
  EXPECT_DOUBLE_EQ(c.train.kl_weight, 0.5);
  ASSERT_EQ(c.holdout.size(), 2u);
  EXPECT_EQ(c.holdout[1], make_day(2009, 1, 2));
  EXPECT_EQ(c.k, 10);
  EXPECT_EQ(c.seed, 42u);
  EXPECT_TRUE(c.use_rms_weights);
  EXPECT_EQ(c.threads, 2u);
  EXPECT_EQ(c.interval, 3600);
  EXPECT_EQ(c.checkpoint_path(), fs::path("./model.ckpt"));
}

TEST(RunConfigParse, Defaults) {
  const RunConfig c = parse_run_config("");
  EXPECT_EQ(c.architecture, "V64-D32-D16-D1");
  EXPECT_EQ(c.k, 100);
  EXPECT_FALSE(c.seed);
  EXPECT_EQ(c.train.kl_scale_mode, KlScaleMode::BatchOverN);
}

TEST(RunConfigParse, ErrorsNameTheLine) {
  auto message = [](const std::string& text) {
    try {
      parse_run_config(text);
    } catch (const ConfigError& e) {
      return std::string(e.what());
    }
    return std::string("no error");
  };
  EXPECT_NE(message("seed = 1\nwidth = 3\n").find("line 2"), std::string::npos);
  EXPECT_NE(message("seed = 1\nwidth = 3\n").find("unknown config key 'width'"), std::string::npos);
  EXPECT_NE(message("\n\njust words\n").find("line 3"), std::string::npos);
  for (const char* bad : {"k = 1", "k = x", "batch_size = 0", "epochs = -1", "interval = 7000", "holdout = 2009-13-01",
                          "architecture = V8-X4", "kl_scale_mode = elbo", "use_rms_weights = maybe",
                          "band_width = 0", "rms_floor = 0", "threads = 0", "learning_rate = fast"})
    EXPECT_THROW(parse_run_config(bad), ConfigError) << bad;
}

TEST(RunConfigParse, LaterSettingsWin) {
  RunConfig c = parse_run_config("epochs = 3\nepochs = 5\n");
  EXPECT_EQ(c.train.epochs, 5);
  apply_setting(c, "epochs", "7");
  EXPECT_EQ(c.train.epochs, 7);
}

TEST(RunConfigParse, FilePathsRelativeToConfig) {
  test::TempDir dir;
  fs::create_directories(dir / "exp");
  std::ofstream(dir / "exp/run.cfg") << "ionex = a.ionex,/abs/b.ionex\nspaceweather = sw.csv\noutput_dir = out\n";
  const RunConfig c = load_run_config(dir / "exp/run.cfg");
  EXPECT_EQ(c.spaceweather, dir / "exp/sw.csv");
  EXPECT_EQ(c.output_dir, dir / "exp/out");
  EXPECT_EQ(c.ionex, (dir / "exp/a.ionex").string() + ",/abs/b.ionex");
  EXPECT_THROW(load_run_config(dir / "missing.cfg"), IoError);
}

TEST(ExpandInputs, GlobAndList) {
  test::TempDir dir;
  for (const char* n : {"igsg0030.09i", "igsg0010.09i", "igsg0020.09i", "other.txt"}) std::ofstream(dir / n) << "x";
  const auto g = expand_ionex_inputs((dir / "igsg*.09i").string());
  ASSERT_EQ(g.size(), 3u);
  EXPECT_EQ(g[0].filename(), "igsg0010.09i");
  EXPECT_EQ(g[2].filename(), "igsg0030.09i");
  const auto l = expand_ionex_inputs((dir / "other.txt").string() + "," + (dir / "igsg00[12]0.09i").string());
  EXPECT_EQ(l.size(), 3u);
  EXPECT_THROW(expand_ionex_inputs((dir / "*.22i").string()), ConfigError);
  EXPECT_THROW(expand_ionex_inputs((dir / "absent.09i").string()), IoError);
  EXPECT_THROW(expand_ionex_inputs(" "), ConfigError);
}

TEST(ExitCodes, Mapping) {
  EXPECT_EQ(exit_code_for(ConfigError("x")), kExitConfig);
  EXPECT_EQ(exit_code_for(IoError("x")), kExitIo);
  EXPECT_EQ(exit_code_for(ParseError("x", 3)), kExitIo);
  EXPECT_EQ(exit_code_for(LookupError("x")), kExitIo);
  EXPECT_EQ(exit_code_for(NumericError("x")), kExitNumeric);
  EXPECT_EQ(exit_code_for(std::runtime_error("x")), kExitUnexpected);
}

TEST(IonexDump, Summary) {
  std::ostringstream out;
  cmd_ionex_dump(test::data_path("small.ionex"), std::nullopt, "summary", out);
  const std::string s = out.str();
  EXPECT_NE(s.find("maps 2 tec, 2 rms"), std::string::npos) << s;
  EXPECT_NE(s.find("(3x5)"), std::string::npos) << s;
  EXPECT_NE(s.find("present 14/15"), std::string::npos) << s;
  EXPECT_NE(s.find("present 15/15"), std::string::npos) << s;
}

TEST(IonexDump, CsvForOneEpoch) {
  std::ostringstream out;
  cmd_ionex_dump(test::data_path("small.ionex"), std::string("02:00"), "csv", out);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "epoch,lat,lon,vtec,rms");
  std::size_t rows = 0;
  bool blank_rms = false;
  while (std::getline(in, line)) {
    ++rows;
    EXPECT_EQ(line.rfind("2009-01-01T02:00:00Z,", 0), 0u);
    if (line.back() == ',') blank_rms = true;
  }
  EXPECT_EQ(rows, 15u);
  EXPECT_TRUE(blank_rms);  // one RMS cell of the second map is missing
}

TEST(IonexDump, Errors) {
  std::ostringstream out;
  EXPECT_THROW(cmd_ionex_dump(test::data_path("small.ionex"), std::string("01:00"), "csv", out), LookupError);
  EXPECT_THROW(cmd_ionex_dump(test::data_path("small.ionex"), std::string("25:00"), "csv", out), ConfigError);
  EXPECT_THROW(cmd_ionex_dump(test::data_path("small.ionex"), std::nullopt, "json", out), ConfigError);
  EXPECT_THROW(cmd_ionex_dump(test::data_path("absent.ionex"), std::nullopt, "csv", out), IoError);
}

// Three synthetic days shared by the pipeline tests.
class Pipeline : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = fs::temp_directory_path() / ("vtec_pipeline_" + std::to_string(::getpid()));
    fs::remove_all(root_);
    std::ostringstream log;
    cmd_synth(make_day(2009, 1, 1), 3, root_ / "data", 7, 0.0, log);
  }
  static void TearDownTestSuite() { fs::remove_all(root_); }

  RunConfig config(const fs::path& out) const {
    RunConfig c = parse_run_config(
        "architecture = V8-D1\nbatch_size = 1024\nepochs = 2\nlearning_rate = 0.01\nholdout = 2009-01-03\nseed = 5\n");
    c.ionex = (root_ / "data" / "synth_*.ionex").string();
    c.spaceweather = root_ / "data" / "spaceweather.csv";
    c.output_dir = out;
    return c;
  }
  PredictOptions predict_options(std::vector<fs::path> ckpts, const fs::path& out) const {
    PredictOptions o;
    o.checkpoints = std::move(ckpts);
    o.dates = {make_day(2009, 1, 3)};
    o.spaceweather = root_ / "data" / "spaceweather.csv";
    o.k = 3;
    o.seed = 11;
    o.output_dir = out;
    o.interval = 43200;
    return o;
  }
  static fs::path truth() { return root_ / "data" / "synth_2009-01-03.ionex"; }

  static fs::path root_;
};
fs::path Pipeline::root_;

TEST_F(Pipeline, SynthWroteDaysAndTable) {
  for (const char* n : {"synth_2009-01-01.ionex", "synth_2009-01-02.ionex", "synth_2009-01-03.ionex", "spaceweather.csv"})
    EXPECT_TRUE(fs::exists(root_ / "data" / n)) << n;
  const IonexFile f = read_ionex_file(truth());
  EXPECT_EQ(f.tec_maps.size(), 12u);
  EXPECT_EQ(f.header.grid, igs_grid());
}

TEST_F(Pipeline, TrainPredictEvaluateCalibrate) {
  test::TempDir dir;
  std::ostringstream log;
  const TrainResult t = cmd_train(config(dir.path()), log);
  EXPECT_EQ(t.checkpoint, dir / "model.ckpt");
  EXPECT_EQ(t.history.train_loss.size(), 2u);
  const std::string hist = test::slurp(t.history_csv);
  EXPECT_EQ(hist.substr(0, hist.find('\n')), "epoch,train_loss,validation_mse");
  EXPECT_EQ(std::count(hist.begin(), hist.end(), '\n'), 3);
  EXPECT_NE(log.str().find("samples: train 124392, validation 62196"), std::string::npos) << log.str();
  EXPECT_NE(log.str().find("epoch 2/2 train_loss"), std::string::npos) << log.str();

  const Model m = load_model_file(t.checkpoint);
  EXPECT_EQ(m.network.spec().architecture(), "V8-D1");
  EXPECT_NE(m.provenance.find("holdout=2009-01-03"), std::string::npos) << m.provenance;
  EXPECT_NE(m.provenance.find("seed=5"), std::string::npos);

  const PredictResult p = cmd_predict(predict_options({t.checkpoint}, dir / "pred"), log);
  ASSERT_EQ(p.ionex.size(), 1u);
  EXPECT_EQ(p.ionex[0].filename(), "predicted_2009-01-03.ionex");
  EXPECT_EQ(p.csv[0].filename(), "predicted_2009-01-03.csv");
  const IonexFile f = read_ionex_file(p.ionex[0]);
  EXPECT_EQ(f.tec_maps.size(), 2u);
  EXPECT_EQ(f.rms_maps.size(), 2u);

  std::ostringstream out;
  const EvaluateResult e = cmd_evaluate(p.ionex[0], truth(), std::nullopt, 10.0, dir / "eval", out);
  EXPECT_EQ(e.summary.rfind("points 10366 mae ", 0), 0u) << e.summary;
  EXPECT_EQ(e.summary.find("mean_sigma_cal"), std::string::npos);
  EXPECT_TRUE(fs::exists(e.band_stats_csv));
  EXPECT_TRUE(fs::exists(e.records_csv));

  const CalibrationModel cal = cmd_calibrate(p.ionex[0], truth(), 10.0, dir / "cal.csv", out);
  EXPECT_EQ(cal.bands().size(), 18u);
  EXPECT_EQ(read_calibration_file(dir / "cal.csv").bands().size(), 18u);
  const EvaluateResult ec = cmd_evaluate(p.ionex[0], truth(), dir / "cal.csv", 10.0, dir / "eval2", out);
  EXPECT_NE(ec.summary.find("mean_sigma_cal"), std::string::npos) << ec.summary;
}

TEST_F(Pipeline, RerunsAreByteIdentical) {
  test::TempDir a, b;
  std::ostringstream log;
  const auto ta = cmd_train(config(a.path()), log);
  const auto tb = cmd_train(config(b.path()), log);
  ASSERT_NE(ta.checkpoint, tb.checkpoint);
  EXPECT_TRUE(test::slurp(ta.checkpoint) == test::slurp(tb.checkpoint));
  EXPECT_TRUE(test::slurp(ta.history_csv) == test::slurp(tb.history_csv));

  auto oa = predict_options({ta.checkpoint}, a / "p");
  auto ob = predict_options({tb.checkpoint}, b / "p");
  ob.threads = 3;
  const auto pa = cmd_predict(oa, log);
  const auto pb = cmd_predict(ob, log);
  EXPECT_TRUE(test::slurp(pa.ionex[0]) == test::slurp(pb.ionex[0]));
  EXPECT_TRUE(test::slurp(pa.csv[0]) == test::slurp(pb.csv[0]));

  ob.seed = 12;
  ob.output_dir = b / "p12";
  EXPECT_TRUE(test::slurp(pa.csv[0]) != test::slurp(cmd_predict(ob, log).csv[0]));
}

TEST_F(Pipeline, PerDateSeedIndependentOfOtherDates) {
  test::TempDir dir;
  std::ostringstream log;
  const auto t = cmd_train(config(dir.path()), log);
  auto one = predict_options({t.checkpoint}, dir / "one");
  auto two = predict_options({t.checkpoint}, dir / "two");
  two.dates = {make_day(2009, 1, 2), make_day(2009, 1, 3)};
  const auto p1 = cmd_predict(one, log);
  const auto p2 = cmd_predict(two, log);
  EXPECT_TRUE(test::slurp(p1.csv[0]) == test::slurp(p2.csv[1]));
}

TEST_F(Pipeline, BagThenBaggedPrediction) {
  test::TempDir dir;
  RunConfig c = config(dir.path());
  c.architecture = "D8-D1";
  c.train.epochs = 1;
  std::ostringstream log;
  const auto ckpts = cmd_bag(c, 2, log);
  ASSERT_EQ(ckpts.size(), 2u);
  EXPECT_EQ(ckpts[1].filename(), "bag_model_1.ckpt");
  EXPECT_TRUE(fs::exists(dir / "bag_history_0.csv"));
  EXPECT_NE(test::slurp(ckpts[0]), test::slurp(ckpts[1]));

  const auto p = cmd_predict(predict_options(ckpts, dir / "pred"), log);
  const PredictedMapSet s = import_predicted_ionex(read_ionex_file(p.ionex[0]));
  EXPECT_EQ(s.k, 2);
  // A single deterministic model has no spread to report.
  EXPECT_THROW(cmd_predict(predict_options({ckpts[0]}, dir / "single"), log), ConfigError);
}

TEST_F(Pipeline, Errors) {
  test::TempDir dir;
  std::ostringstream log;
  RunConfig c = config(dir.path());
  c.seed.reset();
  EXPECT_THROW(cmd_train(c, log), ConfigError);
  c = config(dir.path());
  c.holdout = {make_day(2009, 1, 1), make_day(2009, 1, 2), make_day(2009, 1, 3)};
  EXPECT_THROW(cmd_train(c, log), ConfigError);
  c = config(dir.path());
  c.spaceweather = dir / "none.csv";
  EXPECT_THROW(cmd_train(c, log), IoError);
  EXPECT_THROW(cmd_bag(config(dir.path()), 0, log), ConfigError);

  auto o = predict_options({dir / "none.ckpt"}, dir.path());
  EXPECT_THROW(cmd_predict(o, log), IoError);
  o.seed.reset();
  EXPECT_THROW(cmd_predict(o, log), ConfigError);
  o = predict_options({dir / "none.ckpt"}, dir.path());
  o.k = 1;
  EXPECT_THROW(cmd_predict(o, log), ConfigError);

  std::ostringstream out;
  EXPECT_THROW(cmd_evaluate(dir / "none.ionex", truth(), std::nullopt, 10.0, dir.path(), out), IoError);
  EXPECT_THROW(cmd_evaluate(truth(), truth(), std::nullopt, 0.0, dir.path(), out), ConfigError);
}

}  // namespace
}  // namespace vtec
