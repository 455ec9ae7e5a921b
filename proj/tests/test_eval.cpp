#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "test_util.hpp"
#include "vtec/errors.hpp"
#include "vtec/eval.hpp"

namespace vtec {
namespace {

const double kMad = std::sqrt(2.0 / std::numbers::pi);

// Truth file and matching prediction on the small grid with a smooth field.
struct Pair {
  IonexFile truth;
  PredictedMapSet pred;
};

Pair make_pair(double offset, double sigma, std::size_t n_epochs = 3) {
  Pair p;
  const GridSpec g = test::small_grid();
  p.truth.header.grid = g;
  p.pred.grid = g;
  p.pred.k = 10;
  for (std::size_t e = 0; e < n_epochs; ++e) {
    const UtcTime t = make_utc(2009, 1, 1, int(4 * e));
    TecMap truth(t, g), mean(t, g), sd(t, g);
    for (int i = 0; i < g.n_lat(); ++i)
      for (int j = 0; j < g.n_lon(); ++j) {
        const double v = 10.0 + i + 0.5 * j + double(e);
        truth.set(i, j, v);
        mean.set(i, j, v + offset);
        sd.set(i, j, sigma);
      }
    p.truth.tec_maps.push_back(truth);
    p.pred.epochs.push_back(t);
    p.pred.mean.push_back(mean);
    p.pred.sigma.push_back(sd);
  }
  return p;
}

ErrorRecord rec(double lat, double eps, double sigma, Regime r = Regime::Day) {
  ErrorRecord x;
  x.lat = lat;
  x.eps = eps;
  x.sigma_raw = sigma;
  x.regime = r;
  return x;
}

TEST(DayNight, LocalSolarTime) {
  EXPECT_EQ(day_night(make_utc(2009, 1, 1, 12), 0), Regime::Day);
  EXPECT_EQ(day_night(make_utc(2009, 1, 1, 12), 180), Regime::Night);
  EXPECT_EQ(day_night(make_utc(2009, 1, 1, 12), -180), Regime::Night);
  EXPECT_EQ(day_night(make_utc(2009, 1, 1, 6), 0), Regime::Day);     // LT 6 is day
  EXPECT_EQ(day_night(make_utc(2009, 1, 1, 18), 0), Regime::Night);  // LT 18 is night
  EXPECT_EQ(day_night(make_utc(2009, 1, 1, 0), 90), Regime::Day);    // LT 6
  EXPECT_EQ(day_night(make_utc(2009, 1, 1, 0), -90), Regime::Night); // LT 18
  EXPECT_EQ(day_night(make_utc(2009, 1, 1, 2), -45), Regime::Night); // LT 23
  EXPECT_STREQ(regime_name(Regime::Day), "day");
  EXPECT_STREQ(regime_name(Regime::Night), "night");
}

TEST(ErrorRecords, PerfectPredictionHasZeroError) {
  const auto p = make_pair(0.0, 1.0);
  const auto r = error_records(p.pred, p.truth);
  ASSERT_EQ(r.size(), 45u);
  for (const auto& x : r) {
    EXPECT_EQ(x.eps, 0.0);
    EXPECT_EQ(x.sigma_raw, 1.0);
    EXPECT_EQ(x.regime, day_night(x.epoch, x.lon));
    EXPECT_FALSE(x.sigma_cal);
  }
  EXPECT_EQ(r[1].lat, 10.0);
  EXPECT_EQ(r[1].lon, -10.0);
}

TEST(ErrorRecords, SignedPredictedMinusTruth) {
  const auto p = make_pair(1.25, 1.0);
  for (const auto& x : error_records(p.pred, p.truth)) EXPECT_DOUBLE_EQ(x.eps, 1.25);
}

TEST(ErrorRecords, MaskedTruthCellSkipped) {
  auto p = make_pair(0.0, 1.0);
  p.truth.tec_maps[1].set_missing(2, 3);
  EXPECT_EQ(error_records(p.pred, p.truth).size(), 44u);
}

TEST(ErrorRecords, TruthMayHoldExtraEpochs) {
  auto p = make_pair(0.0, 1.0);
  p.pred.epochs.erase(p.pred.epochs.begin());
  p.pred.mean.erase(p.pred.mean.begin());
  p.pred.sigma.erase(p.pred.sigma.begin());
  EXPECT_EQ(error_records(p.pred, p.truth).size(), 30u);
}

TEST(ErrorRecords, MismatchesRejected) {
  auto p = make_pair(0.0, 1.0);
  p.truth.tec_maps.pop_back();
  EXPECT_THROW(error_records(p.pred, p.truth), ConfigError);
  auto q = make_pair(0.0, 1.0);
  q.truth.header.grid.lon_step = 5;
  EXPECT_THROW(error_records(q.pred, q.truth), ConfigError);
}

TEST(ErrorRecords, FullIgsDayGives62196Records) {
  const GridSpec g = igs_grid();
  IonexFile truth;
  truth.header.grid = g;
  PredictedMapSet pred;
  pred.grid = g;
  for (int h = 0; h < 24; h += 2) {
    TecMap m(make_utc(2009, 1, 1, h), g);
    for (int i = 0; i < g.n_lat(); ++i)
      for (int j = 0; j < g.n_lon(); ++j) m.set(i, j, 5.0);
    truth.tec_maps.push_back(m);
    pred.epochs.push_back(m.epoch());
    pred.mean.push_back(m);
    pred.sigma.push_back(m);
  }
  EXPECT_EQ(error_records(pred, truth).size(), 62196u);
}

TEST(ErrorRecords, IonexRoundTripChangesErrorByLessThanOneQuantum) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 40.0);
  auto p = make_pair(0.0, 1.0);
  for (auto& m : p.pred.mean)
    for (int i = 0; i < m.n_lat(); ++i)
      for (int j = 0; j < m.n_lon(); ++j) m.set(i, j, u(rng));
  const IonexFile f = export_predicted_ionex(p.pred);
  const double quantum = std::pow(10.0, f.header.exponent);
  const auto back = import_predicted_ionex(parse_ionex(write_ionex(f)));
  const auto a = error_records(p.pred, p.truth);
  const auto b = error_records(back, p.truth);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t k = 0; k < a.size(); ++k) EXPECT_LT(std::abs(a[k].eps - b[k].eps), quantum);
}

TEST(BandStats, AllUnitErrors) {
  auto p = make_pair(1.0, 0.5);
  const auto stats = band_stats(error_records(p.pred, p.truth));
  ASSERT_EQ(stats.size(), 18u);
  std::size_t populated = 0;
  for (const auto& b : stats)
    for (const auto* s : {&b.day, &b.night}) {
      if (s->count == 0) {
        EXPECT_EQ(s->mean_abs_error, 0.0);
        continue;
      }
      ++populated;
      EXPECT_DOUBLE_EQ(s->mean_abs_error, 1.0);
      EXPECT_DOUBLE_EQ(s->max_abs_error, 1.0);
      EXPECT_DOUBLE_EQ(s->rms_error, 1.0);
      EXPECT_DOUBLE_EQ(s->mean_sigma, 0.5);
    }
  EXPECT_GT(populated, 0u);
}

TEST(BandStats, SingleRecord) {
  const std::vector<ErrorRecord> r{rec(33.0, -2.5, 0.7, Regime::Night)};
  const auto stats = band_stats(r);
  const auto& s = stats[12].night;
  EXPECT_EQ(s.count, 1u);
  EXPECT_DOUBLE_EQ(s.mean_abs_error, 2.5);
  EXPECT_DOUBLE_EQ(s.max_abs_error, 2.5);
  EXPECT_DOUBLE_EQ(s.rms_error, 2.5);
  EXPECT_DOUBLE_EQ(s.mean_sigma, 0.7);
  EXPECT_EQ(stats[12].day.count, 0u);
  EXPECT_DOUBLE_EQ(stats[12].lat_lo, 30.0);
  EXPECT_DOUBLE_EQ(stats[12].lat_hi, 40.0);
}

std::vector<ErrorRecord> random_records(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> lat(-90, 90), s(0.1, 3.0);
  std::normal_distribution<double> n01;
  std::bernoulli_distribution day(0.5);
  std::vector<ErrorRecord> out;
  for (std::size_t k = 0; k < n; ++k) out.push_back(rec(lat(rng), 2.0 * n01(rng), s(rng), day(rng) ? Regime::Day : Regime::Night));
  return out;
}

TEST(BandStats, MatchesBruteForce) {
  const auto r = random_records(3000, 2);
  const auto stats = band_stats(r, 20.0);
  ASSERT_EQ(stats.size(), 9u);
  for (std::size_t b = 0; b < 9; ++b) {
    for (const Regime reg : {Regime::Day, Regime::Night}) {
      double sa = 0, mx = 0, sq = 0, ss = 0;
      std::size_t n = 0;
      for (const auto& x : r) {
        if (x.regime != reg || !(x.lat >= -90 + 20.0 * b && (x.lat < -70 + 20.0 * b || b == 8))) continue;
        ++n;
        sa += std::abs(x.eps);
        mx = std::max(mx, std::abs(x.eps));
        sq += x.eps * x.eps;
        ss += x.sigma_raw;
      }
      const auto& s = reg == Regime::Day ? stats[b].day : stats[b].night;
      ASSERT_EQ(s.count, n);
      EXPECT_NEAR(s.mean_abs_error, sa / n, 1e-12);
      EXPECT_EQ(s.max_abs_error, mx);
      EXPECT_NEAR(s.rms_error, std::sqrt(sq / n), 1e-12);
      EXPECT_NEAR(s.mean_sigma, ss / n, 1e-12);
      EXPECT_GE(s.max_abs_error, s.mean_abs_error);
    }
  }
}

TEST(BandStats, CountsSumPerRegimeAndPermutationInvariant) {
  auto r = random_records(2000, 3);
  const auto a = band_stats(r);
  std::size_t day = 0, night = 0;
  for (const auto& b : a) {
    day += b.day.count;
    night += b.night.count;
  }
  EXPECT_EQ(day, std::size_t(std::count_if(r.begin(), r.end(), [](auto& x) { return x.regime == Regime::Day; })));
  EXPECT_EQ(day + night, r.size());
  std::shuffle(r.begin(), r.end(), std::mt19937_64(4));
  const auto b = band_stats(r);
  for (std::size_t k = 0; k < a.size(); ++k) {
    EXPECT_EQ(a[k].day.count, b[k].day.count);
    EXPECT_NEAR(a[k].day.mean_abs_error, b[k].day.mean_abs_error, 1e-12);
    EXPECT_NEAR(a[k].night.rms_error, b[k].night.rms_error, 1e-12);
    EXPECT_EQ(a[k].night.max_abs_error, b[k].night.max_abs_error);
  }
}

TEST(BandStats, CalibratedSigmaReportedOnlyWhenPresent) {
  auto r = random_records(500, 5);
  EXPECT_FALSE(band_stats(r)[9].day.mean_sigma_cal);
  attach_calibration(r, CalibrationModel::identity());
  const auto s = band_stats(r)[9].day;
  ASSERT_TRUE(s.mean_sigma_cal);
  EXPECT_NEAR(*s.mean_sigma_cal, s.mean_sigma, 1e-12);
}

TEST(CoverageRatio, GaussianErrorsAtStatedSigmaGiveOne) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> lat(-90, 90), s(0.5, 4.0);
  std::normal_distribution<double> n01;
  std::vector<ErrorRecord> r;
  for (int k = 0; k < 100000; ++k) {
    const double sigma = s(rng);
    r.push_back(rec(lat(rng), sigma * n01(rng), sigma));
  }
  const auto ratios = coverage_ratio(r, false, 180.0);
  ASSERT_EQ(ratios.size(), 1u);
  EXPECT_NEAR(ratios[0].ratio, 1.0, 0.05);
  for (auto& x : r) x.sigma_raw *= 0.5;
  EXPECT_NEAR(coverage_ratio(r, false, 180.0)[0].ratio, 2.0, 0.1);
}

TEST(CoverageRatio, HalvedSigmaDoublesRatio) {
  auto r = random_records(1000, 6);
  const auto a = coverage_ratio(r, false);
  for (auto& x : r) x.sigma_raw *= 0.5;
  const auto b = coverage_ratio(r, false);
  for (std::size_t k = 0; k < a.size(); ++k)
    if (a[k].count) EXPECT_NEAR(b[k].ratio, 2.0 * a[k].ratio, 1e-12);
}

TEST(CoverageRatio, EmptyBandsAreNaN) {
  const std::vector<ErrorRecord> r{rec(5, 1.0, 1.0)};
  const auto ratios = coverage_ratio(r, false);
  EXPECT_TRUE(std::isnan(ratios[0].ratio));
  EXPECT_EQ(ratios[0].count, 0u);
  EXPECT_NEAR(ratios[9].ratio, 1.0 / kMad, 1e-12);
  EXPECT_THROW(coverage_ratio(r, true), ConfigError);
}

TEST(CoverageRatio, CalibrationOnSameRecordsBringsRatioNearOne) {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> lat(-90, 90), s(0.2, 2.0);
  std::normal_distribution<double> n01;
  std::vector<ErrorRecord> r;
  for (int k = 0; k < 40000; ++k) {
    const double l = lat(rng), sigma = s(rng);
    r.push_back(rec(l, (1.5 + std::abs(l) / 90.0) * sigma * n01(rng), sigma));
  }
  attach_calibration(r, fit_calibration(calibration_pairs(r)));
  for (const auto& b : coverage_ratio(r, true)) {
    EXPECT_GE(b.ratio, 0.9) << b.lat_lo;
    EXPECT_LE(b.ratio, 1.1) << b.lat_lo;
  }
  for (const auto& b : coverage_ratio(r, false)) EXPECT_GT(b.ratio, 1.3) << b.lat_lo;
}

TEST(EvalCsv, Headers) {
  auto r = random_records(3, 7);
  const std::string rc = records_csv(r);
  EXPECT_EQ(rc.substr(0, rc.find('\n')), "epoch,lat,lon,regime,eps,sigma_raw,sigma_cal");
  EXPECT_EQ(std::count(rc.begin(), rc.end(), '\n'), 4);
  EXPECT_EQ(rc.substr(rc.size() - 2), ",\n");  // no calibrated sigma yet
  const auto stats = band_stats(r);
  const std::string bc = band_stats_csv(stats);
  EXPECT_EQ(bc.substr(0, bc.find('\n')),
            "band_lo,band_hi,regime,count,mean_abs_error,max_abs_error,rms_error,mean_sigma_raw,mean_sigma_cal");
  EXPECT_EQ(std::count(bc.begin(), bc.end(), '\n'), 1 + 36);
  std::istringstream in(bc);
  std::string line;
  std::getline(in, line);
  std::getline(in, line);
  EXPECT_EQ(line.rfind("-90,-80,day,", 0), 0u) << line;
}

}  // namespace
}  // namespace vtec
