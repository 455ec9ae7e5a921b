#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "test_util.hpp"
#include "vtec/calibrate.hpp"
#include "vtec/errors.hpp"

namespace vtec {
namespace {

const double kMad = std::sqrt(2.0 / std::numbers::pi);

std::vector<CalibrationPair> exact_pairs(double factor, std::size_t n = 400) {
  std::vector<CalibrationPair> out;
  for (std::size_t k = 0; k < n; ++k) {
    const double s = 0.2 + 0.01 * double(k % 300);
    out.push_back({s, factor * kMad * s, -89.0 + double(k % 179)});
  }
  return out;
}

TEST(Calibrate, MadFactor) { EXPECT_DOUBLE_EQ(gaussian_mad_factor(), kMad); }

TEST(Calibrate, BandLayout) {
  EXPECT_EQ(band_count(10), 18u);
  EXPECT_EQ(band_count(7), 26u);
  EXPECT_EQ(band_count(180), 1u);
  EXPECT_THROW(band_count(0), ConfigError);
  EXPECT_THROW(band_count(-5), ConfigError);
  EXPECT_EQ(band_index(-90, 10), 0u);
  EXPECT_EQ(band_index(-80.0001, 10), 0u);
  EXPECT_EQ(band_index(-80, 10), 1u);  // lower edge belongs to the upper band
  EXPECT_EQ(band_index(0, 10), 9u);
  EXPECT_EQ(band_index(87.5, 10), 17u);
  EXPECT_EQ(band_index(90, 10), 17u);
  EXPECT_EQ(band_index(90, 7), 25u);
  const auto id = CalibrationModel::identity(7);
  EXPECT_DOUBLE_EQ(id.bands().back().lat_hi, 90.0);
  EXPECT_DOUBLE_EQ(id.bands().back().lat_lo, 85.0);
}

TEST(Calibrate, IdentityPassesThrough) {
  const auto id = CalibrationModel::identity();
  for (double lat : {-90.0, -12.5, 0.0, 90.0}) EXPECT_DOUBLE_EQ(apply_calibration(id, 1.7, lat), 1.7);
}

TEST(Calibrate, GaussianMadPairsGiveIdentityFit) {
  const auto m = fit_calibration(exact_pairs(1.0), 180.0);
  EXPECT_NEAR(m.bands()[0].scale, 1.0, 1e-6);
  EXPECT_NEAR(m.bands()[0].offset, 0.0, 1e-6);
}

TEST(Calibrate, DoubledErrorsGiveScaleTwo) {
  const auto m = fit_calibration(exact_pairs(2.0), 180.0);
  EXPECT_NEAR(m.bands()[0].scale, 2.0, 1e-6);
  EXPECT_NEAR(m.bands()[0].offset, 0.0, 1e-6);
  EXPECT_NEAR(apply_calibration(m, 1.5, 10.0), 3.0, 1e-6);
}

// Gaussian errors whose true standard deviation is 2 * sigma_raw + 0.5.
TEST(Calibrate, SimulationRecoversScaleAndOffset) {
  std::mt19937_64 rng(20090101);
  std::uniform_real_distribution<double> sig(0.0, 1.0), lat(-90.0, 90.0);
  std::normal_distribution<double> n01;
  std::vector<CalibrationPair> pairs;
  for (int k = 0; k < 100000; ++k) {
    const double s = sig(rng);
    pairs.push_back({s, std::abs((2.0 * s + 0.5) * n01(rng)), lat(rng)});
  }
  const auto m = fit_calibration(pairs, 180.0);
  EXPECT_NEAR(m.bands()[0].scale, 2.0, 0.05 * 2.0);
  EXPECT_NEAR(m.bands()[0].offset, 0.5, 0.05 * 0.5);
  EXPECT_EQ(m.bands()[0].pairs, 100000u);
}

TEST(Calibrate, SparseBandsInheritGlobalFit) {
  auto pairs = exact_pairs(1.0, 200);
  for (auto& p : pairs) p.lat = 5.0;                          // band 9, scale 1
  for (int k = 0; k < 29; ++k) pairs.push_back({1.0, 10.0, -85.0});  // band 0, too few
  const auto m = fit_calibration(pairs, 10.0);
  EXPECT_NEAR(m.bands()[9].scale, 1.0, 1e-6);
  EXPECT_EQ(m.bands()[9].pairs, 200u);
  const auto global = fit_calibration(pairs, 180.0).bands()[0];
  for (std::size_t b : {0u, 1u, 17u}) {
    EXPECT_DOUBLE_EQ(m.bands()[b].scale, global.scale);
    EXPECT_DOUBLE_EQ(m.bands()[b].offset, global.offset);
    EXPECT_EQ(m.bands()[b].pairs, 0u);
  }
  // Exactly the threshold gets its own fit.
  for (int k = 0; k < 1; ++k) pairs.push_back({1.0, 10.0, -85.0});
  EXPECT_EQ(fit_calibration(pairs, 10.0).bands()[0].pairs, 30u);
}

TEST(Calibrate, FitIsNonnegative) {
  // Errors shrink as sigma grows: unconstrained slope is negative.
  std::vector<CalibrationPair> pairs;
  for (int k = 0; k < 100; ++k) pairs.push_back({0.1 * k, 10.0 - 0.09 * k, 0.0});
  const auto b = fit_calibration(pairs, 180.0).bands()[0];
  EXPECT_EQ(b.scale, 0.0);
  EXPECT_GT(b.offset, 0.0);
  // Errors far below the raw spread with a large floor: negative intercept.
  pairs.clear();
  for (int k = 1; k <= 100; ++k) pairs.push_back({double(k), kMad * (2.0 * k - 50.0 > 0 ? 2.0 * k - 50.0 : 0.0), 0.0});
  const auto c = fit_calibration(pairs, 180.0).bands()[0];
  EXPECT_GE(c.scale, 0.0);
  EXPECT_EQ(c.offset, 0.0);
}

TEST(Calibrate, ApplyIsMonotoneInSigma) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 5.0), lat(-90, 90);
  std::vector<CalibrationPair> pairs;
  for (int k = 0; k < 5000; ++k) pairs.push_back({u(rng), u(rng), lat(rng)});
  const auto m = fit_calibration(pairs);
  for (int k = 0; k < 1000; ++k) {
    const double a = u(rng), b = u(rng), l = lat(rng);
    if (a <= b) EXPECT_LE(apply_calibration(m, a, l), apply_calibration(m, b, l));
  }
}

TEST(Calibrate, FittedBandsAreCalibratedOnTheirOwnPairs) {
  // Underestimation that grows toward the poles.
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> sig(0.2, 3.0), lat(-90.0, 90.0);
  std::normal_distribution<double> n01;
  std::vector<CalibrationPair> pairs;
  for (int k = 0; k < 50000; ++k) {
    const double s = sig(rng), l = lat(rng);
    pairs.push_back({s, std::abs((1.0 + std::abs(l) / 90.0) * s * n01(rng)), l});
  }
  const auto m = fit_calibration(pairs);
  std::vector<double> err(18, 0.0), cal(18, 0.0);
  for (const auto& p : pairs) {
    const std::size_t b = band_index(p.lat, 10);
    err[b] += p.abs_error;
    cal[b] += apply_calibration(m, p.sigma_raw, p.lat);
  }
  for (std::size_t b = 0; b < 18; ++b) {
    const double ratio = err[b] / (kMad * cal[b]);
    EXPECT_GE(ratio, 0.9) << b;
    EXPECT_LE(ratio, 1.1) << b;
  }
  EXPECT_GT(m.bands()[0].scale, m.bands()[9].scale);
}

TEST(Calibrate, Errors) {
  EXPECT_THROW(fit_calibration(std::vector<CalibrationPair>{}), ConfigError);
  EXPECT_THROW(fit_calibration(std::vector<CalibrationPair>{{NAN, 1.0, 0.0}}), ConfigError);
  EXPECT_THROW(fit_calibration(std::vector<CalibrationPair>{{-1.0, 1.0, 0.0}}), ConfigError);
  EXPECT_THROW(CalibrationModel(10.0, std::vector<CalibrationBand>(3)), ConfigError);
}

TEST(Calibrate, CsvRoundTrip) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 3.0), lat(-90, 90);
  std::vector<CalibrationPair> pairs;
  for (int k = 0; k < 3000; ++k) pairs.push_back({u(rng), u(rng), lat(rng)});
  const auto m = fit_calibration(pairs, 15.0);
  const std::string csv = write_calibration_csv(m);
  EXPECT_EQ(csv.rfind("band_lo,band_hi,scale,offset\n-90,-75,", 0), 0u);
  const auto back = parse_calibration_csv(csv);
  EXPECT_DOUBLE_EQ(back.band_width(), 15.0);
  ASSERT_EQ(back.bands().size(), m.bands().size());
  for (std::size_t b = 0; b < m.bands().size(); ++b) {
    EXPECT_EQ(back.bands()[b].scale, m.bands()[b].scale);
    EXPECT_EQ(back.bands()[b].offset, m.bands()[b].offset);
  }
  test::TempDir dir;
  {
    std::ofstream(dir / "cal.csv") << csv;
  }
  EXPECT_EQ(read_calibration_file(dir / "cal.csv").bands().size(), 12u);
  EXPECT_THROW(read_calibration_file(dir / "none.csv"), IoError);
}

TEST(Calibrate, CsvErrors) {
  EXPECT_THROW(parse_calibration_csv("lo,hi,scale,offset\n"), ParseError);
  EXPECT_THROW(parse_calibration_csv("band_lo,band_hi,scale,offset\n"), ParseError);
  EXPECT_THROW(parse_calibration_csv("band_lo,band_hi,scale,offset\n-90,90,1\n"), ParseError);
  EXPECT_THROW(parse_calibration_csv("band_lo,band_hi,scale,offset\n-90,90,x,0\n"), ParseError);
  EXPECT_THROW(parse_calibration_csv("band_lo,band_hi,scale,offset\n-90,90,-1,0\n"), ParseError);
  EXPECT_THROW(parse_calibration_csv("band_lo,band_hi,scale,offset\n-90,0,1,0\n10,90,1,0\n"), ParseError);
  EXPECT_NO_THROW(parse_calibration_csv("band_lo,band_hi,scale,offset\r\n-90,90,1,0\r\n"));
}

}  // namespace
}  // namespace vtec
