#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "svic/meta.hpp"
#include "svic/rng.hpp"
#include "test_helpers.hpp"

using namespace svic;
using svic_test::TempDir;

namespace {

ImportanceSummary make_summary(std::uint64_t id, const std::vector<double>& mean_abs,
                               const std::vector<double>& se, double loss = 0.5) {
  ImportanceSummary s;
  s.model_id = id;
  for (size_t j = 0; j < mean_abs.size(); ++j) s.var_names.push_back("v" + std::to_string(j));
  s.mean_abs = mean_abs;
  s.se = se;
  s.valid_loss = loss;
  return s;
}

}  // namespace

TEST_CASE("homogeneous studies have zero between-model variance") {
  const std::vector<double> y = {0.4, 0.4, 0.4, 0.4};
  const std::vector<double> s = {0.1, 0.1, 0.1, 0.1};
  CHECK(dl_tau2(y, s) == 0.0);
}

TEST_CASE("hand-evaluated DerSimonian-Laird fixture") {
  const std::vector<double> y = {0.0, 2.0};
  const std::vector<double> s = {1.0, 1.0};
  // w = (1,1), Q = 2, tau2 = (2-1)/(2-1) = 1
  CHECK(dl_tau2(y, s) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("tau2 is invariant to location shifts") {
  const std::vector<double> y = {0.3, 0.9, 0.5, 1.4};
  const std::vector<double> s = {0.1, 0.2, 0.15, 0.3};
  const double base = dl_tau2(y, s);
  std::vector<double> shifted = y;
  for (auto& v : shifted) v += 17.5;
  CHECK(dl_tau2(shifted, s) == doctest::Approx(base).epsilon(1e-9));
}

TEST_CASE("all-zero standard errors degrade to the sample variance") {
  const std::vector<double> y = {1.0, 2.0, 3.0};
  const std::vector<double> s = {0.0, 0.0, 0.0};
  CHECK(dl_tau2(y, s) == doctest::Approx(1.0).epsilon(1e-12));  // var{1,2,3} = 1
}

TEST_CASE("pooling with equal weights is the arithmetic mean") {
  const std::vector<double> y = {0.2, 0.4, 0.9};
  const std::vector<double> s = {0.3, 0.3, 0.3};
  const Pooled p = pool(y, s, 0.0);
  CHECK(p.mean == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("hand-evaluated pooling fixture") {
  const std::vector<double> y = {0.0, 2.0};
  const std::vector<double> s = {1.0, 1.0};
  const Pooled p = pool(y, s, 1.0);
  CHECK(p.mean == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(p.se == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("a near-exact model dominates the pooled mean when tau2 is zero") {
  const std::vector<double> y = {0.8, 0.1, 0.2};
  const std::vector<double> s = {1e-9, 1.0, 1.0};
  const Pooled p = pool(y, s, 0.0);
  CHECK(p.mean == doctest::Approx(0.8).epsilon(1e-6));
}

TEST_CASE("prediction interval degenerates with zero spread") {
  const PredictionInterval pi = prediction_interval(0.7, 0.0, 0.0, 10);
  CHECK(pi.low == 0.7);
  CHECK(pi.high == 0.7);
}

TEST_CASE("prediction interval approaches the normal quantile for large M") {
  const PredictionInterval pi = prediction_interval(0.0, 0.0, 1.0, 100000);
  CHECK(pi.high == doctest::Approx(1.96).epsilon(1e-3));
  CHECK(pi.low == doctest::Approx(-1.96).epsilon(1e-3));
}

TEST_CASE("t quantile matches the table value for 8 degrees of freedom") {
  CHECK(student_t_975(8) == doctest::Approx(2.306).epsilon(1e-3));
  const PredictionInterval pi = prediction_interval(0.0, 0.1, 0.04, 10);
  CHECK(pi.high == doctest::Approx(student_t_975(8) * std::sqrt(0.05)).epsilon(1e-12));
}

TEST_CASE("prediction interval needs at least three models") {
  CHECK_THROWS_AS(prediction_interval(0.0, 0.1, 0.0, 2), ValidationError);
}

TEST_CASE("prediction interval contains the mean and widens with tau2") {
  double prev_width = -1.0;
  for (double tau2 : {0.0, 0.01, 0.04, 0.2, 1.0}) {
    const PredictionInterval pi = prediction_interval(0.3, 0.05, tau2, 12);
    CHECK(pi.low <= 0.3);
    CHECK(0.3 <= pi.high);
    const double width = pi.high - pi.low;
    CHECK(width > prev_width);
    prev_width = width;
  }
}

TEST_CASE("degenerate ensemble pools to the common value") {
  std::vector<ImportanceSummary> studies;
  for (int i = 0; i < 5; ++i) studies.push_back(make_summary(i, {0.3, 0.1}, {0.02, 0.01}));
  const VicResult vic = shapleyvic_values(studies);
  CHECK(vic.variables[0].pooled_mean == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(vic.variables[0].tau2 == 0.0);
  CHECK(vic.variables[1].pooled_mean == doctest::Approx(0.1).epsilon(1e-12));
  for (const auto& v : vic.variables) {
    CHECK(v.has_pi);
    CHECK(v.pi_low <= v.pooled_mean);
    CHECK(v.pooled_mean <= v.pi_high);
  }
}

TEST_CASE("meta-analysis recovers planted heterogeneity") {
  // y ~ Normal(1, tau2 = 0.04), known se = 0.05, M = 200
  Rng rng(314159);
  std::vector<ImportanceSummary> studies;
  for (int i = 0; i < 200; ++i) {
    const double y = 1.0 + 0.2 * rng.normal();
    studies.push_back(make_summary(i, {y, 0.5}, {0.05, 0.05}));
  }
  const VicResult vic = shapleyvic_values(studies);
  CHECK(vic.variables[0].pooled_mean > 0.95);
  CHECK(vic.variables[0].pooled_mean < 1.05);
  CHECK(vic.variables[0].tau2 > 0.025);
  CHECK(vic.variables[0].tau2 < 0.055);
}

TEST_CASE("pooling is invariant to the order of the summaries") {
  std::vector<ImportanceSummary> studies;
  Rng rng(8);
  for (int i = 0; i < 12; ++i)
    studies.push_back(
        make_summary(i, {0.5 + 0.1 * rng.normal(), 0.2}, {0.05, 0.03}));
  const VicResult a = shapleyvic_values(studies);
  std::reverse(studies.begin(), studies.end());
  const VicResult b = shapleyvic_values(studies);
  for (size_t j = 0; j < a.variables.size(); ++j) {
    CHECK(a.variables[j].pooled_mean == doctest::Approx(b.variables[j].pooled_mean).epsilon(1e-12));
    CHECK(a.variables[j].tau2 == doctest::Approx(b.variables[j].tau2).epsilon(1e-12));
  }
}

TEST_CASE("scale equivariance of the pooled quantities") {
  const std::vector<double> y = {0.2, 0.5, 0.8, 0.4};
  const std::vector<double> s = {0.05, 0.1, 0.07, 0.06};
  const double c = 3.5;
  const double tau2 = dl_tau2(y, s);
  const Pooled p = pool(y, s, tau2);
  const PredictionInterval pi = prediction_interval(p.mean, p.se, tau2, y.size());

  std::vector<double> yc = y, sc = s;
  for (auto& v : yc) v *= c;
  for (auto& v : sc) v *= c;
  const double tau2c = dl_tau2(yc, sc);
  const Pooled pc = pool(yc, sc, tau2c);
  const PredictionInterval pic = prediction_interval(pc.mean, pc.se, tau2c, yc.size());

  CHECK(std::sqrt(tau2c) == doctest::Approx(c * std::sqrt(tau2)).epsilon(1e-9));
  CHECK(pc.mean == doctest::Approx(c * p.mean).epsilon(1e-9));
  CHECK(pc.se == doctest::Approx(c * p.se).epsilon(1e-9));
  CHECK(pic.low == doctest::Approx(c * pi.low).epsilon(1e-9));
  CHECK(pic.high == doctest::Approx(c * pi.high).epsilon(1e-9));
}

TEST_CASE("pooled se never exceeds any single model's uncertainty") {
  const std::vector<double> y = {0.2, 0.5, 0.8, 0.4, 0.6};
  const std::vector<double> s = {0.05, 0.1, 0.07, 0.06, 0.2};
  const double tau2 = dl_tau2(y, s);
  const Pooled p = pool(y, s, tau2);
  double best = 1e300;
  for (double v : s) best = std::min(best, std::sqrt(v * v + tau2));
  CHECK(p.se <= best + 1e-15);
}

TEST_CASE("inconsistent variable sets are rejected") {
  std::vector<ImportanceSummary> studies;
  studies.push_back(make_summary(0, {0.1, 0.2}, {0.01, 0.01}));
  studies.push_back(make_summary(1, {0.1, 0.2, 0.3}, {0.01, 0.01, 0.01}));
  CHECK_THROWS_AS(shapleyvic_values(studies), ValidationError);
}

TEST_CASE("vic csv round-trips to at least 12 significant digits") {
  TempDir tmp("vic");
  std::vector<ImportanceSummary> studies;
  Rng rng(99);
  for (int i = 0; i < 8; ++i)
    studies.push_back(make_summary(
        i, {0.123456789012345 + 0.01 * rng.normal(), 0.7}, {0.05, 0.02}));
  const VicResult vic = shapleyvic_values(studies);
  write_vic_csv(vic, tmp.file("vic.csv"));
  const auto back = read_vic_csv(tmp.file("vic.csv"));
  REQUIRE(back.size() == vic.variables.size());
  for (size_t j = 0; j < back.size(); ++j) {
    CHECK(back[j].name == vic.variables[j].name);
    CHECK(back[j].pooled_mean == vic.variables[j].pooled_mean);  // exact round trip
    CHECK(back[j].pooled_se == vic.variables[j].pooled_se);
    CHECK(back[j].tau2 == vic.variables[j].tau2);
    CHECK(back[j].pi_low == vic.variables[j].pi_low);
    CHECK(back[j].pi_high == vic.variables[j].pi_high);
  }
}
