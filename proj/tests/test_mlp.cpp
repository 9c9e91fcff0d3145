#include <doctest.h>

#include <cmath>

#include "svic/mlp.hpp"
#include "svic/rng.hpp"
#include "svic/synth.hpp"
#include "test_helpers.hpp"

using namespace svic;
using svic_test::TempDir;

namespace {

Matrix random_rows(size_t n, size_t d, std::uint64_t seed) {
  Rng rng(seed);
  Matrix m(n, d);
  for (auto& v : m.data()) v = rng.normal();
  return m;
}

std::vector<int> random_labels(size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<int> y(n);
  for (auto& v : y) v = rng.uniform01() < 0.5 ? 0 : 1;
  return y;
}

// central finite differences of the penalized loss, parameter by parameter
double max_rel_grad_error(MLPModel model, const Matrix& x, const std::vector<int>& y,
                          double lambda, double step) {
  const Gradient g = gradient(model, x, y, lambda);
  double worst = 0.0;
  auto probe = [&](double& param, double analytic) {
    const double keep = param;
    param = keep + step;
    const double up = loss(model, x, y, lambda, Exec::serial);
    param = keep - step;
    const double down = loss(model, x, y, lambda, Exec::serial);
    param = keep;
    const double fd = (up - down) / (2.0 * step);
    const double scale = std::max({std::fabs(analytic), std::fabs(fd), 1e-8});
    worst = std::max(worst, std::fabs(fd - analytic) / scale);
  };
  for (size_t l = 0; l < model.weights.size(); ++l) {
    for (size_t k = 0; k < model.weights[l].data().size(); ++k)
      probe(model.weights[l].data()[k], g.weights[l].data()[k]);
    for (size_t k = 0; k < model.biases[l].size(); ++k)
      probe(model.biases[l][k], g.biases[l][k]);
  }
  return worst;
}

}  // namespace

TEST_CASE("init_model is deterministic and shaped correctly") {
  const MLPArch arch = make_arch(2, {3});
  const MLPModel a = init_model(arch, 7);
  const MLPModel b = init_model(arch, 7);
  CHECK(a.same_params(b));
  CHECK(a.param_count() == 13);  // 2*3+3 + 3*1+1

  const MLPModel c = init_model(arch, 8);
  CHECK(!a.same_params(c));
}

TEST_CASE("fresh model output lies strictly inside (0,1)") {
  const MLPModel m = init_model(make_arch(4, {16, 8}), 3);
  const Matrix rows = random_rows(64, 4, 5);
  for (double p : predict(m, rows)) {
    CHECK(p > 0.0);
    CHECK(p < 1.0);
  }
}

TEST_CASE("all-zero model predicts one half") {
  MLPModel m = init_model(make_arch(3, {4}), 1);
  for (auto& w : m.weights) std::fill(w.data().begin(), w.data().end(), 0.0);
  const Matrix rows = random_rows(8, 3, 2);
  for (double p : predict(m, rows)) CHECK(p == 0.5);
}

TEST_CASE("duplicated rows give duplicated outputs") {
  const MLPModel m = init_model(make_arch(3, {5}), 11);
  Matrix rows = random_rows(2, 3, 4);
  for (size_t j = 0; j < 3; ++j) rows(1, j) = rows(0, j);
  const auto p = predict(m, rows);
  CHECK(p[0] == p[1]);
}

TEST_CASE("hand-built single-unit network matches the closed form") {
  MLPModel m = init_model(make_arch(2, {1}), 0);
  m.weights[0](0, 0) = 0.5;
  m.weights[0](0, 1) = -1.0;
  m.biases[0][0] = 0.25;
  m.weights[1](0, 0) = 2.0;
  m.biases[1][0] = -0.5;

  const double x[2] = {1.0, 0.5};
  const double h = std::max(0.0, 0.5 * 1.0 + (-1.0) * 0.5 + 0.25);
  const double z = 2.0 * h + (-0.5);
  const double expected = 1.0 / (1.0 + std::exp(-z));
  CHECK(predict_row(m, x) == doctest::Approx(expected).epsilon(1e-15));

  // negative preactivation: the rectifier gates it to zero
  const double x2[2] = {-2.0, 1.0};
  const double expected2 = 1.0 / (1.0 + std::exp(0.5));
  CHECK(predict_row(m, x2) == doctest::Approx(expected2).epsilon(1e-15));
}

TEST_CASE("predict validates width and finiteness") {
  const MLPModel m = init_model(make_arch(3, {4}), 1);
  CHECK_THROWS_AS(predict(m, random_rows(2, 4, 1)), ValidationError);
  Matrix bad = random_rows(2, 3, 1);
  bad(1, 2) = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(predict(m, bad), ValidationError);
}

TEST_CASE("loss of confident correct predictions is near zero") {
  MLPModel m = init_model(make_arch(2, {1}), 0);
  // big weights push the output toward the labels of the blobs
  m.weights[0](0, 0) = 40.0;
  m.weights[0](0, 1) = 40.0;
  m.biases[0][0] = 0.1;
  m.weights[1](0, 0) = 40.0;
  m.biases[1][0] = -30.0;

  Matrix rows(2, 2);
  rows(0, 0) = rows(0, 1) = 2.0;   // -> very positive logit
  rows(1, 0) = rows(1, 1) = -2.0;  // hidden gated to 0 -> logit -30
  const std::vector<int> y = {1, 0};
  CHECK(loss(m, rows, y, 0.0) <= 1e-10);
}

TEST_CASE("constant-half predictor loses ln 2 per row") {
  MLPModel m = init_model(make_arch(2, {3}), 2);
  for (auto& w : m.weights) std::fill(w.data().begin(), w.data().end(), 0.0);
  const Matrix rows = random_rows(10, 2, 6);
  const auto y = random_labels(10, 7);
  CHECK(loss(m, rows, y, 0.0) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("lambda adds exactly the squared-weight penalty") {
  const MLPModel m = init_model(make_arch(3, {6}), 9);
  const Matrix rows = random_rows(20, 3, 8);
  const auto y = random_labels(20, 9);
  const double base = loss(m, rows, y, 0.0);
  const double penalized = loss(m, rows, y, 1.0);
  CHECK(penalized - base == doctest::Approx(l2_penalty(m)).epsilon(1e-9));
}

TEST_CASE("loss is monotone in lambda with equality only at zero weights") {
  const MLPModel m = init_model(make_arch(3, {4}), 10);
  const Matrix rows = random_rows(12, 3, 11);
  const auto y = random_labels(12, 12);
  const double l1 = loss(m, rows, y, 0.01);
  const double l2 = loss(m, rows, y, 0.1);
  CHECK(l2 > l1);  // weights are nonzero after random init

  MLPModel zero = m;
  for (auto& w : zero.weights) std::fill(w.data().begin(), w.data().end(), 0.0);
  CHECK(loss(zero, rows, y, 0.01) == loss(zero, rows, y, 0.1));
}

TEST_CASE("loss rejects an empty row set") {
  const MLPModel m = init_model(make_arch(2, {3}), 1);
  CHECK_THROWS_AS(loss(m, Matrix(0, 2), {}, 0.0), ValidationError);
}

TEST_CASE("output bias gradient vanishes on a symmetric balanced batch") {
  MLPModel m = init_model(make_arch(2, {3}), 4);
  for (auto& w : m.weights) std::fill(w.data().begin(), w.data().end(), 0.0);
  Matrix rows(2, 2);
  rows(0, 0) = 1.0;
  rows(0, 1) = -1.0;
  rows(1, 0) = -1.0;
  rows(1, 1) = 1.0;
  const std::vector<int> y = {0, 1};
  const Gradient g = gradient(m, rows, y, 0.0);
  CHECK(g.biases.back()[0] == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("gradient matches central finite differences") {
  Rng rng(2024);
  for (int trial = 0; trial < 20; ++trial) {
    const int d = 2 + static_cast<int>(rng.below(4));
    const int h = 2 + static_cast<int>(rng.below(6));
    const MLPModel m = init_model(make_arch(d, {h}), rng.next_u64());
    const Matrix x = random_rows(6, static_cast<size_t>(d), rng.next_u64());
    const auto y = random_labels(6, rng.next_u64());
    const double lambda = trial % 3 == 0 ? 0.0 : 0.01 * static_cast<double>(trial);
    CHECK(max_rel_grad_error(m, x, y, lambda, 1e-5) < 1e-4);
  }
}

TEST_CASE("penalty gradient is 2 lambda w on weights and 0 on biases") {
  const MLPModel m = init_model(make_arch(3, {5}), 14);
  const Matrix x = random_rows(10, 3, 15);
  const auto y = random_labels(10, 16);
  const double lambda = 0.37;
  const Gradient g0 = gradient(m, x, y, 0.0);
  const Gradient g1 = gradient(m, x, y, lambda);
  for (size_t l = 0; l < m.weights.size(); ++l) {
    for (size_t k = 0; k < m.weights[l].data().size(); ++k)
      CHECK(g1.weights[l].data()[k] - g0.weights[l].data()[k] ==
            doctest::Approx(2.0 * lambda * m.weights[l].data()[k]).epsilon(1e-12));
    for (size_t k = 0; k < m.biases[l].size(); ++k)
      CHECK(g1.biases[l][k] == g0.biases[l][k]);
  }
}

TEST_CASE("training separates linearly separable blobs") {
  const Dataset ds = make_blobs_dataset(200, 31);
  TrainConfig cfg;
  cfg.epochs = 50;
  cfg.learning_rate = 0.1;
  cfg.seed = 5;
  const MLPModel m = train(ds.features, ds.outcome, make_arch(2, {8}), cfg);
  CHECK(mean_bce(m, ds.features, ds.outcome) < 0.1);
}

TEST_CASE("a huge penalty shrinks the weight norm") {
  const Dataset ds = make_blobs_dataset(120, 32);
  TrainConfig cfg;
  cfg.epochs = 20;
  cfg.learning_rate = 0.01;
  cfg.seed = 6;
  const MLPModel free = train(ds.features, ds.outcome, make_arch(2, {4}), cfg);
  cfg.lambda = 10.0;
  const MLPModel squeezed = train(ds.features, ds.outcome, make_arch(2, {4}), cfg);
  CHECK(l2_penalty(squeezed) < l2_penalty(free));
}

TEST_CASE("training is deterministic in the config seed") {
  const Dataset ds = make_blobs_dataset(100, 33);
  TrainConfig cfg;
  cfg.epochs = 15;
  cfg.seed = 77;
  const MLPModel a = train(ds.features, ds.outcome, make_arch(2, {6}), cfg);
  const MLPModel b = train(ds.features, ds.outcome, make_arch(2, {6}), cfg);
  CHECK(a.same_params(b));
  CHECK(mean_bce(a, ds.features, ds.outcome) == mean_bce(b, ds.features, ds.outcome));
}

TEST_CASE("divergence aborts with a numeric error") {
  const Dataset ds = make_blobs_dataset(100, 34);
  TrainConfig cfg;
  cfg.epochs = 30;
  cfg.learning_rate = 1e4;  // guaranteed blow-up
  cfg.seed = 8;
  CHECK_THROWS_AS(train(ds.features, ds.outcome, make_arch(2, {8}), cfg), NumericError);
}

TEST_CASE("model json round trip is bit-faithful") {
  TempDir tmp("model");
  const Dataset ds = make_blobs_dataset(80, 35);
  TrainConfig cfg;
  cfg.epochs = 10;
  cfg.seed = 9;
  const MLPModel m = train(ds.features, ds.outcome, make_arch(2, {5, 3}), cfg);
  save_model(m, tmp.file("m.json"));
  const MLPModel back = load_model(tmp.file("m.json"));
  CHECK(back.same_params(m));
  CHECK(back.arch.layer_sizes == m.arch.layer_sizes);
  CHECK(back.init_seed == m.init_seed);
}

TEST_CASE("arch validation rejects degenerate shapes") {
  CHECK_THROWS_AS(make_arch(3, {}), ValidationError);
  CHECK_THROWS_AS(make_arch(3, {0}), ValidationError);
  CHECK_THROWS_AS(make_arch(0, {4}), ValidationError);
}
