#include <doctest.h>

#include <cmath>
#include <random>

#include "mfk/errors.hpp"
#include "mfk/metrics.hpp"
#include "mfk/model.hpp"
#include "support.hpp"

using namespace mfk;

namespace {

EvalSet make(std::initializer_list<double> truth, std::initializer_list<double> pred) {
  EvalSet e;
  e.truth = Eigen::Map<const Eigen::VectorXd>(truth.begin(), truth.size());
  e.pred_mean = Eigen::Map<const Eigen::VectorXd>(pred.begin(), pred.size());
  return e;
}

}  // namespace

TEST_CASE("rmse") {
  CHECK(rmse(make({1, 2, 3}, {1, 2, 3})) == 0.0);
  CHECK(std::abs(rmse(make({0, 0}, {3, 4})) - std::sqrt(12.5)) < 1e-14);
  const EvalSet e = make({0.3, -1.0, 2.0}, {0.1, 0.5, 1.0});
  EvalSet scaled = e;
  scaled.truth *= -3.0;
  scaled.pred_mean *= -3.0;
  CHECK(std::abs(rmse(scaled) - 3.0 * rmse(e)) < 1e-14);
  CHECK_THROWS_AS(rmse(EvalSet{}), Error);
  CHECK_THROWS_AS(rmse(make({1, 2}, {1})), ShapeError);
}

TEST_CASE("maxae") {
  CHECK(maxae(make({0, 0}, {3, -4})) == 4.0);
  CHECK(maxae(make({1, 2}, {1, 2})) == 0.0);
  const EvalSet e = make({0.3, -1.0, 2.0, 5.0}, {0.1, 0.5, 1.0, 4.0});
  CHECK(maxae(e) >= rmse(e));
  CHECK_THROWS_AS(maxae(EvalSet{}), Error);
}

TEST_CASE("q2") {
  CHECK(q2(make({0, 1, 2}, {0, 1, 2})) == 1.0);
  CHECK(std::abs(q2(make({0, 1, 2}, {1, 1, 1}))) < 1e-15);
  CHECK(std::abs(q2(make({0, 1, 2}, {0, 1, 3})) - 0.5) < 1e-15);
  CHECK(q2(make({0, 1, 2}, {5, -3, 8})) <= 1.0);
  CHECK_THROWS_AS(q2(make({2, 2, 2}, {1, 2, 3})), Error);
  CHECK_THROWS_AS(q2(make({2}, {2})), Error);
}

TEST_CASE("rimse") {
  EvalSet e;
  e.pred_var = Eigen::Vector2d(0.0, 0.0);
  CHECK(rimse(e) == 0.0);
  e.pred_var = Eigen::Vector2d(1.0, 4.0);
  CHECK(std::abs(rimse(e) - std::sqrt(2.5)) < 1e-15);
  e.pred_var = Eigen::Vector2d(4.0, 1.0);
  CHECK(std::abs(rimse(e) - std::sqrt(2.5)) < 1e-15);
  CHECK_THROWS_AS(rimse(EvalSet{}), Error);
  e.pred_var = Eigen::Vector2d(-1.0, 1.0);
  CHECK_THROWS_AS(rimse(e), Error);
}

TEST_CASE("rimse tracks rmse on a well-specified process") {
  const KernelSpec k = matern52(Eigen::VectorXd::Constant(1, 0.2));
  double ratio = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Design all = testsupport::random_points(60, 1, seed);
    Eigen::MatrixXd C = correlation_matrix(all, k).matrix * 2.0;
    const Eigen::MatrixXd L = C.llt().matrixL();
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g;
    const Eigen::VectorXd y = L * Eigen::VectorXd::NullaryExpr(60, [&](Eigen::Index) { return g(rng); });
    LevelData lv;
    lv.design = all.topRows(20);
    lv.observations = y.head(20);
    FitOptions o;
    o.kernels.emplace_back(k);
    const MultiFidelityModel m = fit({lv}, o);
    const auto pred = predict_batch(m, all.bottomRows(40), PredictionMode::Simple);
    EvalSet e;
    e.truth = y.tail(40);
    e.pred_mean.resize(40);
    e.pred_var.resize(40);
    for (int i = 0; i < 40; ++i) {
      e.pred_mean[i] = pred[i].top_mean();
      e.pred_var[i] = pred[i].top_variance();
    }
    ratio += rimse(e) / rmse(e);
  }
  ratio /= 20.0;
  CHECK(ratio > 0.5);
  CHECK(ratio < 2.0);
}
