#include <doctest.h>

#include "mfk/errors.hpp"
#include "mfk/joint_oracle.hpp"
#include "support.hpp"

using namespace mfk;
using testsupport::rel_diff;

namespace {

std::vector<JointLevelParams> plain_params(int s, int dim, double sigma2, double rho) {
  std::vector<JointLevelParams> p(s);
  for (int t = 0; t < s; ++t) {
    p[t].beta = Eigen::VectorXd::Constant(1, 0.5 * t);
    if (t > 0) p[t].beta_rho = Eigen::VectorXd::Constant(1, rho);
    p[t].sigma2 = sigma2;
    p[t].kernel = matern52(Eigen::VectorXd::Constant(dim, 0.3));
  }
  return p;
}

}  // namespace

TEST_CASE("one level gives sigma2 times the correlation matrix") {
  auto levels = testsupport::random_instance({9}, 2, 1);
  const JointModel jm = build_joint(levels, plain_params(1, 2, 1.7, 0.0));
  const Eigen::MatrixXd R = correlation_matrix(levels[0].design, jm.params[0].kernel).matrix;
  CHECK((jm.V - 1.7 * R).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("zero rho decouples the levels") {
  auto levels = testsupport::random_instance({10, 5}, 1, 2);
  const JointModel jm = build_joint(levels, plain_params(2, 1, 1.0, 0.0));
  CHECK(jm.V.topRightCorner(10, 5).cwiseAbs().maxCoeff() == 0.0);
  const Eigen::VectorXd x = Eigen::VectorXd::Constant(1, 0.37);
  const JointPrediction before = joint_predict(jm, x);
  levels[0].observations.array() += 3.0;
  auto shifted = levels;
  shifted[1].lower_observations.reset();
  const JointPrediction after = joint_predict(build_joint(shifted, plain_params(2, 1, 1.0, 0.0)), x);
  CHECK(std::abs(before.mean - after.mean) < 1e-10);
  CHECK(std::abs(before.variance - after.variance) < 1e-12);
}

TEST_CASE("unit rho with no discrepancy copies the lower covariance") {
  auto levels = testsupport::random_instance({8, 4}, 1, 3);
  auto params = plain_params(2, 1, 1.0, 1.0);
  params[1].sigma2 = 0.0;
  const JointModel jm = build_joint(levels, params);
  const auto map = nest_map(levels[1].design, levels[0].design, 2);
  for (int i = 0; i < 4; ++i)
    for (int k = 0; k < 4; ++k) CHECK(std::abs(jm.V(8 + i, 8 + k) - jm.V(map[i], map[k])) < 1e-14);
}

TEST_CASE("joint covariance is symmetric") {
  auto levels = testsupport::random_instance({12, 6, 3}, 2, 4, true);
  auto params = plain_params(3, 2, 1.3, 0.8);
  for (int t = 1; t < 3; ++t) params[t].beta_rho = Eigen::Vector2d(0.8, 0.4);
  const JointModel jm = build_joint(levels, params);
  CHECK((jm.V - jm.V.transpose()).cwiseAbs().maxCoeff() == 0.0);
  const Eigen::Vector2d a(0.1, 0.7), b(0.6, 0.2);
  for (int t = 0; t < 3; ++t)
    for (int u = 0; u < 3; ++u) CHECK(joint_covariance(jm, t, a, u, b, false) == joint_covariance(jm, u, b, t, a, false));
}

TEST_CASE("one level matches simple kriging") {
  auto levels = testsupport::random_instance({15}, 1, 5);
  const MultiFidelityModel m = fit(levels, testsupport::fixed_kernels(1, 1));
  const JointModel jm = build_joint(levels, joint_params(m, m.sigma2_eml()));
  const Design q = testsupport::random_points(40, 1, 6);
  for (int i = 0; i < q.rows(); ++i) {
    const Prediction p = predict_simple(m, q.row(i).transpose());
    const JointPrediction j = joint_predict(jm, q.row(i).transpose());
    CHECK(rel_diff(p.top_mean(), j.mean, 1.0) < 1e-10);
    CHECK(rel_diff(p.top_variance(), j.variance, testsupport::variance_floor(m)) < 1e-8);
  }
}

TEST_CASE("joint and recursive predictions agree") {
  for (bool linear : {false, true}) {
    auto levels = testsupport::random_instance({50, 10}, 1, 7, linear);
    const MultiFidelityModel m = fit(levels, testsupport::fixed_kernels(2, 1));
    const JointModel jm = build_joint(levels, joint_params(m, m.sigma2_eml()));
    const Design q = testsupport::random_points(50, 1, 8);
    for (int i = 0; i < q.rows(); ++i) {
      const Prediction p = predict_simple(m, q.row(i).transpose());
      const JointPrediction j = joint_predict(jm, q.row(i).transpose());
      CHECK(rel_diff(p.top_mean(), j.mean, 1.0) < 1e-8);
      CHECK(rel_diff(p.top_variance(), j.variance, testsupport::variance_floor(m)) < 1e-8);
    }
  }
}

TEST_CASE("timed comparison reports agreement") {
  const TimingReport r = timed_fit_predict({60, 12}, 2, 1, 20);
  CHECK(r.max_mean_rel_diff < 1e-8);
  CHECK(r.max_variance_rel_diff < 1e-8);
  CHECK(r.recursive_seconds > 0.0);
}

TEST_CASE("parameter shape errors") {
  auto levels = testsupport::random_instance({8, 4}, 1, 3);
  auto params = plain_params(2, 1, 1.0, 1.0);
  params[1].beta_rho = Eigen::Vector2d(1.0, 0.0);
  CHECK_THROWS_AS(build_joint(levels, params), ShapeError);
  CHECK_THROWS_AS(build_joint(levels, plain_params(1, 1, 1.0, 1.0)), ShapeError);
}
