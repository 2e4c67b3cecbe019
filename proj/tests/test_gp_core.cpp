#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "mfk/errors.hpp"
#include "mfk/gp_core.hpp"
#include "support.hpp"

using namespace mfk;

namespace {

CholeskyFactor identity_factor(int n) { return CholeskyFactor(Eigen::MatrixXd::Identity(n, n), 0.0); }

CholeskyFactor factor_of(const Eigen::MatrixXd& R) { return CholeskyFactor(Eigen::LLT<Eigen::MatrixXd>(R).matrixL(), 0.0); }

LevelData level2(const Eigen::MatrixXd& design, const Eigen::VectorXd& z, const Eigen::VectorXd& lower, BasisSpec g) {
  LevelData lv;
  lv.design = design;
  lv.observations = z;
  lv.g_basis = std::move(g);
  lv.lower_observations = lower;
  return lv;
}

}  // namespace

TEST_CASE("basis specs") {
  CHECK(BasisSpec::parse("1,x1").to_string() == "1,x1");
  CHECK(BasisSpec::parse("1").size() == 1);
  CHECK_THROWS(BasisSpec::parse("1,1"));
  CHECK_THROWS(BasisSpec::parse("x0"));
  CHECK_THROWS(BasisSpec::parse("y2"));
  CHECK_THROWS_AS(BasisSpec::parse("1,x3").check_dim(2), ShapeError);
}

TEST_CASE("experience matrix") {
  SUBCASE("level 1 constant") {
    LevelData lv;
    lv.design = Eigen::MatrixXd::Random(3, 2);
    lv.observations = Eigen::VectorXd::Zero(3);
    CHECK(build_experience_matrix(lv) == Eigen::MatrixXd::Ones(3, 1));
  }
  SUBCASE("level 2 constant adjustment") {
    const LevelData lv = level2(Eigen::MatrixXd::Zero(2, 1), Eigen::VectorXd::Zero(2), Eigen::Vector2d(1, 2),
                                BasisSpec::constant());
    Eigen::MatrixXd expect(2, 2);
    expect << 1, 1, 2, 1;
    CHECK(build_experience_matrix(lv) == expect);
  }
  SUBCASE("level 2 linear adjustment") {
    const LevelData lv = level2(Eigen::Vector2d(0.5, 1.5), Eigen::VectorXd::Zero(2), Eigen::Vector2d(2, 4),
                                BasisSpec::constant_and_linear(0));
    const Eigen::MatrixXd H = build_experience_matrix(lv);
    Eigen::MatrixXd left(2, 2);
    left << 2, 1.0, 4, 6.0;
    CHECK(H.leftCols(2) == left);
    CHECK(H.col(2) == Eigen::Vector2d(1, 1));
  }
  SUBCASE("missing lower observations") {
    LevelData lv = level2(Eigen::Vector2d(0.5, 1.5), Eigen::VectorXd::Zero(2), Eigen::Vector2d(2, 4),
                          BasisSpec::constant());
    lv.lower_observations.reset();
    CHECK_THROWS_AS(build_experience_matrix(lv), StructuralError);
  }
}

TEST_CASE("non-informative trend and variance posterior by hand") {
  const Eigen::MatrixXd H = Eigen::MatrixXd::Ones(3, 1);
  const Eigen::Vector3d z(1, 2, 3);
  const TrendPosterior tp = trend_posterior(H, identity_factor(3), z, 1.5, PriorSpec{});
  CHECK(tp.mean[0] == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(tp.cov_scale(0, 0) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(tp.covariance(0, 0) == doctest::Approx(1.5 / 3.0).epsilon(1e-15));
  const VariancePosterior vp = variance_posterior(H, identity_factor(3), z, PriorSpec{});
  CHECK(vp.Q == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(vp.a == 1.0);
  CHECK(sigma2_eml(vp.Q, vp.a) == doctest::Approx(1.0));
  CHECK(sigma2_eml(0.0, 3.0) == 0.0);
  CHECK(sigma2_eml(6.98, 12.0) == doctest::Approx(0.2908).epsilon(1e-3));
  CHECK_THROWS_AS(sigma2_eml(1.0, 0.0), DegeneratePosterior);
  CHECK_THROWS_AS(sigma2_posterior_mean(1.0, 1.0), DegeneratePosterior);
  CHECK(sigma2_posterior_mean(3.0, 2.5) == doctest::Approx(1.0));
}

TEST_CASE("degrees of freedom match the tabulated shape values") {
  auto two_a = [](int n, int q) {
    LevelData lv;
    lv.design = testsupport::random_points(n, 1, 3 + n + q);
    lv.observations = Eigen::VectorXd::LinSpaced(n, 0.0, 1.0).array().sin();
    if (q > 0) {
      lv.g_basis = q == 1 ? BasisSpec::constant() : BasisSpec::constant_and_linear(0);
      lv.lower_observations = Eigen::VectorXd::LinSpaced(n, 1.0, 2.0);
    }
    return 2.0 * fit_level(lv, matern52(Eigen::VectorXd::Constant(1, 0.2))).a;
  };
  CHECK(two_a(25, 0) == 24.0);
  CHECK(two_a(5, 1) == 3.0);
  CHECK(two_a(5, 2) == 2.0);
}

TEST_CASE("estimability guard") {
  LevelData lv;
  lv.design = testsupport::random_points(2, 1, 1);
  lv.observations = Eigen::Vector2d(1, 2);
  lv.g_basis = BasisSpec::constant();
  lv.lower_observations = Eigen::Vector2d(3, 5);
  CHECK_THROWS_AS(fit_level(lv, matern52(Eigen::VectorXd::Constant(1, 0.2))), InsufficientData);
}

TEST_CASE("GLS agrees with an independent dense solve") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 10; ++trial) {
    const int n = 6 + trial;
    const mfk::Design d = testsupport::random_points(n, 2, 100 + trial);
    const KernelSpec k = matern52(Eigen::Vector2d(0.3, 0.5));
    Eigen::MatrixXd R(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) R(i, j) = correlation(d.row(i).transpose(), d.row(j).transpose(), k) + (i == j ? 1e-10 : 0.0);
    Eigen::MatrixXd H(n, 3);
    H.col(0).setOnes();
    H.col(1) = d.col(0);
    H.col(2) = Eigen::VectorXd::NullaryExpr(n, [&](Eigen::Index) { return g(rng); });
    const Eigen::VectorXd z = Eigen::VectorXd::NullaryExpr(n, [&](Eigen::Index) { return g(rng); });
    const Eigen::MatrixXd Rinv = R.fullPivLu().inverse();
    const Eigen::MatrixXd M = H.transpose() * Rinv * H;
    const Eigen::VectorXd lambda = M.fullPivLu().solve(H.transpose() * Rinv * z);
    const Eigen::VectorXd res = z - H * lambda;
    const double Q = res.dot(Rinv * res);

    const CholeskyFactor f = factor_of(R);
    const TrendPosterior tp = trend_posterior(H, f, z, 1.0, PriorSpec{});
    const VariancePosterior vp = variance_posterior(H, f, z, PriorSpec{});
    CHECK((tp.mean - lambda).norm() <= 1e-8 * lambda.norm());
    CHECK((tp.cov_scale - M.inverse()).norm() <= 1e-8 * M.inverse().norm());
    CHECK(testsupport::rel_diff(vp.Q, Q) < 1e-8);
    CHECK(vp.a == 0.5 * (n - 3));
  }
}

TEST_CASE("rank deficiency names the collinear columns") {
  Eigen::MatrixXd H(4, 3);
  H << 1, 2, 0, 1, 2, 1, 1, 2, 2, 1, 2, 3;
  try {
    trend_posterior(H, identity_factor(4), Eigen::Vector4d(1, 2, 3, 4), 1.0, PriorSpec{});
    FAIL("expected SingularSystem");
  } catch (const SingularSystem& e) {
    const std::string msg = e.what();
    CHECK(msg.find("column") != std::string::npos);
  }
}

TEST_CASE("informative posterior") {
  const Eigen::MatrixXd H = Eigen::MatrixXd::Ones(3, 1);
  const Eigen::Vector3d z(1, 2, 3);
  SUBCASE("tiny prior variance pins the mean") {
    const PriorSpec p = PriorSpec::informative(Eigen::VectorXd::Constant(1, 5.0), Eigen::MatrixXd::Constant(1, 1, 1e-12), 1.0, 1.0);
    CHECK(std::abs(trend_posterior(H, identity_factor(3), z, 1.0, p).mean[0] - 5.0) < 1e-6);
  }
  SUBCASE("Q equals the textbook conjugate formula") {
    const mfk::Design d = testsupport::random_points(8, 1, 9);
    const KernelSpec k = matern52(Eigen::VectorXd::Constant(1, 0.25));
    Eigen::MatrixXd R(8, 8);
    for (int i = 0; i < 8; ++i)
      for (int j = 0; j < 8; ++j) R(i, j) = correlation(d.row(i).transpose(), d.row(j).transpose(), k) + (i == j ? 1e-10 : 0.0);
    Eigen::MatrixXd H2(8, 2);
    H2.col(0).setOnes();
    H2.col(1) = d.col(0);
    const Eigen::VectorXd z2 = (3.0 * d.col(0).array()).sin();
    Eigen::Matrix2d V;
    V << 2.0, 0.3, 0.3, 0.5;
    const Eigen::Vector2d b(0.4, -1.0);
    const PriorSpec p = PriorSpec::informative(b, V, 2.0, 0.7);
    const Eigen::MatrixXd Rinv = R.fullPivLu().inverse();
    const Eigen::MatrixXd M = H2.transpose() * Rinv * H2;
    const Eigen::VectorXd lhat = M.fullPivLu().solve(H2.transpose() * Rinv * z2);
    const Eigen::VectorXd res = z2 - H2 * lhat;
    const Eigen::Vector2d db = b - lhat;
    const Eigen::MatrixXd S = V + M.inverse();
    const double Q = 0.7 + db.dot(S.fullPivLu().solve(db)) + res.dot(Rinv * res);
    const CholeskyFactor f = factor_of(R);
    const VariancePosterior vp = variance_posterior(H2, f, z2, p);
    CHECK(testsupport::rel_diff(vp.Q, Q) < 1e-8);
    CHECK(vp.a == 8 / 2.0 + 2.0);
    const Eigen::MatrixXd Vinv = V.inverse();
    const Eigen::Vector2d mean = (M + Vinv).fullPivLu().solve(H2.transpose() * Rinv * z2 + Vinv * b);
    const TrendPosterior tp = trend_posterior(H2, f, z2, 2.0, p);
    CHECK((tp.mean - mean).norm() < 1e-8 * mean.norm());
    CHECK((tp.covariance - 2.0 * (M + Vinv).inverse()).norm() < 1e-8);
  }
  SUBCASE("vague prior approaches the non-informative trend posterior") {
    const mfk::Design d = testsupport::random_points(10, 1, 19);
    LevelData lv;
    lv.design = d;
    lv.observations = (4.0 * d.col(0).array()).cos();
    lv.f_basis = BasisSpec::parse("1,x1");
    const KernelSpec k = matern52(Eigen::VectorXd::Constant(1, 0.3));
    const FittedLevel ni = fit_level(lv, k);
    const FittedLevel inf =
        fit_level(lv, k, PriorSpec::informative(Eigen::Vector2d(3, -3), 1e8 * Eigen::Matrix2d::Identity(), 1e-9, 1e-9));
    CHECK((inf.trend_mean - ni.trend_mean).norm() <= 1e-3 * ni.trend_mean.norm());
    CHECK((inf.trend_cov_scale - ni.trend_cov_scale).norm() <= 1e-3 * ni.trend_cov_scale.norm());
    CHECK(testsupport::rel_diff(inf.Q, ni.Q) < 1e-3);
  }
  SUBCASE("invalid prior") {
    CHECK_THROWS_AS(PriorSpec::informative(Eigen::VectorXd::Ones(1), Eigen::MatrixXd::Constant(1, 1, -1.0), 1, 1),
                    InvalidHyperparameter);
    CHECK_THROWS_AS(PriorSpec::informative(Eigen::VectorXd::Ones(1), Eigen::MatrixXd::Ones(1, 1), 0.0, 1),
                    InvalidHyperparameter);
  }
}

TEST_CASE("Q vanishes exactly when z lies in the column space of H") {
  const mfk::Design d = testsupport::random_points(9, 2, 21);
  LevelData lv;
  lv.design = d;
  lv.f_basis = BasisSpec::parse("1,x1,x2");
  lv.observations = 1.5 - 2.0 * d.col(0).array() + 0.5 * d.col(1).array();
  const FittedLevel f = fit_level(lv, matern52(Eigen::Vector2d(0.3, 0.3)));
  CHECK(f.Q >= 0.0);
  CHECK(f.Q < 1e-20);
  CHECK((f.trend_mean - Eigen::Vector3d(1.5, -2.0, 0.5)).norm() < 1e-8);
  lv.observations[3] += 0.1;
  CHECK(fit_level(lv, matern52(Eigen::Vector2d(0.3, 0.3))).Q > 1e-6);
}

TEST_CASE("concentrated REML") {
  LevelData lv;
  lv.design = Eigen::VectorXd::LinSpaced(12, 0.0, 1.0);
  lv.observations = (7.0 * lv.design.col(0).array()).sin() + lv.design.col(0).array();
  const int dof = 11;
  SUBCASE("identity correlation limit") {
    const double obj = concentrated_reml(lv, matern52(Eigen::VectorXd::Constant(1, 1e-6)));
    const Eigen::VectorXd& z = lv.observations;
    const double q = (z.array() - z.mean()).square().sum();
    CHECK(std::abs(obj - dof * std::log(q / dof)) < 1e-4);
  }
  SUBCASE("observation scaling shifts by a constant") {
    LevelData scaled = lv;
    const double c = 3.7;
    scaled.observations *= c;
    for (double theta : {0.1, 0.35}) {
      const KernelSpec k = matern52(Eigen::VectorXd::Constant(1, theta));
      CHECK(concentrated_reml(scaled, k) - concentrated_reml(lv, k) == doctest::Approx(dof * std::log(c * c)).epsilon(1e-9));
    }
  }
  SUBCASE("relabeling invariance") {
    std::vector<int> perm(12);
    std::iota(perm.begin(), perm.end(), 0);
    std::mt19937_64 rng(3);
    std::shuffle(perm.begin(), perm.end(), rng);
    LevelData p = lv;
    p.design = lv.design(perm, Eigen::all);
    p.observations = lv.observations(perm);
    const KernelSpec k = matern52(Eigen::VectorXd::Constant(1, 0.2));
    CHECK(std::abs(concentrated_reml(p, k) - concentrated_reml(lv, k)) < 1e-10);
  }
}

TEST_CASE("restored levels reproduce the fitted quantities") {
  auto levels = testsupport::random_instance({15, 6}, 2, 8);
  MultiFidelityModel m = fit(levels, testsupport::fixed_kernels(2, 2));
  for (int t = 0; t < 2; ++t) {
    const FittedLevel& f = m.fitted[t];
    const FittedLevel r = restore_level(m.data[t], f.kernel, f.prior, f.trend_mean, f.trend_cov_scale, f.Q, f.a);
    CHECK((r.weights - f.weights).norm() <= 1e-12 * f.weights.norm());
    CHECK(r.applied_nugget() == f.applied_nugget());
    CHECK(r.sigma2_eml == f.sigma2_eml);
  }
}
