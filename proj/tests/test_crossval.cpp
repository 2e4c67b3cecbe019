#include <doctest.h>

#include <algorithm>
#include <chrono>

#include "mfk/benchmark.hpp"
#include "mfk/crossval.hpp"
#include "mfk/errors.hpp"
#include "support.hpp"

using namespace mfk;
using testsupport::rel_diff;

namespace {

std::vector<KernelSpec> kernels_of(const MultiFidelityModel& m) {
  std::vector<KernelSpec> k;
  for (const auto& f : m.fitted) k.push_back(f.kernel);
  return k;
}

void check_same(const CVReport& a, const CVReport& b, double tol, const MultiFidelityModel& m) {
  REQUIRE(a.folds.size() == b.folds.size());
  for (std::size_t f = 0; f < a.folds.size(); ++f) {
    REQUIRE(a.folds[f].errors.size() == b.folds[f].errors.size());
    for (Eigen::Index i = 0; i < a.folds[f].errors.size(); ++i) {
      CHECK(rel_diff(a.folds[f].errors[i], b.folds[f].errors[i], testsupport::error_floor(m)) < tol);
      CHECK(rel_diff(a.folds[f].variances[i], b.folds[f].variances[i], testsupport::variance_floor(m)) < tol);
      CHECK(a.folds[f].variances[i] >= 0.0);
    }
  }
}

}  // namespace

TEST_CASE("identity correlation with a known zero trend returns the data") {
  LevelData lv;
  lv.design = Design(6, 1);
  lv.design << 0.0, 0.2, 0.4, 0.6, 0.8, 1.0;
  lv.observations = Eigen::VectorXd(6);
  lv.observations << 1.5, -0.3, 2.0, 0.7, -1.1, 0.4;
  FitOptions o;
  o.kernels.emplace_back(matern52(Eigen::VectorXd::Constant(1, 1e-3)));
  o.priors.push_back(PriorSpec::informative(Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Constant(1, 1, 1e-14), 3.0, 2.0));
  const MultiFidelityModel m = fit({lv}, o);
  CVRequest req = CVRequest::leave_one_out(6, 1);
  req.reestimate_trend = false;
  req.reestimate_variance = false;
  const CVReport r = fast_cv(m, req);
  const double sigma2 = sigma2_posterior_mean(m.fitted[0].Q, m.fitted[0].a);
  for (int i = 0; i < 6; ++i) {
    CHECK(std::abs(r.folds[i].errors[0] - lv.observations[i]) < 1e-8);
    CHECK(rel_diff(r.folds[i].variances[0], sigma2) < 1e-8);
  }
}

TEST_CASE("closed form agrees with refitting") {
  struct Case {
    std::vector<int> sizes;
    int dim;
    bool linear;
  };
  const std::vector<Case> cases = {{{14}, 1, false}, {{24, 12}, 1, false}, {{24, 12}, 2, true}, {{30, 16, 10}, 1, true}};
  std::uint64_t seed = 40;
  for (const Case& c : cases) {
    auto levels = testsupport::random_instance(c.sizes, c.dim, ++seed, c.linear);
    const MultiFidelityModel m = fit(levels, testsupport::fixed_kernels(static_cast<int>(c.sizes.size()), c.dim));
    const int s = m.levels();
    const int n_top = m.data.back().n();
    for (int depth : {1, s}) {
      for (PredictionMode mode : {PredictionMode::Simple, PredictionMode::Universal}) {
        std::vector<CVRequest> reqs = {CVRequest::leave_one_out(n_top, depth), CVRequest::k_fold(n_top, 2, seed, depth),
                                       CVRequest::k_fold(n_top, 5, seed, depth)};
        for (CVRequest& req : reqs) {
          req.mode = mode;
          for (int flags = 0; flags < 4; ++flags) {
            req.reestimate_trend = flags & 1;
            req.reestimate_variance = flags & 2;
            CAPTURE(s);
            CAPTURE(depth);
            CAPTURE(flags);
            CAPTURE(req.folds.size());
            bool fast_ok = true;
            CVReport fast;
            try {
              fast = fast_cv(m, req);
            } catch (const InsufficientData&) {
              fast_ok = false;
            }
            if (!fast_ok) {
              CHECK_THROWS_AS(brute_force_cv(levels, req, kernels_of(m)), InsufficientData);
              continue;
            }
            check_same(fast, brute_force_cv(levels, req, kernels_of(m)), 1e-8, m);
          }
        }
      }
    }
  }
}

TEST_CASE("rho source only matters when the trend is re-estimated") {
  auto levels = testsupport::random_instance({24, 12}, 1, 3, true);
  const MultiFidelityModel m = fit(levels, testsupport::fixed_kernels(2, 1));
  CVRequest req = CVRequest::leave_one_out(12, 2);
  req.reestimate_trend = false;
  const CVReport a = fast_cv(m, req);
  req.rho_source = RhoSource::FullData;
  check_same(a, fast_cv(m, req), 1e-14, m);
  req.reestimate_trend = true;
  const CVReport fold_full = fast_cv(m, req);
  req.rho_source = RhoSource::FoldEstimate;
  const CVReport fold_fold = fast_cv(m, req);
  CHECK(fold_full.rmse != fold_fold.rmse);
}

TEST_CASE("single-level LOO matches direct universal kriging") {
  auto levels = testsupport::random_instance({15}, 2, 8);
  levels[0].f_basis = BasisSpec::parse("1,x2");
  const KernelSpec k = matern52(Eigen::Vector2d(0.35, 0.25));
  FitOptions o;
  o.kernels.emplace_back(k);
  const MultiFidelityModel m = fit(levels, o);
  CVRequest req = CVRequest::leave_one_out(15, 1);
  req.mode = PredictionMode::Universal;
  const CVReport r = fast_cv(m, req);
  const double nugget = m.fitted[0].applied_nugget();
  for (int i = 0; i < 15; ++i) {
    std::vector<int> keep;
    for (int j = 0; j < 15; ++j)
      if (j != i) keep.push_back(j);
    const Design D = levels[0].design(keep, Eigen::all);
    const Eigen::VectorXd x = levels[0].design.row(i).transpose();
    const auto direct = testsupport::direct_universal_kriging(D, levels[0].observations(keep), levels[0].f_basis.eval(D),
                                                              k, nugget, x, levels[0].f_basis.eval(x));
    CHECK(rel_diff(r.folds[i].errors[0], levels[0].observations[i] - direct.mean, 1e-300) < 1e-8);
    CHECK(rel_diff(r.folds[i].variances[0], direct.variance) < 1e-8);
  }
}

TEST_CASE("removing points from every level costs accuracy on average") {
  double top = 0.0, all = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    DesignRequest dr;
    dr.sizes = {8, 25};
    dr.bounds = {{0.0, 1.0}};
    dr.seed = seed;
    const std::vector<Design> D = nest(dr);
    std::vector<LevelData> levels(2);
    for (int t = 0; t < 2; ++t) {
      levels[t].design = D[t];
      levels[t].observations = D[t].col(0).unaryExpr([t](double x) { return t ? forrester_high(x) : forrester_low(x); });
    }
    const MultiFidelityModel m = fit(levels, testsupport::fixed_kernels(2, 1, 0.15));
    top += fast_cv(m, CVRequest::leave_one_out(8, 2)).rmse;
    all += fast_cv(m, CVRequest::leave_one_out(8, 1)).rmse;
  }
  CHECK(all >= top);
}

TEST_CASE("one large fold agrees with a direct refit") {
  auto levels = testsupport::random_instance({20, 10}, 1, 5);
  const MultiFidelityModel m = fit(levels, testsupport::fixed_kernels(2, 1));
  CVRequest req;
  req.removal_depth = 2;
  req.folds.push_back({});
  for (int i = 3; i < 10; ++i) req.folds[0].push_back(i);
  const CVReport fast = fast_cv(m, req);

  auto reduced = levels;
  reduced[1].design = levels[1].design.topRows(3).eval();
  reduced[1].observations = levels[1].observations.head(3).eval();
  FitOptions o = testsupport::fixed_kernels(2, 1);
  o.nugget_policy.escalate = false;
  const MultiFidelityModel direct = fit(reduced, o);
  for (int i = 0; i < 7; ++i) {
    const Prediction p = predict_simple(direct, levels[1].design.row(3 + i).transpose());
    CHECK(rel_diff(fast.folds[0].errors[i], levels[1].observations[3 + i] - p.top_mean(), 1e-300) < 1e-8);
    CHECK(rel_diff(fast.folds[0].variances[i], p.top_variance()) < 1e-8);
  }
  req.folds[0].insert(req.folds[0].begin(), 2);
  CHECK_THROWS_AS(fast_cv(m, req), InsufficientData);
}

TEST_CASE("request validation") {
  auto levels = testsupport::random_instance({12, 6}, 1, 1);
  const MultiFidelityModel m = fit(levels, testsupport::fixed_kernels(2, 1));
  CVRequest req = CVRequest::leave_one_out(6, 2);
  req.removal_depth = 3;
  CHECK_THROWS_AS(fast_cv(m, req), InvalidHyperparameter);
  req = CVRequest::leave_one_out(6, 2);
  req.folds.push_back({0});
  CHECK_THROWS_AS(fast_cv(m, req), StructuralError);
  req.folds = {{7}};
  CHECK_THROWS_AS(fast_cv(m, req), ShapeError);
  CHECK_THROWS_AS(CVRequest::k_fold(6, 7, 0, 1), InvalidHyperparameter);

  const CVRequest k = CVRequest::k_fold(6, 4, 9, 1);
  std::vector<int> all;
  for (const auto& f : k.folds) all.insert(all.end(), f.begin(), f.end());
  std::sort(all.begin(), all.end());
  CHECK(all == std::vector<int>{0, 1, 2, 3, 4, 5});
  CHECK(CVRequest::k_fold(6, 4, 9, 1).folds == k.folds);
}

TEST_CASE("empty requests and rmse") {
  auto levels = testsupport::random_instance({12, 6}, 1, 1);
  const MultiFidelityModel m = fit(levels, testsupport::fixed_kernels(2, 1));
  CVRequest req;
  req.removal_depth = 2;
  CHECK(fast_cv(m, req).folds.empty());
  CHECK(brute_force_cv(levels, req, kernels_of(m)).folds.empty());
  CHECK_THROWS_AS(loo_rmse(CVReport{}), StructuralError);

  CVReport r;
  r.folds.resize(2);
  r.folds[0].errors = Eigen::VectorXd::Constant(1, 3.0);
  r.folds[1].errors = Eigen::VectorXd::Constant(1, 4.0);
  CHECK(std::abs(loo_rmse(r) - 3.5355339059327378) < 1e-12);
  std::swap(r.folds[0], r.folds[1]);
  CHECK(std::abs(loo_rmse(r) - 3.5355339059327378) < 1e-12);
  r.folds[0].errors.setZero();
  r.folds[1].errors.setZero();
  CHECK(loo_rmse(r) == 0.0);
}

TEST_CASE("fast cv is cheaper than refitting") {
  auto levels = testsupport::random_instance({120, 30}, 2, 2);
  const MultiFidelityModel m = fit(levels, testsupport::fixed_kernels(2, 2));
  const CVRequest req = CVRequest::leave_one_out(30, 2);
  const auto t0 = std::chrono::steady_clock::now();
  const CVReport fast = fast_cv(m, req);
  const auto t1 = std::chrono::steady_clock::now();
  const CVReport brute = brute_force_cv(levels, req, kernels_of(m));
  const auto t2 = std::chrono::steady_clock::now();
  check_same(fast, brute, 1e-8, m);
  CHECK((t2 - t1) > (t1 - t0));
}
