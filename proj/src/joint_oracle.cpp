#include "mfk/joint_oracle.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "mfk/design.hpp"
#include "mfk/errors.hpp"

namespace mfk {

std::vector<JointLevelParams> joint_params(const MultiFidelityModel& model, const Eigen::VectorXd& sigma2) {
  if (sigma2.size() != model.levels()) throw ShapeError("need one variance per level");
  std::vector<JointLevelParams> out(model.levels());
  for (int t = 0; t < model.levels(); ++t) {
    const FittedLevel& f = model.fitted[t];
    const int q = model.data[t].q();
    out[t].beta_rho = f.trend_mean.head(q);
    out[t].beta = f.trend_mean.tail(f.trend_mean.size() - q);
    out[t].sigma2 = sigma2[t];
    out[t].kernel = f.kernel;
  }
  return out;
}

Eigen::VectorXd joint_rhos(const JointModel& jm, const Eigen::Ref<const Eigen::VectorXd>& x) {
  Eigen::VectorXd rho = Eigen::VectorXd::Ones(jm.levels_count());
  for (int t = 1; t < jm.levels_count(); ++t) rho[t] = jm.levels[t].g_basis->eval(x).dot(jm.params[t].beta_rho);
  return rho;
}

namespace {

// cov(Z_u(x), Z_u(x2)) from per-point rho vectors.
double same_level_cov(const JointModel& jm, int u, const Eigen::Ref<const Eigen::VectorXd>& x,
                      const Eigen::Ref<const Eigen::VectorXd>& x2, const Eigen::VectorXd& rx, const Eigen::VectorXd& rx2,
                      bool same) {
  double total = 0.0;
  double prod = 1.0;
  for (int j = u; j >= 0; --j) {
    const KernelSpec& k = jm.params[j].kernel;
    const double r = correlation(x, x2, k) + (same ? k.nugget : 0.0);
    total += jm.params[j].sigma2 * prod * r;
    prod *= rx[j] * rx2[j];
  }
  return total;
}

double cross_cov(const JointModel& jm, int t, const Eigen::Ref<const Eigen::VectorXd>& x, const Eigen::VectorXd& rx,
                 int u, const Eigen::Ref<const Eigen::VectorXd>& x2, const Eigen::VectorXd& rx2, bool same) {
  if (t < u) return cross_cov(jm, u, x2, rx2, t, x, rx, same);
  double chain = 1.0;
  for (int i = u + 1; i <= t; ++i) chain *= rx[i];
  return chain * same_level_cov(jm, u, x, x2, rx, rx2, same);
}

Eigen::VectorXd experience(const JointModel& jm, int t, const Eigen::Ref<const Eigen::VectorXd>& x,
                           const Eigen::VectorXd& rx) {
  Eigen::VectorXd h = Eigen::VectorXd::Zero(jm.beta_all.size());
  Eigen::Index offset = 0;
  for (int j = 0; j < jm.levels_count(); ++j) {
    const int p = jm.levels[j].p();
    if (j <= t) {
      double chain = 1.0;
      for (int i = j + 1; i <= t; ++i) chain *= rx[i];
      h.segment(offset, p) = chain * jm.levels[j].f_basis.eval(x);
    }
    offset += p;
  }
  return h;
}

}  // namespace

double joint_covariance(const JointModel& jm, int t, const Eigen::Ref<const Eigen::VectorXd>& x, int u,
                        const Eigen::Ref<const Eigen::VectorXd>& x2, bool same) {
  return cross_cov(jm, t, x, joint_rhos(jm, x), u, x2, joint_rhos(jm, x2), same);
}

Eigen::VectorXd joint_experience(const JointModel& jm, int t, const Eigen::Ref<const Eigen::VectorXd>& x) {
  return experience(jm, t, x, joint_rhos(jm, x));
}

JointModel build_joint(std::vector<LevelData> levels, std::vector<JointLevelParams> params) {
  if (levels.empty()) throw StructuralError("need at least one level");
  if (params.size() != levels.size()) throw ShapeError("need one parameter set per level");
  const int s = static_cast<int>(levels.size());
  for (int t = 0; t < s; ++t) {
    if (t > 0) {
      if (!levels[t].g_basis) levels[t].g_basis = BasisSpec::constant();
      const std::vector<int> map = nest_map(levels[t].design, levels[t - 1].design, t + 1);
      if (!levels[t].lower_observations) {
        Eigen::VectorXd lower(map.size());
        for (std::size_t i = 0; i < map.size(); ++i) lower[i] = levels[t - 1].observations[map[i]];
        levels[t].lower_observations = lower;
      }
    }
    levels[t].validate();
    if (t > 0) {
      if (params[t].beta_rho.size() != levels[t].q()) throw ShapeError("beta_rho length differs from g-basis size");
    }
    if (params[t].beta.size() != levels[t].p()) throw ShapeError("beta length differs from f-basis size");
    params[t].kernel.validate();
    if (params[t].kernel.dim() != levels[t].dim()) throw ShapeError("kernel dimension differs from design");
    if (!(params[t].sigma2 >= 0.0)) throw InvalidHyperparameter("variances must be nonnegative");
  }

  JointModel jm;
  jm.levels = std::move(levels);
  jm.params = std::move(params);
  int total = 0;
  int beta_size = 0;
  for (int t = 0; t < s; ++t) {
    total += jm.levels[t].n();
    beta_size += jm.levels[t].p();
  }
  const int d = jm.levels[0].dim();
  jm.points.resize(total, d);
  jm.z.resize(total);
  jm.point_level.resize(total);
  jm.beta_all.resize(beta_size);
  int row = 0;
  int offset = 0;
  for (int t = 0; t < s; ++t) {
    const LevelData& lv = jm.levels[t];
    jm.points.middleRows(row, lv.n()) = lv.design;
    jm.z.segment(row, lv.n()) = lv.observations;
    std::fill(jm.point_level.begin() + row, jm.point_level.begin() + row + lv.n(), t);
    row += lv.n();
    jm.beta_all.segment(offset, lv.p()) = jm.params[t].beta;
    offset += lv.p();
  }

  jm.point_rhos.resize(total);
  for (int i = 0; i < total; ++i) jm.point_rhos[i] = joint_rhos(jm, jm.points.row(i).transpose());
  const auto& rho = jm.point_rhos;
  jm.V.resize(total, total);
  jm.H.resize(total, beta_size);
  for (int i = 0; i < total; ++i) {
    const Eigen::VectorXd xi = jm.points.row(i).transpose();
    jm.H.row(i) = experience(jm, jm.point_level[i], xi, rho[i]).transpose();
    for (int k = 0; k <= i; ++k) {
      const Eigen::VectorXd xk = jm.points.row(k).transpose();
      const bool same = (xi.array() == xk.array()).all();
      const double c = cross_cov(jm, jm.point_level[i], xi, rho[i], jm.point_level[k], xk, rho[k], same);
      jm.V(i, k) = c;
      jm.V(k, i) = c;
    }
  }

  const double scale = jm.V.diagonal().maxCoeff();
  double jitter = 0.0;
  Eigen::MatrixXd lower;
  for (;;) {
    Eigen::MatrixXd A = jm.V;
    A.diagonal().array() += jitter;
    if (try_cholesky(A, lower)) break;
    jitter = jitter == 0.0 ? 1e-12 * scale : jitter * 10.0;
    if (jitter > 1e-6 * scale) throw IllConditioned("joint covariance matrix is not factorizable", jitter);
  }
  jm.V_lower = std::move(lower);
  jm.jitter = jitter;
  jm.alpha = jm.V_lower.triangularView<Eigen::Lower>().solve(jm.z - jm.H * jm.beta_all);
  jm.V_lower.triangularView<Eigen::Lower>().transpose().solveInPlace(jm.alpha);
  return jm;
}

JointPrediction joint_predict(const JointModel& jm, const Eigen::Ref<const Eigen::VectorXd>& x) {
  if (x.size() != jm.points.cols()) throw ShapeError("query point dimension differs from the model");
  const int s = jm.levels_count() - 1;
  const Eigen::VectorXd rx = joint_rhos(jm, x);
  const int total = static_cast<int>(jm.points.rows());
  Eigen::VectorXd t(total);
  for (int i = 0; i < total; ++i) {
    const Eigen::VectorXd xi = jm.points.row(i).transpose();
    t[i] = cross_cov(jm, s, x, rx, jm.point_level[i], xi, jm.point_rhos[i], false);
  }
  JointPrediction out;
  out.mean = experience(jm, s, x, rx).dot(jm.beta_all) + t.dot(jm.alpha);
  const Eigen::VectorXd w = jm.V_lower.triangularView<Eigen::Lower>().solve(t);
  out.variance = same_level_cov(jm, s, x, x, rx, rx, false) - w.squaredNorm();
  return out;
}

std::vector<LevelData> synthetic_levels(const std::vector<int>& sizes, int dim, std::uint64_t seed) {
  if (sizes.empty() || dim < 1) throw ShapeError("need at least one level and one dimension");
  DesignRequest req;
  req.sizes.assign(sizes.rbegin(), sizes.rend());
  req.bounds.assign(dim, Interval{0.0, 1.0});
  req.method = DesignMethod::Lhs;
  req.seed = seed;
  const std::vector<Design> designs = nest(req);
  const int s = static_cast<int>(sizes.size());
  auto response = [&](const Eigen::VectorXd& x, int t) {
    double v = 0.0;
    for (int j = 0; j < dim; ++j) v += std::pow(6.0 * x[j] - 2.0, 2) * std::sin(12.0 * x[j] - 4.0);
    v /= dim;
    for (int k = s - 1; k > t; --k) v = 0.5 * v + 10.0 * (x.mean() - 0.5) - 5.0;
    return v;
  };
  std::vector<LevelData> levels(s);
  for (int t = 0; t < s; ++t) {
    levels[t].design = designs[t];
    levels[t].observations.resize(designs[t].rows());
    for (Eigen::Index i = 0; i < designs[t].rows(); ++i)
      levels[t].observations[i] = response(designs[t].row(i).transpose(), t);
  }
  return levels;
}

TimingReport timed_fit_predict(const std::vector<int>& sizes, int dim, std::uint64_t seed, int queries) {
  using Clock = std::chrono::steady_clock;
  const std::vector<LevelData> levels = synthetic_levels(sizes, dim, seed);
  DesignBounds unit(dim, Interval{0.0, 1.0});
  const Design points = base_design(queries, unit, DesignMethod::Random, seed + 1);
  FitOptions options;
  for (std::size_t t = 0; t < levels.size(); ++t)
    options.kernels.emplace_back(matern52(Eigen::VectorXd::Constant(dim, 0.3)));

  TimingReport report;
  report.sizes = sizes;
  report.dim = dim;
  report.seed = seed;
  report.queries = queries;

  const auto r0 = Clock::now();
  const MultiFidelityModel model = fit(levels, options);
  const std::vector<Prediction> rec = predict_batch(model, points, PredictionMode::Simple);
  const auto r1 = Clock::now();
  report.recursive_seconds = std::chrono::duration<double>(r1 - r0).count();

  const auto j0 = Clock::now();
  const JointModel jm = build_joint(model.data, joint_params(model, model.sigma2_eml()));
  std::vector<JointPrediction> joint(queries);
  for (int i = 0; i < queries; ++i) joint[i] = joint_predict(jm, points.row(i).transpose());
  const auto j1 = Clock::now();
  report.joint_seconds = std::chrono::duration<double>(j1 - j0).count();

  for (int i = 0; i < queries; ++i) {
    const double dm = std::abs(rec[i].top_mean() - joint[i].mean) / std::max(1.0, std::abs(joint[i].mean));
    const double dv =
        std::abs(rec[i].top_variance() - joint[i].variance) / std::max(1e-300, std::abs(joint[i].variance));
    report.max_mean_rel_diff = std::max(report.max_mean_rel_diff, dm);
    report.max_variance_rel_diff = std::max(report.max_variance_rel_diff, dv);
  }
  return report;
}

}  // namespace mfk
