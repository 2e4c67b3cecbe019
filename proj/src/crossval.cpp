#include "mfk/crossval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "mfk/errors.hpp"

namespace mfk {

CVRequest CVRequest::leave_one_out(int n_top, int removal_depth) {
  CVRequest req;
  req.removal_depth = removal_depth;
  for (int i = 0; i < n_top; ++i) req.folds.push_back({i});
  return req;
}

CVRequest CVRequest::k_fold(int n_top, int k, std::uint64_t seed, int removal_depth) {
  if (k < 1 || k > n_top) throw InvalidHyperparameter("fold count must lie in [1, n]");
  std::vector<int> order(n_top);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  CVRequest req;
  req.removal_depth = removal_depth;
  req.folds.resize(k);
  for (int i = 0; i < n_top; ++i) req.folds[i % k].push_back(order[i]);
  for (auto& f : req.folds) std::sort(f.begin(), f.end());
  return req;
}

namespace {

using Index = std::vector<int>;

// R^{-1} and its products with H and z, shared by every fold of a level.
struct InverseCache {
  Eigen::MatrixXd W;
  Eigen::MatrixXd WH;
  Eigen::VectorXd Wz;
};

InverseCache make_cache(const CholeskyFactor& factor, const Eigen::MatrixXd& H, const Eigen::VectorXd& z) {
  InverseCache c;
  c.W = factor.inverse();
  c.WH = c.W * H;
  c.Wz = c.W * z;
  return c;
}

struct ParameterRule {
  bool reestimate_trend = true;
  bool reestimate_variance = true;
  bool universal = false;  // variance factor Q/(2(a-1)) instead of Q/(2a)
};

// Closed-form quantities of one level with the rows `test` held out.
struct HeldOut {
  Eigen::VectorXd lambda;
  Eigen::MatrixXd cov_scale;  // (H_S^T K H_S [+ V^-1])^-1
  double sigma2 = 0.0;
  Eigen::VectorXd base_errors;    // [R^-1]_TT^-1 [R^-1 (z - H lambda)]_T
  Eigen::VectorXd base_variance;  // diag([R^-1]_TT^-1) - nugget
  Eigen::MatrixXd U;              // [R^-1]_TT^-1 [R^-1 H]_T
};

Index complement(const Index& test, int n) {
  std::vector<char> mark(n, 0);
  for (int i : test) mark[i] = 1;
  Index keep;
  keep.reserve(n - test.size());
  for (int i = 0; i < n; ++i)
    if (!mark[i]) keep.push_back(i);
  return keep;
}

HeldOut held_out(const Eigen::MatrixXd& H, const Eigen::VectorXd& z, const InverseCache& c, const PriorSpec& prior,
                 const Eigen::VectorXd& full_trend, double full_Q, double full_a, double nugget, const Index& test,
                 const ParameterRule& rule) {
  const int n = static_cast<int>(H.rows());
  const int m = static_cast<int>(H.cols());
  const Index keep = complement(test, n);
  const Eigen::MatrixXd W_tt = c.W(test, test);
  Eigen::LLT<Eigen::MatrixXd> tt(W_tt);
  if (tt.info() != Eigen::Success) throw IllConditioned("held-out block of R^-1 is not positive definite", nugget);
  const Eigen::MatrixXd W_st = c.W(keep, test);

  // K y_S for K = ([R]_SS)^-1, from W y with the held-out rows of y zeroed.
  auto apply_k = [&](const Eigen::MatrixXd& Wy, const Eigen::MatrixXd& y) -> Eigen::MatrixXd {
    const Eigen::MatrixXd P = Wy - c.W(Eigen::all, test) * y(test, Eigen::all);
    return P(keep, Eigen::all) - W_st * tt.solve(Eigen::MatrixXd(P(test, Eigen::all)));
  };

  HeldOut out;
  const Eigen::MatrixXd H_s = H(keep, Eigen::all);
  if (rule.reestimate_trend) {
    const Eigen::MatrixXd KH = apply_k(c.WH, H);
    const Eigen::VectorXd Kz = apply_k(c.Wz, z);
    Eigen::MatrixXd M = H_s.transpose() * KH;
    Eigen::VectorXd v = H_s.transpose() * Kz;
    if (prior.mode == PriorMode::Informative) {
      const Eigen::MatrixXd Vinv = prior.V.llt().solve(Eigen::MatrixXd::Identity(m, m));
      M += Vinv;
      v += Vinv * prior.b;
    }
    Eigen::LLT<Eigen::MatrixXd> llt(M);
    if (llt.info() != Eigen::Success) throw SingularSystem("retained experience matrix is rank deficient");
    out.lambda = llt.solve(v);
    out.cov_scale = llt.solve(Eigen::MatrixXd::Identity(m, m));
  } else {
    out.lambda = full_trend;
  }

  const Eigen::VectorXd e = z - H * out.lambda;
  const Eigen::VectorXd We = c.Wz - c.WH * out.lambda;
  out.base_errors = tt.solve(Eigen::VectorXd(We(test)));

  if (rule.reestimate_variance) {
    const Eigen::VectorXd Ke = apply_k(We, e);
    double Q = e(keep).dot(Ke);
    double a = 0.0;
    const int n_keep = static_cast<int>(keep.size());
    if (prior.mode == PriorMode::Informative) {
      const Eigen::VectorXd d = out.lambda - prior.b;
      Q += prior.gamma + d.dot(prior.V.llt().solve(d));
      a = 0.5 * n_keep + prior.alpha;
    } else {
      a = 0.5 * (n_keep - m);
    }
    Q = std::max(Q, 0.0);
    out.sigma2 = rule.universal ? sigma2_posterior_mean(Q, a) : sigma2_eml(Q, a);
  } else {
    out.sigma2 = sigma2_posterior_mean(full_Q, full_a);
  }

  const Eigen::MatrixXd W_tt_inv = tt.solve(Eigen::MatrixXd::Identity(test.size(), test.size()));
  out.base_variance = (W_tt_inv.diagonal().array() - nugget).cwiseMax(0.0);
  out.U = W_tt_inv * c.WH(test, Eigen::all);
  return out;
}

void check_request(const MultiFidelityModel& model, const CVRequest& req) {
  const int s = model.levels();
  if (req.removal_depth < 1 || req.removal_depth > s)
    throw InvalidHyperparameter("removal depth must lie in [1, " + std::to_string(s) + "]");
  const int n_top = model.data.back().n();
  std::vector<char> seen(n_top, 0);
  for (std::size_t f = 0; f < req.folds.size(); ++f) {
    if (req.folds[f].empty()) throw StructuralError("fold " + std::to_string(f + 1) + " is empty");
    for (int i : req.folds[f]) {
      if (i < 0 || i >= n_top) throw ShapeError("fold index " + std::to_string(i) + " outside the top-level design");
      if (seen[i]) throw StructuralError("folds overlap at index " + std::to_string(i));
      seen[i] = 1;
    }
  }
}

// Row indices of the held-out points in every level's design, from D_s downwards.
std::vector<Index> fold_indices(const MultiFidelityModel& model, const Index& top) {
  const int s = model.levels();
  std::vector<Index> idx(s);
  idx[s - 1] = top;
  for (int t = s - 1; t >= 1; --t) {
    idx[t - 1].reserve(top.size());
    for (int i : idx[t]) idx[t - 1].push_back(model.nest_maps[t][i]);
  }
  return idx;
}

// Estimability of every affected level, checked for all folds before any solve.
void check_degrees_of_freedom(const MultiFidelityModel& model, const CVRequest& req, const ParameterRule& rule) {
  for (int t = req.removal_depth - 1; t < model.levels(); ++t) {
    const FittedLevel& fit = model.fitted[t];
    const int m = static_cast<int>(fit.H.cols());
    const int n = model.data[t].n();
    const bool informative = fit.prior.mode == PriorMode::Informative;
    for (std::size_t f = 0; f < req.folds.size(); ++f) {
      const int k = static_cast<int>(req.folds[f].size());
      const int dof = n - k - m;
      std::ostringstream os;
      os << "level " << t + 1 << ", fold " << f + 1 << ": n - p - q - |fold| = " << dof;
      if (!informative && dof <= 0) throw InsufficientData(os.str() + " leaves nothing to re-estimate from");
      if (!informative && rule.reestimate_variance && rule.universal && dof <= 2)
        throw InsufficientData(os.str() + "; universal variance needs more than 2");
      if (rule.reestimate_trend && !informative && n - k < m)
        throw InsufficientData(os.str() + " is too small to re-estimate the trend");
    }
    if (!rule.reestimate_variance && !(fit.a > 1.0))
      throw DegeneratePosterior("level " + std::to_string(t + 1) + ": fixed CV variance Q/(2(a-1)) needs a > 1");
  }
}

Eigen::VectorXd lower_level_sigma2(const MultiFidelityModel& model, const ParameterRule& rule) {
  Eigen::VectorXd s2(model.levels());
  for (int t = 0; t < model.levels(); ++t) {
    const FittedLevel& f = model.fitted[t];
    if (rule.reestimate_variance && !rule.universal)
      s2[t] = f.sigma2_eml;
    else
      s2[t] = f.a > 1.0 ? sigma2_posterior_mean(f.Q, f.a) : f.sigma2_eml;
  }
  return s2;
}

ParameterRule rule_of(const CVRequest& req) {
  ParameterRule rule;
  rule.reestimate_trend = req.reestimate_trend;
  rule.reestimate_variance = req.reestimate_variance;
  rule.universal = req.mode == PredictionMode::Universal;
  return rule;
}

// Trend uncertainty enters only when the trend is re-estimated in universal mode.
bool adds_trend_term(const ParameterRule& rule) { return rule.universal && rule.reestimate_trend; }

}  // namespace

CVReport fast_cv(const MultiFidelityModel& model, const CVRequest& req) {
  check_request(model, req);
  const ParameterRule rule = rule_of(req);
  check_degrees_of_freedom(model, req, rule);
  const int s = model.levels();
  const int t_min = req.removal_depth - 1;  // 0-based

  std::vector<InverseCache> caches(s);
  for (int t = t_min; t < s; ++t)
    caches[t] = make_cache(model.fitted[t].factor, model.fitted[t].H, model.data[t].observations);
  const Eigen::VectorXd s2_lower = lower_level_sigma2(model, rule);

  CVReport report;
  report.removal_depth = req.removal_depth;
  report.mode = req.mode;
  for (const Index& fold : req.folds) {
    const std::vector<Index> idx = fold_indices(model, fold);
    const int k = static_cast<int>(fold.size());
    const Design test_points = model.data[s - 1].design(fold, Eigen::all);

    // Level below the removal depth keeps the points: its in-sample residuals seed the recursion.
    Eigen::VectorXd err = Eigen::VectorXd::Zero(k);
    Eigen::VectorXd var = Eigen::VectorXd::Zero(k);
    if (t_min > 0) {
      for (int i = 0; i < k; ++i) {
        const Eigen::VectorXd x = test_points.row(i).transpose();
        const Prediction p = adds_trend_term(rule) ? predict_universal(model, x, s2_lower)
                                                   : predict_simple(model, x, s2_lower);
        err[i] = model.data[t_min - 1].observations[idx[t_min - 1][i]] - p.mean[t_min - 1];
        var[i] = p.variance[t_min - 1];
      }
    }

    CVFold out;
    out.indices = fold;
    for (int t = t_min; t < s; ++t) {
      const LevelData& data = model.data[t];
      const FittedLevel& fit = model.fitted[t];
      const HeldOut ho = held_out(fit.H, data.observations, caches[t], fit.prior, fit.trend_mean, fit.Q, fit.a,
                                  fit.applied_nugget(), idx[t], rule);
      Eigen::VectorXd rho = Eigen::VectorXd::Zero(k);
      Eigen::MatrixXd U = ho.U;
      if (!data.is_base_level()) {
        const int q = data.g_basis->size();
        const Eigen::VectorXd& coef = req.rho_source == RhoSource::FoldEstimate ? ho.lambda : fit.trend_mean;
        const Eigen::MatrixXd G = data.g_basis->eval(test_points);
        rho = G * coef.head(q);
        // h_t uses the predicted, not observed, lower response at the held-out points.
        U.leftCols(q) -= (G.array().colwise() * err.array()).matrix();
      }
      Eigen::VectorXd next_var = rho.array().square() * var.array() + ho.sigma2 * ho.base_variance.array();
      if (adds_trend_term(rule)) {
        const Eigen::MatrixXd US = U * (ho.sigma2 * ho.cov_scale);
        next_var += (US.array() * U.array()).rowwise().sum().cwiseMax(0.0).matrix();
      }
      err = rho.cwiseProduct(err) + ho.base_errors;
      var = std::move(next_var);
      if (t == s - 1) {
        out.trend = ho.lambda;
        out.sigma2 = ho.sigma2;
      }
    }
    out.errors = err;
    out.variances = var;
    report.folds.push_back(std::move(out));
  }
  report.rmse = report.folds.empty() ? 0.0 : loo_rmse(report);
  return report;
}

namespace {

LevelData drop_rows(const LevelData& level, const Index& drop) {
  const Index keep = complement(drop, level.n());
  LevelData out = level;
  out.design = level.design(keep, Eigen::all);
  out.observations = level.observations(keep);
  if (level.lower_observations) out.lower_observations = Eigen::VectorXd((*level.lower_observations)(keep));
  return out;
}

// Replaces the fitted trend by `trend` and recomputes the dependent quantities.
void fix_trend(FittedLevel& fit, const LevelData& data, const Eigen::VectorXd& trend) {
  fit.trend_mean = trend;
  const Eigen::VectorXd resid = data.observations - fit.H * trend;
  fit.weights = fit.factor.solve(resid);
  double Q = fit.factor.half_solve(resid).squaredNorm();
  if (fit.prior.mode == PriorMode::Informative) {
    const Eigen::VectorXd d = trend - fit.prior.b;
    Q += fit.prior.gamma + d.dot(fit.prior.V.llt().solve(d));
  }
  fit.Q = Q;
  fit.sigma2_eml = sigma2_eml(fit.Q, fit.a);
}

}  // namespace

CVReport brute_force_cv(const std::vector<LevelData>& levels, const CVRequest& req,
                        const std::vector<KernelSpec>& kernels, const std::vector<PriorSpec>& priors) {
  CVReport report;
  report.removal_depth = req.removal_depth;
  report.mode = req.mode;
  if (req.folds.empty()) return report;

  FitOptions options;
  options.priors = priors;
  for (const auto& k : kernels) options.kernels.emplace_back(k);
  const MultiFidelityModel full = fit(levels, options);
  check_request(full, req);
  const ParameterRule rule = rule_of(req);
  check_degrees_of_freedom(full, req, rule);
  const int s = full.levels();
  const int t_min = req.removal_depth - 1;

  FitOptions refit_options;
  refit_options.priors = priors;
  refit_options.nugget_policy.escalate = false;
  for (int t = 0; t < s; ++t) refit_options.kernels.emplace_back(full.fitted[t].kernel);

  for (const Index& fold : req.folds) {
    const std::vector<Index> idx = fold_indices(full, fold);
    std::vector<LevelData> reduced = full.data;
    for (int t = t_min; t < s; ++t) reduced[t] = drop_rows(full.data[t], idx[t]);
    MultiFidelityModel refit = fit(std::move(reduced), refit_options);

    Eigen::VectorXd s2(s);
    for (int t = 0; t < s; ++t) {
      FittedLevel& f = refit.fitted[t];
      if (!rule.reestimate_trend) fix_trend(f, refit.data[t], full.fitted[t].trend_mean);
      if (rule.reestimate_variance)
        s2[t] = rule.universal ? sigma2_posterior_mean(f.Q, f.a) : f.sigma2_eml;
      else
        s2[t] = sigma2_posterior_mean(full.fitted[t].Q, full.fitted[t].a);
    }

    CVFold out;
    out.indices = fold;
    out.errors.resize(fold.size());
    out.variances.resize(fold.size());
    for (std::size_t i = 0; i < fold.size(); ++i) {
      const Eigen::VectorXd x = full.data[s - 1].design.row(fold[i]).transpose();
      const Prediction p = adds_trend_term(rule) ? predict_universal(refit, x, s2) : predict_simple(refit, x, s2);
      out.errors[i] = full.data[s - 1].observations[fold[i]] - p.top_mean();
      out.variances[i] = p.top_variance();
    }
    out.trend = refit.fitted[s - 1].trend_mean;
    out.sigma2 = s2[s - 1];
    report.folds.push_back(std::move(out));
  }
  report.rmse = loo_rmse(report);
  return report;
}

double loo_rmse(const CVReport& report) {
  double sse = 0.0;
  std::size_t count = 0;
  for (const auto& f : report.folds) {
    sse += f.errors.squaredNorm();
    count += f.errors.size();
  }
  if (count == 0) throw StructuralError("cross-validation report is empty");
  return std::sqrt(sse / static_cast<double>(count));
}

double level_loo_sse(const LevelData& level, const KernelSpec& kernel, const NuggetPolicy& policy) {
  level.validate();
  const int n = level.n();
  const Eigen::MatrixXd H = build_experience_matrix(level);
  if (n - 1 <= H.cols()) throw InsufficientData("leave-one-out needs n - 1 > p + q");
  const CorrelationMatrix cm = correlation_matrix(level.design, kernel, policy);
  const InverseCache cache = make_cache(cm.factor, H, level.observations);
  ParameterRule rule;
  rule.reestimate_variance = false;
  double sse = 0.0;
  for (int i = 0; i < n; ++i) {
    const HeldOut ho = held_out(H, level.observations, cache, PriorSpec{}, Eigen::VectorXd(), 0.0, 2.0,
                                cm.factor.applied_nugget(), Index{i}, rule);
    sse += ho.base_errors.squaredNorm();
  }
  return sse;
}

}  // namespace mfk
