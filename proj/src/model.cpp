#include "mfk/model.hpp"

#include <cmath>
#include <sstream>

#include "mfk/errors.hpp"

namespace mfk {

namespace {

constexpr double kNestTolerance = 1e-12;

std::string format_point(const Eigen::Ref<const Eigen::VectorXd>& x) {
  std::ostringstream os;
  os.precision(17);
  os << '(';
  for (Eigen::Index j = 0; j < x.size(); ++j) os << (j ? ", " : "") << x[j];
  os << ')';
  return os.str();
}

void check_point(const MultiFidelityModel& model, const Eigen::Ref<const Eigen::VectorXd>& x) {
  if (model.levels() == 0) throw StructuralError("model has no levels");
  if (x.size() != model.dim())
    throw ShapeError("query point has dimension " + std::to_string(x.size()) + ", model expects " +
                     std::to_string(model.dim()));
}

void check_sigma2(const MultiFidelityModel& model, const Eigen::VectorXd& sigma2) {
  if (sigma2.size() != model.levels()) throw ShapeError("need one variance per level");
  for (Eigen::Index t = 0; t < sigma2.size(); ++t)
    if (!(sigma2[t] >= 0.0)) throw InvalidHyperparameter("level variances must be nonnegative");
}

// Quantities shared by both prediction modes at one level.
struct LevelTerms {
  Eigen::VectorXd h;   // experience vector at x
  Eigen::VectorXd rw;  // L^{-1} r(x)
  double rho = 0.0;
  double mean = 0.0;
};

LevelTerms level_terms(const LevelData& data, const FittedLevel& fit, const Eigen::Ref<const Eigen::VectorXd>& x,
                       double lower_mean) {
  LevelTerms out;
  const Eigen::VectorXd f = data.f_basis.eval(x);
  const Eigen::VectorXd r = correlation_vector(x, data.design, fit.kernel);
  out.rw = fit.factor.half_solve(r);
  if (data.is_base_level()) {
    out.h = f;
  } else {
    const Eigen::VectorXd g = data.g_basis->eval(x);
    const int q = static_cast<int>(g.size());
    out.rho = g.dot(fit.trend_mean.head(q));
    out.h.resize(q + f.size());
    out.h.head(q) = g * lower_mean;
    out.h.tail(f.size()) = f;
  }
  out.mean = out.h.dot(fit.trend_mean) + r.dot(fit.weights);
  return out;
}

void add_level_warnings(MultiFidelityModel& model) {
  model.warnings.clear();
  for (int t = 0; t < model.levels(); ++t) {
    const double a = model.fitted[t].a;
    std::ostringstream os;
    os << "level " << t + 1 << ": posterior shape a = " << a;
    if (a <= 1.0)
      model.warnings.push_back(os.str() + " <= 1, universal prediction unavailable; add runs or use simple mode");
    else if (a < 1.5)
      model.warnings.push_back(os.str() + " < 1.5, universal variance is numerically unstable");
  }
}

}  // namespace

Eigen::VectorXd MultiFidelityModel::sigma2_eml() const {
  Eigen::VectorXd out(levels());
  for (int t = 0; t < levels(); ++t) out[t] = fitted[t].sigma2_eml;
  return out;
}

Eigen::VectorXd MultiFidelityModel::sigma2_posterior_mean() const {
  Eigen::VectorXd out(levels());
  for (int t = 0; t < levels(); ++t) {
    try {
      out[t] = mfk::sigma2_posterior_mean(fitted[t].Q, fitted[t].a);
    } catch (const Error& e) {
      throw LevelFitError(t + 1, e);
    }
  }
  return out;
}

std::vector<int> nest_map(const Design& fine, const Design& coarse, int fine_level) {
  if (fine.cols() != coarse.cols()) throw ShapeError("levels have different input dimensions");
  std::vector<int> map(fine.rows(), -1);
  std::vector<char> used(coarse.rows(), 0);
  for (Eigen::Index i = 0; i < fine.rows(); ++i) {
    for (Eigen::Index k = 0; k < coarse.rows(); ++k) {
      if (((fine.row(i) - coarse.row(k)).array().abs() <= kNestTolerance).all()) {
        map[i] = static_cast<int>(k);
        break;
      }
    }
    if (map[i] < 0) {
      throw NestingError("point " + std::to_string(i + 1) + " " + format_point(fine.row(i).transpose()) +
                         " of level " + std::to_string(fine_level) + " is not in the design of level " +
                         std::to_string(fine_level - 1));
    }
    if (used[map[i]]) {
      throw NestingError("point " + std::to_string(i + 1) + " of level " + std::to_string(fine_level) +
                         " duplicates another point of that level");
    }
    used[map[i]] = 1;
  }
  return map;
}

namespace {

std::vector<std::vector<int>> nest_all(std::vector<LevelData>& levels) {
  std::vector<std::vector<int>> maps(levels.size());
  for (std::size_t t = 0; t < levels.size(); ++t) {
    if (levels[t].observations.size() != levels[t].design.rows())
      throw LevelFitError(static_cast<int>(t) + 1,
                          ShapeError("observations length " + std::to_string(levels[t].observations.size()) +
                                     " differs from design size " + std::to_string(levels[t].design.rows())));
    if (levels[t].dim() != levels[0].dim()) throw ShapeError("levels have different input dimensions");
  }
  for (std::size_t t = 1; t < levels.size(); ++t) {
    LevelData& cur = levels[t];
    const LevelData& below = levels[t - 1];
    const int level = static_cast<int>(t) + 1;
    maps[t] = nest_map(cur.design, below.design, level);
    Eigen::VectorXd lower(cur.n());
    for (int i = 0; i < cur.n(); ++i) lower[i] = below.observations[maps[t][i]];
    if (!cur.g_basis) cur.g_basis = BasisSpec::constant();
    if (!cur.lower_observations) {
      cur.lower_observations = lower;
    } else {
      if (cur.lower_observations->size() != cur.n()) throw ShapeError("lower observations length differs from design");
      for (int i = 0; i < cur.n(); ++i) {
        const double given = (*cur.lower_observations)[i];
        if (std::abs(given - lower[i]) > 1e-12 * std::max(1.0, std::abs(lower[i]))) {
          std::ostringstream os;
          os.precision(17);
          os << "level " << level << " point " << i + 1 << ": z_lower = " << given << " but level " << level - 1
             << " observed " << lower[i];
          throw StructuralError(os.str());
        }
      }
    }
  }
  if (!levels.empty() && (levels[0].g_basis || levels[0].lower_observations))
    throw StructuralError("level 1 must not have a g-basis or lower observations");
  for (std::size_t t = 0; t < levels.size(); ++t) {
    try {
      levels[t].validate();
    } catch (const Error& e) {
      throw LevelFitError(static_cast<int>(t) + 1, e);
    }
  }
  return maps;
}

}  // namespace

MultiFidelityModel fit(std::vector<LevelData> levels, const FitOptions& options) {
  if (levels.empty()) throw StructuralError("need at least one level");
  const std::size_t s = levels.size();
  if (!options.priors.empty() && options.priors.size() != s) throw ShapeError("need one prior per level");
  if (!options.kernels.empty() && options.kernels.size() != s) throw ShapeError("need one kernel per level");
  MultiFidelityModel model;
  model.nest_maps = nest_all(levels);
  model.fitted.reserve(s);
  for (std::size_t t = 0; t < s; ++t) {
    const PriorSpec prior = options.priors.empty() ? PriorSpec{} : options.priors[t];
    try {
      KernelSpec kernel;
      if (!options.kernels.empty() && options.kernels[t]) {
        kernel = *options.kernels[t];
      } else {
        ThetaSearch search = options.search;
        search.seed = options.search.seed + 7919u * t;
        kernel = optimize_theta(levels[t], search, options.auto_nugget, options.nugget_policy).kernel;
      }
      model.fitted.push_back(fit_level(levels[t], kernel, prior, options.nugget_policy));
    } catch (const LevelFitError&) {
      throw;
    } catch (const Error& e) {
      throw LevelFitError(static_cast<int>(t) + 1, e);
    }
  }
  model.data = std::move(levels);
  add_level_warnings(model);
  return model;
}

MultiFidelityModel assemble(std::vector<LevelData> levels, std::vector<FittedLevel> fitted) {
  if (levels.size() != fitted.size() || levels.empty()) throw StructuralError("levels and fits disagree");
  MultiFidelityModel model;
  model.nest_maps = nest_all(levels);
  model.data = std::move(levels);
  model.fitted = std::move(fitted);
  add_level_warnings(model);
  return model;
}

Prediction predict_simple(const MultiFidelityModel& model, const Eigen::Ref<const Eigen::VectorXd>& x,
                          const Eigen::VectorXd& sigma2) {
  check_point(model, x);
  check_sigma2(model, sigma2);
  Prediction out;
  out.mode = PredictionMode::Simple;
  double mean = 0.0;
  double var = 0.0;
  for (int t = 0; t < model.levels(); ++t) {
    const LevelTerms lt = level_terms(model.data[t], model.fitted[t], x, mean);
    const double local = std::max(0.0, 1.0 - lt.rw.squaredNorm());
    var = lt.rho * lt.rho * var + sigma2[t] * local;
    mean = lt.mean;
    out.mean.push_back(mean);
    out.variance.push_back(var);
    out.rho_hat.push_back(lt.rho);
  }
  return out;
}

Prediction predict_simple(const MultiFidelityModel& model, const Eigen::Ref<const Eigen::VectorXd>& x) {
  return predict_simple(model, x, model.sigma2_eml());
}

Prediction predict_universal(const MultiFidelityModel& model, const Eigen::Ref<const Eigen::VectorXd>& x,
                             const Eigen::VectorXd& sigma2) {
  check_point(model, x);
  check_sigma2(model, sigma2);
  Prediction out;
  out.mode = PredictionMode::Universal;
  double mean = 0.0;
  double var = 0.0;
  for (int t = 0; t < model.levels(); ++t) {
    const FittedLevel& fit = model.fitted[t];
    const LevelTerms lt = level_terms(model.data[t], fit, x, mean);
    const double local = std::max(0.0, 1.0 - lt.rw.squaredNorm());
    // h - H^T R^{-1} r
    const Eigen::VectorXd u = lt.h - fit.whitened_H.transpose() * lt.rw;
    const double trend = sigma2[t] * u.dot(fit.trend_cov_scale * u);
    var = lt.rho * lt.rho * var + sigma2[t] * local + std::max(0.0, trend);
    mean = lt.mean;
    out.mean.push_back(mean);
    out.variance.push_back(var);
    out.rho_hat.push_back(lt.rho);
  }
  return out;
}

Prediction predict_universal(const MultiFidelityModel& model, const Eigen::Ref<const Eigen::VectorXd>& x) {
  return predict_universal(model, x, model.sigma2_posterior_mean());
}

std::vector<Prediction> predict_batch(const MultiFidelityModel& model, const Design& points, PredictionMode mode) {
  std::vector<Prediction> out;
  out.reserve(points.rows());
  if (mode == PredictionMode::Simple) {
    const Eigen::VectorXd s2 = model.sigma2_eml();
    for (Eigen::Index i = 0; i < points.rows(); ++i) out.push_back(predict_simple(model, points.row(i).transpose(), s2));
  } else {
    const Eigen::VectorXd s2 = model.sigma2_posterior_mean();
    for (Eigen::Index i = 0; i < points.rows(); ++i)
      out.push_back(predict_universal(model, points.row(i).transpose(), s2));
  }
  return out;
}

}  // namespace mfk
