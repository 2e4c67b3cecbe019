#include "mfk/optimize.hpp"

#include <gsl/gsl_errno.h>
#include <gsl/gsl_multimin.h>

#include <cmath>
#include <limits>
#include <memory>
#include <sstream>

#include "mfk/crossval.hpp"
#include "mfk/design.hpp"
#include "mfk/errors.hpp"

namespace mfk {

ThetaBounds default_theta_bounds(const Design& design) {
  const Eigen::Index d = design.cols();
  ThetaBounds b{Eigen::VectorXd(d), Eigen::VectorXd(d)};
  for (Eigen::Index j = 0; j < d; ++j) {
    double range = design.col(j).maxCoeff() - design.col(j).minCoeff();
    if (!(range > 0.0)) range = 1.0;
    b.lower[j] = 1e-2 * range;
    b.upper[j] = 1e2 * range;
  }
  return b;
}

double theta_objective(const LevelData& level, const KernelSpec& kernel, ThetaObjective objective,
                       const NuggetPolicy& policy) {
  if (objective == ThetaObjective::Reml) return concentrated_reml(level, kernel, policy);
  return level_loo_sse(level, kernel, policy);
}

namespace {

struct SearchState {
  const LevelData* level;
  ThetaObjective objective;
  NuggetPolicy policy;
  KernelSpec kernel;
  Eigen::VectorXd log_lower;
  Eigen::VectorXd log_upper;
  double best_value = std::numeric_limits<double>::infinity();
  Eigen::VectorXd best_log_theta;
  int failures = 0;
  std::string last_failure;
};

constexpr double kFailedValue = 1e300;

double evaluate(SearchState& st, const Eigen::VectorXd& log_theta) {
  const Eigen::VectorXd clamped = log_theta.cwiseMax(st.log_lower).cwiseMin(st.log_upper);
  const double penalty = 1e3 * (log_theta - clamped).squaredNorm();
  st.kernel.theta = clamped.array().exp().matrix();
  double value = kFailedValue;
  try {
    value = theta_objective(*st.level, st.kernel, st.objective, st.policy);
    if (!std::isfinite(value)) value = kFailedValue;
  } catch (const Error& e) {
    ++st.failures;
    st.last_failure = e.what();
  }
  if (value < kFailedValue && value < st.best_value) {
    st.best_value = value;
    st.best_log_theta = clamped;
  }
  return value + penalty;
}

double gsl_objective(const gsl_vector* v, void* params) {
  auto& st = *static_cast<SearchState*>(params);
  Eigen::VectorXd y(v->size);
  for (std::size_t j = 0; j < v->size; ++j) y[j] = gsl_vector_get(v, j);
  return evaluate(st, y);
}

struct GslVectorDeleter {
  void operator()(gsl_vector* v) const { gsl_vector_free(v); }
};
struct GslMinimizerDeleter {
  void operator()(gsl_multimin_fminimizer* m) const { gsl_multimin_fminimizer_free(m); }
};

void local_search(SearchState& st, const Eigen::VectorXd& start, int max_evaluations) {
  const std::size_t d = start.size();
  std::unique_ptr<gsl_vector, GslVectorDeleter> x(gsl_vector_alloc(d));
  std::unique_ptr<gsl_vector, GslVectorDeleter> step(gsl_vector_alloc(d));
  for (std::size_t j = 0; j < d; ++j) {
    gsl_vector_set(x.get(), j, start[j]);
    gsl_vector_set(step.get(), j, 0.1 * (st.log_upper[j] - st.log_lower[j]));
  }
  gsl_multimin_function fn{&gsl_objective, d, &st};
  std::unique_ptr<gsl_multimin_fminimizer, GslMinimizerDeleter> m(
      gsl_multimin_fminimizer_alloc(gsl_multimin_fminimizer_nmsimplex2, d));
  if (gsl_multimin_fminimizer_set(m.get(), &fn, x.get(), step.get()) != GSL_SUCCESS) return;
  for (int iter = 0; iter < max_evaluations; ++iter) {
    if (gsl_multimin_fminimizer_iterate(m.get()) != GSL_SUCCESS) break;
    if (gsl_multimin_test_size(gsl_multimin_fminimizer_size(m.get()), 1e-5) == GSL_SUCCESS) break;
  }
}

}  // namespace

ThetaFit optimize_theta(const LevelData& level, const ThetaSearch& search, double nugget,
                        const NuggetPolicy& policy) {
  level.validate();
  if (search.restarts < 1) throw InvalidHyperparameter("restarts must be at least 1");
  const ThetaBounds bounds = search.bounds ? *search.bounds : default_theta_bounds(level.design);
  const int d = level.dim();
  if (bounds.lower.size() != d || bounds.upper.size() != d) throw ShapeError("theta bounds dimension mismatch");
  for (int j = 0; j < d; ++j)
    if (!(bounds.lower[j] > 0.0) || !(bounds.upper[j] >= bounds.lower[j]) || !std::isfinite(bounds.upper[j]))
      throw InvalidHyperparameter("theta bounds must be positive, finite and ordered");

  gsl_error_handler_t* previous = gsl_set_error_handler_off();
  SearchState st;
  st.level = &level;
  st.objective = search.objective;
  st.policy = policy;
  st.kernel = KernelSpec{KernelFamily::Matern52, Eigen::VectorXd::Ones(d), nugget};
  st.log_lower = bounds.lower.array().log();
  st.log_upper = bounds.upper.array().log();

  // Space-filling starts in log(theta).
  DesignBounds unit(d, {0.0, 1.0});
  const Design starts_unit = base_design(search.restarts, unit, DesignMethod::Lhs, search.seed);
  ThetaFit out;
  std::vector<Eigen::VectorXd> starts;
  for (int k = 0; k < search.restarts; ++k) {
    Eigen::VectorXd y = st.log_lower.array() + starts_unit.row(k).transpose().array() * (st.log_upper - st.log_lower).array();
    starts.push_back(y);
    const double v = evaluate(st, y);
    if (v < kFailedValue) out.initial_objectives.push_back(v);
  }
  for (const auto& y : starts) local_search(st, y, search.max_evaluations);
  gsl_set_error_handler(previous);

  if (!std::isfinite(st.best_value)) {
    std::ostringstream os;
    os << "no start produced a finite objective (" << st.failures << " failed evaluations";
    if (!st.last_failure.empty()) os << "; last: " << st.last_failure;
    os << ")";
    throw OptimizationFailed(os.str());
  }
  out.kernel = KernelSpec{KernelFamily::Matern52, st.best_log_theta.array().exp().matrix(), nugget};
  out.objective = st.best_value;
  return out;
}

}  // namespace mfk
