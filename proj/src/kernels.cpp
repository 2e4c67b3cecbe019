#include "mfk/kernels.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "mfk/errors.hpp"

namespace mfk {

namespace {

constexpr double kSqrt5 = 2.23606797749978969641;

inline double kernel_1d(KernelFamily family, double h, double theta) {
  return family == KernelFamily::Matern52 ? matern52_1d(h, theta) : sqexp_1d(h, theta);
}

}  // namespace

void KernelSpec::validate() const {
  if (theta.size() == 0) throw InvalidHyperparameter("kernel has no length scales");
  for (Eigen::Index j = 0; j < theta.size(); ++j) {
    if (!(theta[j] > 0.0) || !std::isfinite(theta[j])) {
      std::ostringstream os;
      os << "theta[" << j << "] = " << theta[j] << " must be positive and finite";
      throw InvalidHyperparameter(os.str());
    }
  }
  if (!(nugget >= 0.0) || !std::isfinite(nugget)) throw InvalidHyperparameter("nugget must be nonnegative");
}

KernelSpec matern52(Eigen::VectorXd theta, double nugget) {
  KernelSpec spec{KernelFamily::Matern52, std::move(theta), nugget};
  spec.validate();
  return spec;
}

double matern52_1d(double h, double theta) {
  if (!(theta > 0.0)) throw InvalidHyperparameter("matern52 length scale must be positive");
  const double u = std::abs(h) / theta;
  return (1.0 + kSqrt5 * u + (5.0 / 3.0) * u * u) * std::exp(-kSqrt5 * u);
}

double sqexp_1d(double h, double theta) {
  if (!(theta > 0.0)) throw InvalidHyperparameter("squared-exponential length scale must be positive");
  const double u = h / theta;
  return std::exp(-0.5 * u * u);
}

double correlation(const Eigen::Ref<const Eigen::VectorXd>& x, const Eigen::Ref<const Eigen::VectorXd>& x2,
                   const KernelSpec& spec) {
  if (x.size() != spec.theta.size() || x2.size() != spec.theta.size()) {
    std::ostringstream os;
    os << "points of dimension " << x.size() << " and " << x2.size() << " against kernel of dimension "
       << spec.theta.size();
    throw ShapeError(os.str());
  }
  double r = 1.0;
  for (Eigen::Index j = 0; j < x.size(); ++j) r *= kernel_1d(spec.family, x[j] - x2[j], spec.theta[j]);
  return r;
}

Eigen::VectorXd correlation_vector(const Eigen::Ref<const Eigen::VectorXd>& x, const Design& design,
                                   const KernelSpec& spec) {
  if (design.cols() != spec.theta.size()) throw ShapeError("design dimension does not match kernel");
  Eigen::VectorXd r(design.rows());
  for (Eigen::Index i = 0; i < design.rows(); ++i) r[i] = correlation(x, design.row(i).transpose(), spec);
  return r;
}

Eigen::MatrixXd cross_correlation(const Design& a, const Design& b, const KernelSpec& spec) {
  if (a.cols() != spec.theta.size() || b.cols() != spec.theta.size())
    throw ShapeError("design dimension does not match kernel");
  Eigen::MatrixXd out(a.rows(), b.rows());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index k = 0; k < b.rows(); ++k) out(i, k) = correlation(a.row(i).transpose(), b.row(k).transpose(), spec);
  return out;
}

double CholeskyFactor::log_det() const { return 2.0 * lower_.diagonal().array().log().sum(); }

Eigen::MatrixXd CholeskyFactor::reconstruct() const {
  return lower_.triangularView<Eigen::Lower>() * lower_.transpose();
}

Eigen::MatrixXd CholeskyFactor::inverse() const {
  return solve(Eigen::MatrixXd::Identity(size(), size()).eval());
}

bool try_cholesky(const Eigen::MatrixXd& matrix, Eigen::MatrixXd& lower) {
  Eigen::LLT<Eigen::MatrixXd> llt(matrix);
  if (llt.info() != Eigen::Success) return false;
  lower = llt.matrixL();
  // Reject pivots at round-off level: LLT only fails on exactly nonpositive ones.
  const double scale = matrix.diagonal().maxCoeff();
  const double floor = 10.0 * static_cast<double>(matrix.rows()) * std::numeric_limits<double>::epsilon() * scale;
  const double min_pivot = lower.diagonal().array().square().minCoeff();
  return std::isfinite(min_pivot) && min_pivot > floor;
}

CorrelationMatrix correlation_matrix(const Design& design, const KernelSpec& spec, const NuggetPolicy& policy) {
  spec.validate();
  if (design.rows() < 1) throw ShapeError("correlation matrix needs at least one point");
  if (!design.allFinite()) throw ShapeError("design contains non-finite coordinates");

  const Eigen::Index n = design.rows();
  Eigen::MatrixXd base(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    base(i, i) = 1.0;
    for (Eigen::Index k = 0; k < i; ++k) {
      const double r = correlation(design.row(i).transpose(), design.row(k).transpose(), spec);
      base(i, k) = r;
      base(k, i) = r;
    }
  }

  double nugget = spec.nugget;
  Eigen::MatrixXd lower;
  for (;;) {
    Eigen::MatrixXd inflated = base;
    inflated.diagonal().array() += nugget;
    if (try_cholesky(inflated, lower)) return {std::move(inflated), CholeskyFactor(std::move(lower), nugget)};
    const double next = nugget * policy.factor;
    if (!policy.escalate || nugget <= 0.0 || next > policy.max_nugget * (1.0 + 1e-12)) {
      std::ostringstream os;
      os << "correlation matrix of " << n << " points is not factorizable (last nugget tried " << nugget << ")";
      throw IllConditioned(os.str(), nugget);
    }
    nugget = next;
  }
}

}  // namespace mfk
