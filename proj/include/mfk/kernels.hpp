#ifndef MFK_KERNELS_HPP
#define MFK_KERNELS_HPP

#include <Eigen/Dense>

#include <vector>

namespace mfk {

/// Design sets are stored row-wise: one point per row, one input dimension per column.
using Design = Eigen::MatrixXd;

enum class KernelFamily { Matern52, SquaredExponential };

/// Tensorized stationary correlation with one length scale per input dimension.
///
/// `nugget` is a relative diagonal inflation applied only when a correlation
/// matrix over a design is assembled; point-to-point correlations never see it.
struct KernelSpec {
  KernelFamily family = KernelFamily::Matern52;
  Eigen::VectorXd theta;
  double nugget = 1e-10;

  int dim() const { return static_cast<int>(theta.size()); }
  /// Throws InvalidHyperparameter on nonpositive/nonfinite length scales or negative nugget.
  void validate() const;
};

KernelSpec matern52(Eigen::VectorXd theta, double nugget = 1e-10);

double matern52_1d(double h, double theta);
double sqexp_1d(double h, double theta);

/// Product of per-dimension 1-D correlations of |x_j - x2_j|.
double correlation(const Eigen::Ref<const Eigen::VectorXd>& x, const Eigen::Ref<const Eigen::VectorXd>& x2,
                   const KernelSpec& spec);

/// Correlations between `x` and every row of `design`, no nugget.
Eigen::VectorXd correlation_vector(const Eigen::Ref<const Eigen::VectorXd>& x, const Design& design,
                                   const KernelSpec& spec);

/// Cross-correlation block between the rows of `a` and the rows of `b`, no nugget.
Eigen::MatrixXd cross_correlation(const Design& a, const Design& b, const KernelSpec& spec);

/// Cholesky factor of a correlation matrix together with the nugget that made it factorizable.
class CholeskyFactor {
 public:
  CholeskyFactor() = default;
  CholeskyFactor(Eigen::MatrixXd lower, double applied_nugget)
      : lower_(std::move(lower)), applied_nugget_(applied_nugget) {}

  int size() const { return static_cast<int>(lower_.rows()); }
  const Eigen::MatrixXd& lower() const { return lower_; }
  double applied_nugget() const { return applied_nugget_; }

  /// R^{-1} b
  template <class Derived>
  typename Derived::PlainObject solve(const Eigen::MatrixBase<Derived>& b) const {
    typename Derived::PlainObject y = b;
    lower_.triangularView<Eigen::Lower>().solveInPlace(y);
    lower_.triangularView<Eigen::Lower>().transpose().solveInPlace(y);
    return y;
  }
  /// L^{-1} b, so that b^T R^{-1} b = ||L^{-1} b||^2
  template <class Derived>
  typename Derived::PlainObject half_solve(const Eigen::MatrixBase<Derived>& b) const {
    typename Derived::PlainObject y = b;
    lower_.triangularView<Eigen::Lower>().solveInPlace(y);
    return y;
  }
  /// log det R
  double log_det() const;
  /// L L^T
  Eigen::MatrixXd reconstruct() const;
  /// Dense R^{-1}; only cross-validation block formulas need it.
  Eigen::MatrixXd inverse() const;

 private:
  Eigen::MatrixXd lower_;
  double applied_nugget_ = 0.0;
};

/// How far the nugget may be raised when a factorization fails.
struct NuggetPolicy {
  bool escalate = true;
  double factor = 10.0;
  double max_nugget = 1e-6;
};

/// Cholesky of `matrix` into `lower`; false when a pivot is nonpositive or at round-off level.
bool try_cholesky(const Eigen::MatrixXd& matrix, Eigen::MatrixXd& lower);

struct CorrelationMatrix {
  Eigen::MatrixXd matrix;  // includes nugget on the diagonal
  CholeskyFactor factor;
};

/// Assembles R over `design`, diagonal 1 + nugget, and factorizes it.
///
/// Starting from spec.nugget, a failed factorization retries with the nugget
/// multiplied by policy.factor until policy.max_nugget. A zero nugget is never
/// escalated: the caller asked for exact interpolation. Throws IllConditioned
/// carrying the last nugget tried.
CorrelationMatrix correlation_matrix(const Design& design, const KernelSpec& spec,
                                     const NuggetPolicy& policy = {});

}  // namespace mfk

#endif  // MFK_KERNELS_HPP
