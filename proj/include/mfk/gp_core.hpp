#ifndef MFK_GP_CORE_HPP
#define MFK_GP_CORE_HPP

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

#include "mfk/kernels.hpp"

namespace mfk {

struct BasisTerm {
  enum class Kind { Constant, Linear };
  Kind kind = Kind::Constant;
  int dim = -1;  // input dimension for Linear terms, 0-based

  friend bool operator==(const BasisTerm&, const BasisTerm&) = default;
};

/// Ordered list of monomials (constant or a single input coordinate).
class BasisSpec {
 public:
  BasisSpec() = default;
  explicit BasisSpec(std::vector<BasisTerm> terms);

  static BasisSpec constant();
  static BasisSpec constant_and_linear(int dim);
  /// Parses "1,x1,x3" (inputs numbered from 1).
  static BasisSpec parse(const std::string& text);

  int size() const { return static_cast<int>(terms_.size()); }
  const std::vector<BasisTerm>& terms() const { return terms_; }
  std::string to_string() const;
  /// Throws ShapeError if a Linear term refers to a dimension >= dim.
  void check_dim(int dim) const;

  Eigen::VectorXd eval(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  Eigen::VectorXd eval(const Eigen::VectorXd& x) const { return eval(Eigen::Ref<const Eigen::VectorXd>(x)); }
  Eigen::MatrixXd eval(const Design& design) const;

  friend bool operator==(const BasisSpec&, const BasisSpec&) = default;

 private:
  std::vector<BasisTerm> terms_;
};

/// One fidelity level: design, responses and regression bases.
///
/// Level 1 carries no g-basis and no lower observations; every higher level
/// carries both, with lower_observations = z_{t-1} evaluated on this design.
struct LevelData {
  Design design;
  Eigen::VectorXd observations;
  BasisSpec f_basis = BasisSpec::constant();
  std::optional<BasisSpec> g_basis;
  std::optional<Eigen::VectorXd> lower_observations;

  int n() const { return static_cast<int>(design.rows()); }
  int dim() const { return static_cast<int>(design.cols()); }
  int p() const { return f_basis.size(); }
  int q() const { return g_basis ? g_basis->size() : 0; }
  bool is_base_level() const { return !g_basis.has_value(); }

  void validate() const;
};

enum class PriorMode { NonInformative, Informative };

/// Conjugate Normal / inverse-Gamma prior on (beta_rho, beta) and sigma^2.
struct PriorSpec {
  PriorMode mode = PriorMode::NonInformative;
  Eigen::VectorXd b;  // prior mean, rho coefficients first
  Eigen::MatrixXd V;  // prior covariance divided by sigma^2
  double alpha = 0.0;
  double gamma = 0.0;

  static PriorSpec non_informative() { return {}; }
  static PriorSpec informative(Eigen::VectorXd b, Eigen::MatrixXd V, double alpha, double gamma);
  void validate(int parameter_count) const;
};

/// Regression matrix of a level: F at level 1, [G (.) (z_{t-1} 1^T), F] above.
Eigen::MatrixXd build_experience_matrix(const LevelData& level);

struct TrendPosterior {
  Eigen::VectorXd mean;        // Sigma nu
  Eigen::MatrixXd covariance;  // Sigma
  Eigen::MatrixXd cov_scale;   // Sigma / sigma^2
};

TrendPosterior trend_posterior(const Eigen::MatrixXd& H, const CholeskyFactor& R, const Eigen::VectorXd& z,
                               double sigma2, const PriorSpec& prior);

struct VariancePosterior {
  double Q = 0.0;  // the posterior is IG(a, Q/2)
  double a = 0.0;
};

/// Non-informative shape is (n - p - q)/2 with p + q the column count of H.
VariancePosterior variance_posterior(const Eigen::MatrixXd& H, const CholeskyFactor& R, const Eigen::VectorXd& z,
                                     const PriorSpec& prior);

/// Restricted maximum likelihood variance estimate Q / (2a).
double sigma2_eml(double Q, double a);

/// Mean of the IG(a, Q/2) posterior, Q / (2(a-1)); requires a > 1.
double sigma2_posterior_mean(double Q, double a);

/// Posterior quantities of one fitted level.
struct FittedLevel {
  KernelSpec kernel;  // nugget field holds the applied nugget
  CholeskyFactor factor;
  Eigen::MatrixXd H;
  Eigen::MatrixXd whitened_H;  // L^{-1} H
  PriorSpec prior;
  Eigen::VectorXd trend_mean;
  Eigen::MatrixXd trend_cov_scale;
  double Q = 0.0;
  double a = 0.0;
  double sigma2_eml = 0.0;
  Eigen::VectorXd weights;  // R^{-1} (z - H trend_mean)

  double applied_nugget() const { return factor.applied_nugget(); }
};

FittedLevel fit_level(const LevelData& level, const KernelSpec& kernel, const PriorSpec& prior = {},
                      const NuggetPolicy& policy = {});

/// Rebuilds a fitted level from stored posterior quantities, refactorizing R at the stored nugget.
FittedLevel restore_level(const LevelData& level, const KernelSpec& kernel, const PriorSpec& prior,
                          Eigen::VectorXd trend_mean, Eigen::MatrixXd trend_cov_scale, double Q, double a);

/// log det R + (n - p - q) log sigma2_EML, minimized over the length scales.
double concentrated_reml(const LevelData& level, const KernelSpec& kernel, const NuggetPolicy& policy = {});

}  // namespace mfk

#endif  // MFK_GP_CORE_HPP
