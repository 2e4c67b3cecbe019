#ifndef MFK_CROSSVAL_HPP
#define MFK_CROSSVAL_HPP

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

#include "mfk/gp_core.hpp"
#include "mfk/model.hpp"

namespace mfk {

/// Which trend coefficients drive rho_{t-1}(x) at the held-out points.
enum class RhoSource { FoldEstimate, FullData };

/// Cross-validation plan over the top-level design D_s.
///
/// Held-out points are removed from levels removal_depth..s (1-based); lower
/// levels keep them. With re-estimation on, trend and variance parameters are
/// recomputed on the retained data of every affected level; kernels never are.
struct CVRequest {
  std::vector<std::vector<int>> folds;  // row indices into D_s, 0-based
  int removal_depth = 1;
  bool reestimate_trend = true;
  bool reestimate_variance = true;
  PredictionMode mode = PredictionMode::Simple;
  RhoSource rho_source = RhoSource::FoldEstimate;

  static CVRequest leave_one_out(int n_top, int removal_depth);
  /// k nearly equal folds over a seeded shuffle of 0..n_top-1.
  static CVRequest k_fold(int n_top, int k, std::uint64_t seed, int removal_depth);
};

struct CVFold {
  std::vector<int> indices;
  Eigen::VectorXd errors;     // observed minus predicted at level s
  Eigen::VectorXd variances;  // predictive variances at level s
  Eigen::VectorXd trend;      // lambda_{s,-xi} used at level s
  double sigma2 = 0.0;        // sigma^2_{s,-xi} used at level s
};

struct CVReport {
  std::vector<CVFold> folds;
  int removal_depth = 1;
  PredictionMode mode = PredictionMode::Simple;
  double rmse = 0.0;  // 0 for an empty report
};

/// Closed-form cross-validation reusing the fitted factorizations of `model`.
CVReport fast_cv(const MultiFidelityModel& model, const CVRequest& request);

/// Reference cross-validation: refits every level from scratch on the retained data of
/// each fold (kernels fixed) and predicts the held-out points with the standard pipeline.
CVReport brute_force_cv(const std::vector<LevelData>& levels, const CVRequest& request,
                        const std::vector<KernelSpec>& kernels, const std::vector<PriorSpec>& priors = {});

/// Square root of the mean squared error over all held-out points.
double loo_rmse(const CVReport& report);

/// Sum of squared leave-one-out errors of a single level, trend re-estimated per point,
/// with the level below treated as exact. Used to select length scales.
double level_loo_sse(const LevelData& level, const KernelSpec& kernel, const NuggetPolicy& policy = {});

}  // namespace mfk

#endif  // MFK_CROSSVAL_HPP
