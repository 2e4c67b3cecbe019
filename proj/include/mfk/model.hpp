#ifndef MFK_MODEL_HPP
#define MFK_MODEL_HPP

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mfk/gp_core.hpp"
#include "mfk/kernels.hpp"
#include "mfk/optimize.hpp"

namespace mfk {

enum class PredictionMode { Simple, Universal };

/// Recursive co-kriging model: levels ordered by increasing fidelity, each fitted on its own.
///
/// nest_maps[t] (t >= 1) gives, for every row of level t's design, the row of
/// level t-1's design holding the same point. nest_maps[0] is empty.
struct MultiFidelityModel {
  std::vector<LevelData> data;
  std::vector<FittedLevel> fitted;
  std::vector<std::vector<int>> nest_maps;
  std::vector<std::string> warnings;

  int levels() const { return static_cast<int>(data.size()); }
  int dim() const { return data.empty() ? 0 : data.front().dim(); }
  /// Default simple-mode variances: sigma2_EML per level.
  Eigen::VectorXd sigma2_eml() const;
  /// Q_t / (2(a_t - 1)) per level; throws DegeneratePosterior when some a_t <= 1.
  Eigen::VectorXd sigma2_posterior_mean() const;
};

/// Predictive mean and variance at one point, for every level 1..s.
struct Prediction {
  PredictionMode mode = PredictionMode::Simple;
  std::vector<double> mean;
  std::vector<double> variance;
  std::vector<double> rho_hat;  // rho_{t-1}(x) per level; 0 at level 1

  double top_mean() const { return mean.back(); }
  double top_variance() const { return variance.back(); }
};

struct FitOptions {
  /// One prior per level; empty means non-informative everywhere.
  std::vector<PriorSpec> priors;
  /// One kernel per level; std::nullopt estimates theta for that level.
  std::vector<std::optional<KernelSpec>> kernels;
  ThetaSearch search;
  /// Starting nugget for estimated kernels.
  double auto_nugget = 1e-10;
  NuggetPolicy nugget_policy;
};

/// Row index in `coarse` of every row of `fine`, matching coordinates within 1e-12.
/// Throws NestingError naming the first point that has no match.
std::vector<int> nest_map(const Design& fine, const Design& coarse, int fine_level);

/// Fits levels 1..s in order. Missing lower observations at level t > 1 are filled
/// from level t-1 through the nesting map; present ones must agree with it.
MultiFidelityModel fit(std::vector<LevelData> levels, const FitOptions& options = {});

/// Rebuilds the derived fields (nest maps, warnings) of a model whose levels are already fitted.
MultiFidelityModel assemble(std::vector<LevelData> levels, std::vector<FittedLevel> fitted);

/// Recursive co-kriging with trend parameters fixed at their posterior means and
/// variances fixed at `sigma2` (one per level).
Prediction predict_simple(const MultiFidelityModel& model, const Eigen::Ref<const Eigen::VectorXd>& x,
                          const Eigen::VectorXd& sigma2);
Prediction predict_simple(const MultiFidelityModel& model, const Eigen::Ref<const Eigen::VectorXd>& x);

/// Universal co-kriging: trend uncertainty integrated out, variance at its posterior mean.
Prediction predict_universal(const MultiFidelityModel& model, const Eigen::Ref<const Eigen::VectorXd>& x);
/// Same equations with the per-level variance factor supplied by the caller.
Prediction predict_universal(const MultiFidelityModel& model, const Eigen::Ref<const Eigen::VectorXd>& x,
                             const Eigen::VectorXd& sigma2);

std::vector<Prediction> predict_batch(const MultiFidelityModel& model, const Design& points, PredictionMode mode);

}  // namespace mfk

#endif  // MFK_MODEL_HPP
