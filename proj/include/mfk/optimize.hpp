#ifndef MFK_OPTIMIZE_HPP
#define MFK_OPTIMIZE_HPP

#include <Eigen/Dense>

#include <cstdint>
#include <optional>

#include "mfk/gp_core.hpp"
#include "mfk/kernels.hpp"

namespace mfk {

enum class ThetaObjective { Reml, LooCv };

struct ThetaBounds {
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
};

/// [1e-2, 1e2] times the per-dimension input range of the design.
ThetaBounds default_theta_bounds(const Design& design);

struct ThetaSearch {
  ThetaObjective objective = ThetaObjective::Reml;
  int restarts = 10;
  std::uint64_t seed = 0;
  std::optional<ThetaBounds> bounds;
  int max_evaluations = 400;  // per local search
};

/// Value of the selected objective at `kernel`; lower is better.
double theta_objective(const LevelData& level, const KernelSpec& kernel, ThetaObjective objective,
                       const NuggetPolicy& policy = {});

struct ThetaFit {
  KernelSpec kernel;
  double objective = 0.0;
  /// Objective at every multistart initial point that could be evaluated.
  std::vector<double> initial_objectives;
};

/// Multistart simplex search in log(theta) space, deterministic for a given seed.
ThetaFit optimize_theta(const LevelData& level, const ThetaSearch& search, double nugget = 1e-10,
                        const NuggetPolicy& policy = {});

}  // namespace mfk

#endif  // MFK_OPTIMIZE_HPP
