#ifndef MFK_JOINT_ORACLE_HPP
#define MFK_JOINT_ORACLE_HPP

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

#include "mfk/gp_core.hpp"
#include "mfk/kernels.hpp"
#include "mfk/model.hpp"

namespace mfk {

/// Fixed parameters of one level of the joint autoregressive model.
struct JointLevelParams {
  Eigen::VectorXd beta;      // p_t trend coefficients
  Eigen::VectorXd beta_rho;  // q_{t-1} coefficients of rho_{t-1}; empty at level 1
  double sigma2 = 1.0;
  KernelSpec kernel;         // nugget applies between coincident design points
};

/// Parameters the recursive model estimated, with per-level variances `sigma2`.
std::vector<JointLevelParams> joint_params(const MultiFidelityModel& model, const Eigen::VectorXd& sigma2);

/// Joint covariance model of all observations of all levels, stacked level 1 first.
struct JointModel {
  std::vector<LevelData> levels;
  std::vector<JointLevelParams> params;
  Design points;                  // all design points, stacked
  std::vector<int> point_level;   // 0-based level of every stacked row
  std::vector<Eigen::VectorXd> point_rhos;
  Eigen::VectorXd z;              // stacked observations
  Eigen::MatrixXd V;
  Eigen::MatrixXd H;              // rows h_t(x)^T at the stacked points
  Eigen::VectorXd beta_all;
  Eigen::MatrixXd V_lower;        // Cholesky factor of V (+ jitter)
  double jitter = 0.0;            // extra diagonal added to factorize V
  Eigen::VectorXd alpha;          // V^{-1} (z - H beta)

  int levels_count() const { return static_cast<int>(levels.size()); }
};

/// Entry t (t >= 1) is the coefficient rho linking level t-1 to level t at x; entry 0 is 1.
Eigen::VectorXd joint_rhos(const JointModel& jm, const Eigen::Ref<const Eigen::VectorXd>& x);

/// cov(Z_t(x), Z_u(x')) for 0-based levels t, u; `same` marks coincident design points.
double joint_covariance(const JointModel& jm, int t, const Eigen::Ref<const Eigen::VectorXd>& x, int u,
                        const Eigen::Ref<const Eigen::VectorXd>& x2, bool same);

/// Experience vector h_t(x) over the stacked beta of all levels (zero beyond level t).
Eigen::VectorXd joint_experience(const JointModel& jm, int t, const Eigen::Ref<const Eigen::VectorXd>& x);

JointModel build_joint(std::vector<LevelData> levels, std::vector<JointLevelParams> params);

struct JointPrediction {
  double mean = 0.0;
  double variance = 0.0;
};

/// Top-level conditional mean and variance at x (x treated as a new location).
JointPrediction joint_predict(const JointModel& jm, const Eigen::Ref<const Eigen::VectorXd>& x);

struct TimingReport {
  std::vector<int> sizes;  // n_1..n_s
  int dim = 0;
  std::uint64_t seed = 0;
  int queries = 0;
  double recursive_seconds = 0.0;
  double joint_seconds = 0.0;
  double max_mean_rel_diff = 0.0;
  double max_variance_rel_diff = 0.0;
  double speedup() const { return joint_seconds / recursive_seconds; }
};

/// Deterministic synthetic instance with nested designs of sizes n_1..n_s in [0,1]^d.
std::vector<LevelData> synthetic_levels(const std::vector<int>& sizes, int dim, std::uint64_t seed);

/// Fits and predicts `queries` points with both pipelines at fixed length scales, timing each.
TimingReport timed_fit_predict(const std::vector<int>& sizes, int dim, std::uint64_t seed, int queries = 100);

}  // namespace mfk

#endif  // MFK_JOINT_ORACLE_HPP
