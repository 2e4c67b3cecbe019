#ifndef MFK_METRICS_HPP
#define MFK_METRICS_HPP

#include <Eigen/Dense>

namespace mfk {

struct EvalSet {
  Eigen::VectorXd truth;
  Eigen::VectorXd pred_mean;
  Eigen::VectorXd pred_var;  // may be empty when only mean metrics are needed
};

double rmse(const EvalSet& e);
double maxae(const EvalSet& e);
/// 1 - SSE/SST with SST taken about the mean of the truth.
double q2(const EvalSet& e);
/// Root of the mean predictive variance.
double rimse(const EvalSet& e);

}  // namespace mfk

#endif  // MFK_METRICS_HPP
