#ifndef MFK_BENCHMARK_HPP
#define MFK_BENCHMARK_HPP

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

#include "mfk/kernels.hpp"

namespace mfk {

/// High-fidelity Forrester function on [0,1] and its cheap linear-distortion companion.
double forrester_high(double x);
double forrester_low(double x);

/// Two-input variant on [0,1]^2.
double forrester2_high(const Eigen::Ref<const Eigen::VectorXd>& x);
double forrester2_low(const Eigen::Ref<const Eigen::VectorXd>& x);

struct BenchmarkRequest {
  int dim = 1;  // 1 or 2
  int n1 = 25;
  std::vector<int> n2 = {5, 10, 15, 20, 25};
  int repeats = 100;
  std::uint64_t seed = 0;
  int restarts = 5;
};

struct BenchmarkRow {
  int n2 = 0;
  double cokriging_mean = 0.0;
  double cokriging_q05 = 0.0;
  double cokriging_q95 = 0.0;
  double kriging_mean = 0.0;
  double kriging_q05 = 0.0;
  double kriging_q95 = 0.0;
  double cokriging_win_rate = 0.0;  // share of repeats where co-kriging has the lower RMSE
  int failures = 0;                 // repeats skipped because a fit failed
};

/// Test points: a regular grid of 201 points (1-D) or 21 x 21 points (2-D).
Design benchmark_test_points(int dim);

/// For every n2 and repeat: nested designs (n1, n2), co-kriging on both levels versus
/// kriging on the high-fidelity level alone, RMSE on the test grid.
std::vector<BenchmarkRow> run_benchmark(const BenchmarkRequest& request);
std::string benchmark_csv(const std::vector<BenchmarkRow>& rows);

}  // namespace mfk

#endif  // MFK_BENCHMARK_HPP
