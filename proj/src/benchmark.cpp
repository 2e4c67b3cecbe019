#include "mfk/benchmark.hpp"

#include <algorithm>
#include <cmath>

#include "mfk/design.hpp"
#include "mfk/errors.hpp"
#include "mfk/io.hpp"
#include "mfk/metrics.hpp"
#include "mfk/model.hpp"

namespace mfk {

double forrester_high(double x) { return std::pow(6.0 * x - 2.0, 2) * std::sin(12.0 * x - 4.0); }

double forrester_low(double x) { return 0.5 * forrester_high(x) + 10.0 * (x - 0.5) - 5.0; }

double forrester2_high(const Eigen::Ref<const Eigen::VectorXd>& x) {
  return forrester_high(x[0]) + 0.5 * forrester_high(x[1]) + 2.0 * x[0] * x[1];
}

double forrester2_low(const Eigen::Ref<const Eigen::VectorXd>& x) {
  return 0.5 * forrester2_high(x) + 10.0 * (x[0] - 0.5) + 5.0 * (x[1] - 0.5) - 5.0;
}

Design benchmark_test_points(int dim) {
  if (dim == 1) {
    Design g(201, 1);
    for (int i = 0; i < 201; ++i) g(i, 0) = i / 200.0;
    return g;
  }
  if (dim != 2) throw InvalidHyperparameter("benchmark dimension must be 1 or 2");
  Design g(21 * 21, 2);
  for (int i = 0; i < 21; ++i)
    for (int k = 0; k < 21; ++k) {
      g(21 * i + k, 0) = i / 20.0;
      g(21 * i + k, 1) = k / 20.0;
    }
  return g;
}

namespace {

double high(int dim, const Eigen::VectorXd& x) { return dim == 1 ? forrester_high(x[0]) : forrester2_high(x); }
double low(int dim, const Eigen::VectorXd& x) { return dim == 1 ? forrester_low(x[0]) : forrester2_low(x); }

double quantile(std::vector<double> v, double p) {
  std::sort(v.begin(), v.end());
  const double pos = p * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double test_rmse(const MultiFidelityModel& model, const Design& test, const Eigen::VectorXd& truth) {
  const std::vector<Prediction> pred = predict_batch(model, test, PredictionMode::Simple);
  EvalSet e;
  e.truth = truth;
  e.pred_mean.resize(truth.size());
  for (Eigen::Index i = 0; i < truth.size(); ++i) e.pred_mean[i] = pred[i].top_mean();
  return rmse(e);
}

}  // namespace

std::vector<BenchmarkRow> run_benchmark(const BenchmarkRequest& req) {
  if (req.dim != 1 && req.dim != 2) throw InvalidHyperparameter("benchmark dimension must be 1 or 2");
  if (req.repeats < 1) throw InvalidHyperparameter("repeats must be at least 1");
  for (int n2 : req.n2)
    if (n2 < 3 || n2 > req.n1) throw InvalidHyperparameter("each n2 must lie in [3, n1]");

  const Design test = benchmark_test_points(req.dim);
  Eigen::VectorXd truth(test.rows());
  for (Eigen::Index i = 0; i < test.rows(); ++i) truth[i] = high(req.dim, test.row(i).transpose());

  FitOptions options;
  options.search.restarts = req.restarts;

  std::vector<BenchmarkRow> rows;
  for (int n2 : req.n2) {
    BenchmarkRow row;
    row.n2 = n2;
    std::vector<double> ck, kr;
    int wins = 0;
    for (int r = 0; r < req.repeats; ++r) {
      DesignRequest dr;
      dr.sizes = {n2, req.n1};
      dr.bounds.assign(req.dim, Interval{0.0, 1.0});
      dr.seed = req.seed * 1000003ULL + static_cast<std::uint64_t>(r) * 7919ULL + static_cast<std::uint64_t>(n2);
      const std::vector<Design> designs = nest(dr);
      std::vector<LevelData> levels(2);
      for (int t = 0; t < 2; ++t) {
        levels[t].design = designs[t];
        levels[t].observations.resize(designs[t].rows());
        for (Eigen::Index i = 0; i < designs[t].rows(); ++i) {
          const Eigen::VectorXd x = designs[t].row(i).transpose();
          levels[t].observations[i] = t == 0 ? low(req.dim, x) : high(req.dim, x);
        }
      }
      options.search.seed = dr.seed;
      try {
        const double e_ck = test_rmse(fit(levels, options), test, truth);
        LevelData alone = levels[1];
        const double e_kr = test_rmse(fit({alone}, options), test, truth);
        ck.push_back(e_ck);
        kr.push_back(e_kr);
        if (e_ck < e_kr) ++wins;
      } catch (const Error&) {
        ++row.failures;
      }
    }
    if (ck.empty()) throw OptimizationFailed("every benchmark repeat failed at n2 = " + std::to_string(n2));
    row.cokriging_mean = mean_of(ck);
    row.cokriging_q05 = quantile(ck, 0.05);
    row.cokriging_q95 = quantile(ck, 0.95);
    row.kriging_mean = mean_of(kr);
    row.kriging_q05 = quantile(kr, 0.05);
    row.kriging_q95 = quantile(kr, 0.95);
    row.cokriging_win_rate = static_cast<double>(wins) / static_cast<double>(ck.size());
    rows.push_back(row);
  }
  return rows;
}

std::string benchmark_csv(const std::vector<BenchmarkRow>& rows) {
  std::string out =
      "n2,cokriging_rmse_mean,cokriging_rmse_q05,cokriging_rmse_q95,kriging_rmse_mean,kriging_rmse_q05,"
      "kriging_rmse_q95,cokriging_win_rate,failures\n";
  for (const auto& r : rows) {
    out += std::to_string(r.n2);
    for (double v : {r.cokriging_mean, r.cokriging_q05, r.cokriging_q95, r.kriging_mean, r.kriging_q05, r.kriging_q95,
                     r.cokriging_win_rate})
      out += "," + format_double(v);
    out += "," + std::to_string(r.failures) + "\n";
  }
  return out;
}

}  // namespace mfk
