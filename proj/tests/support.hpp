#ifndef MFK_TESTS_SUPPORT_HPP
#define MFK_TESTS_SUPPORT_HPP

#include <Eigen/Dense>

#include <cmath>
#include <random>
#include <vector>

#include "mfk/design.hpp"
#include "mfk/gp_core.hpp"
#include "mfk/model.hpp"

namespace testsupport {

inline double rel_diff(double a, double b, double floor = 1e-300) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

// Comparison floors for rel_diff at tolerance `tol`: differences below 1e-14 times the prior
// variance (or the data scale) are double round-off in 1 - r^T R^-1 r, not model disagreement.
inline double variance_floor(const mfk::MultiFidelityModel& m, double tol = 1e-8) {
  return 1e-14 * m.sigma2_eml().sum() / tol;
}
inline double error_floor(const mfk::MultiFidelityModel& m, double tol = 1e-8) {
  return 1e-14 * std::max(1.0, m.data.back().observations.cwiseAbs().maxCoeff()) / tol;
}

// Nested designs of the given sizes (coarsest first) with smooth random responses.
inline std::vector<mfk::LevelData> random_instance(const std::vector<int>& sizes, int dim, std::uint64_t seed,
                                                   bool linear_rho = false) {
  mfk::DesignRequest req;
  req.sizes.assign(sizes.rbegin(), sizes.rend());
  req.bounds.assign(dim, mfk::Interval{0.0, 1.0});
  req.method = mfk::DesignMethod::Lhs;
  req.seed = seed;
  const std::vector<mfk::Design> designs = mfk::nest(req);
  std::mt19937_64 rng(seed * 31 + 7);
  std::normal_distribution<double> g(0.0, 1.0);
  Eigen::VectorXd w = Eigen::VectorXd::NullaryExpr(dim, [&](Eigen::Index) { return 2.0 + g(rng); });
  Eigen::VectorXd c = Eigen::VectorXd::NullaryExpr(dim, [&](Eigen::Index) { return g(rng); });
  const double shift = g(rng);
  std::vector<mfk::LevelData> levels(sizes.size());
  for (std::size_t t = 0; t < sizes.size(); ++t) {
    levels[t].design = designs[t];
    levels[t].observations.resize(designs[t].rows());
    for (Eigen::Index i = 0; i < designs[t].rows(); ++i) {
      const Eigen::VectorXd x = designs[t].row(i).transpose();
      double v = std::sin(w.dot(x) * 3.0) + c.dot(x);
      for (std::size_t k = 1; k <= t; ++k) v = (1.2 + 0.3 * x[0]) * v + std::cos(4.0 * x.sum() + shift + k) * 0.5;
      levels[t].observations[i] = v;
    }
    if (t > 0 && linear_rho) levels[t].g_basis = mfk::BasisSpec::constant_and_linear(0);
  }
  return levels;
}

inline mfk::FitOptions fixed_kernels(int levels, int dim, double theta = 0.3) {
  mfk::FitOptions o;
  for (int t = 0; t < levels; ++t) o.kernels.emplace_back(mfk::matern52(Eigen::VectorXd::Constant(dim, theta)));
  return o;
}

inline mfk::Design random_points(int n, int dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  return mfk::Design::NullaryExpr(n, dim, [&](Eigen::Index, Eigen::Index) { return u(rng); });
}

// Textbook universal kriging with explicit inverses in long double, independent of the
// library's Cholesky solves and accurate enough to be the reference side.
struct DirectKriging {
  double mean = 0.0;
  double variance = 0.0;
};

inline DirectKriging direct_universal_kriging(const mfk::Design& D, const Eigen::VectorXd& z, const Eigen::MatrixXd& F,
                                              const mfk::KernelSpec& k, double nugget,
                                              const Eigen::VectorXd& x, const Eigen::VectorXd& f) {
  using LD = long double;
  using ML = Eigen::Matrix<LD, Eigen::Dynamic, Eigen::Dynamic>;
  using VL = Eigen::Matrix<LD, Eigen::Dynamic, 1>;
  const Eigen::Index n = D.rows();
  ML R(n, n);
  VL r(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    r[i] = mfk::correlation(x, D.row(i).transpose(), k);
    for (Eigen::Index j = 0; j < n; ++j)
      R(i, j) = static_cast<LD>(mfk::correlation(D.row(i).transpose(), D.row(j).transpose(), k)) +
                (i == j ? static_cast<LD>(nugget) : 0.0L);
  }
  const ML Fl = F.cast<LD>();
  const ML Ri = R.fullPivLu().inverse();
  const ML A = (Fl.transpose() * Ri * Fl).fullPivLu().inverse();
  const VL beta = A * Fl.transpose() * Ri * z.cast<LD>();
  const VL res = z.cast<LD>() - Fl * beta;
  const LD Q = res.dot(Ri * res);
  const LD s2 = Q / static_cast<LD>(n - F.cols() - 2);
  const VL u = f.cast<LD>() - Fl.transpose() * Ri * r;
  DirectKriging out;
  out.mean = static_cast<double>(f.cast<LD>().dot(beta) + r.dot(Ri * res));
  out.variance = static_cast<double>(s2 * (1.0L - r.dot(Ri * r) + u.dot(A * u)));
  return out;
}

}  // namespace testsupport

#endif  // MFK_TESTS_SUPPORT_HPP
