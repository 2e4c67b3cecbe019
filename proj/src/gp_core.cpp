#include "mfk/gp_core.hpp"

#include <cmath>
#include <limits>
#include <set>
#include <sstream>

#include "mfk/errors.hpp"

namespace mfk {

// ---------------------------------------------------------------------------
// BasisSpec

BasisSpec::BasisSpec(std::vector<BasisTerm> terms) : terms_(std::move(terms)) {
  if (terms_.empty()) throw StructuralError("basis needs at least one term");
  for (std::size_t i = 0; i < terms_.size(); ++i) {
    const auto& t = terms_[i];
    if (t.kind == BasisTerm::Kind::Linear && t.dim < 0) throw StructuralError("linear basis term without dimension");
    for (std::size_t k = 0; k < i; ++k)
      if (terms_[k] == t) throw StructuralError("duplicate basis term " + std::to_string(i + 1));
  }
}

BasisSpec BasisSpec::constant() { return BasisSpec({BasisTerm{}}); }

BasisSpec BasisSpec::constant_and_linear(int dim) {
  return BasisSpec({BasisTerm{}, BasisTerm{BasisTerm::Kind::Linear, dim}});
}

BasisSpec BasisSpec::parse(const std::string& text) {
  std::vector<BasisTerm> terms;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b == std::string::npos) throw ParseError("empty basis term in '" + text + "'");
    item = item.substr(b, e - b + 1);
    if (item == "1") {
      terms.push_back({});
    } else if (item.size() > 1 && item[0] == 'x') {
      int j = 0;
      try {
        std::size_t used = 0;
        j = std::stoi(item.substr(1), &used);
        if (used != item.size() - 1) throw std::invalid_argument(item);
      } catch (const std::exception&) {
        throw ParseError("bad basis term '" + item + "'");
      }
      if (j < 1) throw ParseError("basis inputs are numbered from 1: '" + item + "'");
      terms.push_back({BasisTerm::Kind::Linear, j - 1});
    } else {
      throw ParseError("bad basis term '" + item + "' (expected 1 or xJ)");
    }
  }
  return BasisSpec(std::move(terms));
}

std::string BasisSpec::to_string() const {
  std::string out;
  for (const auto& t : terms_) {
    if (!out.empty()) out += ',';
    out += t.kind == BasisTerm::Kind::Constant ? std::string("1") : "x" + std::to_string(t.dim + 1);
  }
  return out;
}

void BasisSpec::check_dim(int dim) const {
  for (const auto& t : terms_)
    if (t.kind == BasisTerm::Kind::Linear && t.dim >= dim)
      throw ShapeError("basis term x" + std::to_string(t.dim + 1) + " exceeds input dimension " +
                       std::to_string(dim));
}

Eigen::VectorXd BasisSpec::eval(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  Eigen::VectorXd out(size());
  for (int i = 0; i < size(); ++i)
    out[i] = terms_[i].kind == BasisTerm::Kind::Constant ? 1.0 : x[terms_[i].dim];
  return out;
}

Eigen::MatrixXd BasisSpec::eval(const Design& design) const {
  check_dim(static_cast<int>(design.cols()));
  Eigen::MatrixXd out(design.rows(), size());
  for (int i = 0; i < size(); ++i) {
    if (terms_[i].kind == BasisTerm::Kind::Constant)
      out.col(i).setOnes();
    else
      out.col(i) = design.col(terms_[i].dim);
  }
  return out;
}

// ---------------------------------------------------------------------------
// LevelData / PriorSpec

void LevelData::validate() const {
  if (design.rows() < 1) throw ShapeError("level has no design points");
  if (observations.size() != design.rows())
    throw ShapeError("observations length " + std::to_string(observations.size()) + " differs from design size " +
                     std::to_string(design.rows()));
  if (!design.allFinite() || !observations.allFinite()) throw ShapeError("level data contains non-finite values");
  f_basis.check_dim(dim());
  if (g_basis.has_value() != lower_observations.has_value())
    throw StructuralError(g_basis ? "level has a g-basis but no lower-level observations"
                                  : "level has lower-level observations but no g-basis");
  if (g_basis) {
    g_basis->check_dim(dim());
    if (lower_observations->size() != design.rows()) throw ShapeError("lower observations length differs from design");
    if (!lower_observations->allFinite()) throw ShapeError("lower observations contain non-finite values");
  }
}

PriorSpec PriorSpec::informative(Eigen::VectorXd b, Eigen::MatrixXd V, double alpha, double gamma) {
  PriorSpec p{PriorMode::Informative, std::move(b), std::move(V), alpha, gamma};
  p.validate(static_cast<int>(p.b.size()));
  return p;
}

void PriorSpec::validate(int parameter_count) const {
  if (mode == PriorMode::NonInformative) return;
  if (b.size() != parameter_count || V.rows() != parameter_count || V.cols() != parameter_count)
    throw ShapeError("informative prior expects " + std::to_string(parameter_count) + " trend parameters");
  if (!(alpha > 0.0) || !(gamma > 0.0)) throw InvalidHyperparameter("informative prior needs alpha > 0 and gamma > 0");
  if (!V.isApprox(V.transpose(), 1e-12)) throw InvalidHyperparameter("prior covariance V is not symmetric");
  Eigen::LLT<Eigen::MatrixXd> llt(V);
  if (llt.info() != Eigen::Success) throw InvalidHyperparameter("prior covariance V is not positive definite");
}

// ---------------------------------------------------------------------------
// Estimation

Eigen::MatrixXd build_experience_matrix(const LevelData& level) {
  const Eigen::MatrixXd F = level.f_basis.eval(level.design);
  if (level.is_base_level()) {
    if (level.lower_observations) throw StructuralError("level-1 data must not carry lower observations");
    return F;
  }
  if (!level.lower_observations) throw StructuralError("level above 1 is missing lower_observations");
  if (level.lower_observations->size() != level.design.rows())
    throw ShapeError("lower observations length differs from design");
  const Eigen::MatrixXd G = level.g_basis->eval(level.design);
  Eigen::MatrixXd H(level.design.rows(), G.cols() + F.cols());
  H.leftCols(G.cols()) = G.array().colwise() * level.lower_observations->array();
  H.rightCols(F.cols()) = F;
  return H;
}

namespace {

// Throws SingularSystem naming the columns of H that are linear combinations of earlier ones.
void check_column_rank(const Eigen::MatrixXd& whitened) {
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(whitened);
  qr.setThreshold(1e-10);
  const auto rank = qr.rank();
  if (rank == whitened.cols()) return;
  std::ostringstream os;
  os << "H^T R^-1 H is singular (rank " << rank << " of " << whitened.cols() << "); collinear columns:";
  std::set<int> dependent;
  for (Eigen::Index k = rank; k < whitened.cols(); ++k) dependent.insert(qr.colsPermutation().indices()[k]);
  for (int c : dependent) os << ' ' << c + 1;
  throw SingularSystem(os.str());
}

Eigen::MatrixXd spd_inverse(const Eigen::MatrixXd& m) {
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  if (llt.info() != Eigen::Success) throw SingularSystem("trend precision matrix is not positive definite");
  return llt.solve(Eigen::MatrixXd::Identity(m.rows(), m.cols()));
}

struct Normal {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov_scale;
};

Normal trend_normal(const Eigen::MatrixXd& H, const CholeskyFactor& R, const Eigen::VectorXd& z,
                    const PriorSpec& prior) {
  if (H.rows() != R.size() || z.size() != R.size()) throw ShapeError("H, R and z sizes disagree");
  prior.validate(static_cast<int>(H.cols()));
  const Eigen::MatrixXd Hw = R.half_solve(H);
  const Eigen::VectorXd zw = R.half_solve(z);
  Eigen::MatrixXd precision = Hw.transpose() * Hw;
  Eigen::VectorXd rhs = Hw.transpose() * zw;
  if (prior.mode == PriorMode::NonInformative) {
    check_column_rank(Hw);
  } else {
    const Eigen::MatrixXd Vinv = spd_inverse(prior.V);
    precision += Vinv;
    rhs += Vinv * prior.b;
  }
  Eigen::LLT<Eigen::MatrixXd> llt(precision);
  if (llt.info() != Eigen::Success) throw SingularSystem("trend precision matrix is not positive definite");
  return {llt.solve(rhs), llt.solve(Eigen::MatrixXd::Identity(H.cols(), H.cols()))};
}

double quad_form(const CholeskyFactor& R, const Eigen::VectorXd& v) { return R.half_solve(v).squaredNorm(); }

}  // namespace

TrendPosterior trend_posterior(const Eigen::MatrixXd& H, const CholeskyFactor& R, const Eigen::VectorXd& z,
                               double sigma2, const PriorSpec& prior) {
  if (!(sigma2 > 0.0)) throw InvalidHyperparameter("trend posterior needs sigma2 > 0");
  Normal n = trend_normal(H, R, z, prior);
  TrendPosterior out;
  out.covariance = sigma2 * n.cov_scale;
  out.mean = std::move(n.mean);
  out.cov_scale = std::move(n.cov_scale);
  return out;
}

namespace {

VariancePosterior variance_from_trend(const Eigen::MatrixXd& H, const CholeskyFactor& R, const Eigen::VectorXd& z,
                                      const PriorSpec& prior, const Eigen::VectorXd& trend_mean) {
  const Eigen::Index n = H.rows();
  const Eigen::Index m = H.cols();
  VariancePosterior out;
  const double fit_term = quad_form(R, z - H * trend_mean);
  if (prior.mode == PriorMode::NonInformative) {
    if (n <= m) {
      std::ostringstream os;
      os << "non-informative estimation needs n > p + q, got n = " << n << ", p + q = " << m;
      throw InsufficientData(os.str());
    }
    out.Q = fit_term;
    out.a = 0.5 * static_cast<double>(n - m);
  } else {
    // gamma + (b - l)^T (V + (H^T R^-1 H)^-1)^-1 (b - l) + Q_hat, rewritten around the posterior
    // mean so that it stays defined when H^T R^-1 H is singular.
    const Eigen::VectorXd d = trend_mean - prior.b;
    out.Q = prior.gamma + fit_term + d.dot(prior.V.llt().solve(d));
    out.a = 0.5 * static_cast<double>(n) + prior.alpha;
  }
  out.Q = std::max(out.Q, 0.0);
  return out;
}

}  // namespace

VariancePosterior variance_posterior(const Eigen::MatrixXd& H, const CholeskyFactor& R, const Eigen::VectorXd& z,
                                     const PriorSpec& prior) {
  if (prior.mode == PriorMode::NonInformative && H.rows() <= H.cols()) {
    std::ostringstream os;
    os << "non-informative estimation needs n > p + q, got n = " << H.rows() << ", p + q = " << H.cols();
    throw InsufficientData(os.str());
  }
  const Normal n = trend_normal(H, R, z, prior);
  return variance_from_trend(H, R, z, prior, n.mean);
}

double sigma2_eml(double Q, double a) {
  if (!(a > 0.0)) throw DegeneratePosterior("variance posterior shape a = " + std::to_string(a) + " must be positive");
  return Q / (2.0 * a);
}

double sigma2_posterior_mean(double Q, double a) {
  if (!(a > 1.0))
    throw DegeneratePosterior("posterior variance mean needs a > 1 (got a = " + std::to_string(a) +
                              "); add runs or predict with fixed variances");
  return Q / (2.0 * (a - 1.0));
}

FittedLevel fit_level(const LevelData& level, const KernelSpec& kernel, const PriorSpec& prior,
                      const NuggetPolicy& policy) {
  level.validate();
  if (kernel.dim() != level.dim()) throw ShapeError("kernel dimension differs from level input dimension");
  if (prior.mode == PriorMode::NonInformative && level.n() <= level.p() + level.q()) {
    std::ostringstream os;
    os << "non-informative estimation needs n > p + q, got n = " << level.n() << ", p + q = " << level.p() + level.q();
    throw InsufficientData(os.str());
  }
  FittedLevel out;
  CorrelationMatrix cm = correlation_matrix(level.design, kernel, policy);
  out.factor = std::move(cm.factor);
  out.kernel = kernel;
  out.kernel.nugget = out.factor.applied_nugget();
  out.H = build_experience_matrix(level);
  out.whitened_H = out.factor.half_solve(out.H);
  out.prior = prior;
  Normal trend = trend_normal(out.H, out.factor, level.observations, prior);
  const VariancePosterior vp = variance_from_trend(out.H, out.factor, level.observations, prior, trend.mean);
  out.trend_mean = std::move(trend.mean);
  out.trend_cov_scale = std::move(trend.cov_scale);
  out.Q = vp.Q;
  out.a = vp.a;
  out.sigma2_eml = sigma2_eml(vp.Q, vp.a);
  out.weights = out.factor.solve(Eigen::VectorXd(level.observations - out.H * out.trend_mean));
  return out;
}

FittedLevel restore_level(const LevelData& level, const KernelSpec& kernel, const PriorSpec& prior,
                          Eigen::VectorXd trend_mean, Eigen::MatrixXd trend_cov_scale, double Q, double a) {
  level.validate();
  NuggetPolicy exact;
  exact.escalate = false;
  FittedLevel out;
  CorrelationMatrix cm = correlation_matrix(level.design, kernel, exact);
  out.factor = std::move(cm.factor);
  out.kernel = kernel;
  out.H = build_experience_matrix(level);
  out.whitened_H = out.factor.half_solve(out.H);
  if (trend_mean.size() != out.H.cols() || trend_cov_scale.rows() != out.H.cols())
    throw ShapeError("stored trend posterior does not match the level's basis");
  out.prior = prior;
  out.trend_mean = std::move(trend_mean);
  out.trend_cov_scale = std::move(trend_cov_scale);
  out.Q = Q;
  out.a = a;
  out.sigma2_eml = sigma2_eml(Q, a);
  out.weights = out.factor.solve(Eigen::VectorXd(level.observations - out.H * out.trend_mean));
  return out;
}

double concentrated_reml(const LevelData& level, const KernelSpec& kernel, const NuggetPolicy& policy) {
  level.validate();
  const int dof = level.n() - level.p() - level.q();
  if (dof <= 0) throw InsufficientData("REML needs n > p + q");
  const CorrelationMatrix cm = correlation_matrix(level.design, kernel, policy);
  const Eigen::MatrixXd H = build_experience_matrix(level);
  const Normal trend = trend_normal(H, cm.factor, level.observations, PriorSpec{});
  const double Q = quad_form(cm.factor, level.observations - H * trend.mean);
  const double s2 = std::max(Q / dof, std::numeric_limits<double>::min());
  return cm.factor.log_det() + dof * std::log(s2);
}

}  // namespace mfk
