#include "mfk/metrics.hpp"

#include <cmath>

#include "mfk/errors.hpp"

namespace mfk {

namespace {

void check_means(const EvalSet& e) {
  if (e.truth.size() == 0) throw ShapeError("evaluation set is empty");
  if (e.pred_mean.size() != e.truth.size()) throw ShapeError("predictions and truth differ in length");
  if (!e.truth.allFinite() || !e.pred_mean.allFinite()) throw ShapeError("evaluation set contains non-finite values");
}

}  // namespace

double rmse(const EvalSet& e) {
  check_means(e);
  return std::sqrt((e.pred_mean - e.truth).squaredNorm() / static_cast<double>(e.truth.size()));
}

double maxae(const EvalSet& e) {
  check_means(e);
  return (e.pred_mean - e.truth).cwiseAbs().maxCoeff();
}

double q2(const EvalSet& e) {
  check_means(e);
  if (e.truth.size() < 2) throw ShapeError("Q2 needs at least two test points");
  const double sst = (e.truth.array() - e.truth.mean()).square().sum();
  if (!(sst > 0.0)) throw StructuralError("Q2 is undefined for a constant truth");
  return 1.0 - (e.pred_mean - e.truth).squaredNorm() / sst;
}

double rimse(const EvalSet& e) {
  if (e.pred_var.size() == 0) throw ShapeError("evaluation set is empty");
  if (e.truth.size() != 0 && e.pred_var.size() != e.truth.size()) throw ShapeError("variances and truth differ in length");
  if (!e.pred_var.allFinite() || (e.pred_var.array() < 0.0).any())
    throw ShapeError("predictive variances must be finite and nonnegative");
  return std::sqrt(e.pred_var.mean());
}

}  // namespace mfk
