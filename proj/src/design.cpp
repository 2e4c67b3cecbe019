#include "mfk/design.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "mfk/errors.hpp"

namespace mfk {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

void check_bounds(const DesignBounds& bounds) {
  if (bounds.empty()) throw ShapeError("design bounds are empty");
  for (const auto& b : bounds)
    if (!(b.upper > b.lower) || !std::isfinite(b.lower) || !std::isfinite(b.upper))
      throw ShapeError("design bounds must be nonempty finite intervals");
}

Design to_unit(const Design& design, const DesignBounds& bounds) {
  Design u = design;
  for (Eigen::Index j = 0; j < u.cols(); ++j)
    u.col(j) = (u.col(j).array() - bounds[j].lower) / (bounds[j].upper - bounds[j].lower);
  return u;
}

Design from_unit(const Design& unit, const DesignBounds& bounds) {
  Design x = unit;
  for (Eigen::Index j = 0; j < x.cols(); ++j)
    x.col(j) = bounds[j].lower + unit.col(j).array() * (bounds[j].upper - bounds[j].lower);
  return x;
}

double unit_min_distance(const Design& u) {
  double best = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < u.rows(); ++i)
    for (Eigen::Index k = 0; k < i; ++k) best = std::min(best, (u.row(i) - u.row(k)).squaredNorm());
  return std::sqrt(best);
}

Design unit_lhs(int n, int d, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Design u(n, d);
  std::vector<int> perm(n);
  for (int j = 0; j < d; ++j) {
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    for (int i = 0; i < n; ++i) u(i, j) = (perm[i] + unif(rng)) / n;
  }
  return u;
}

Design unit_maximin_lhs(int n, int d, std::mt19937_64& rng) {
  constexpr int kCandidates = 20;
  Design best = unit_lhs(n, d, rng);
  double best_dist = unit_min_distance(best);
  for (int c = 1; c < kCandidates; ++c) {
    Design cand = unit_lhs(n, d, rng);
    const double dist = unit_min_distance(cand);
    if (dist > best_dist) {
      best = std::move(cand);
      best_dist = dist;
    }
  }
  if (n < 3) return best;
  // Swapping two rows' coordinates within one column keeps every stratum occupied once.
  std::uniform_int_distribution<int> row(0, n - 1);
  std::uniform_int_distribution<int> col(0, d - 1);
  const int iterations = std::min(1000, 20 * n);
  for (int it = 0; it < iterations; ++it) {
    const int j = col(rng);
    const int a = row(rng);
    const int b = row(rng);
    if (a == b) continue;
    std::swap(best(a, j), best(b, j));
    const double dist = unit_min_distance(best);
    if (dist > best_dist)
      best_dist = dist;
    else
      std::swap(best(a, j), best(b, j));
  }
  return best;
}

}  // namespace

Design base_design(int n, const DesignBounds& bounds, DesignMethod method, std::uint64_t seed) {
  if (n < 1) throw ShapeError("design size must be at least 1");
  check_bounds(bounds);
  const int d = static_cast<int>(bounds.size());
  std::mt19937_64 rng(splitmix64(seed));
  Design unit;
  switch (method) {
    case DesignMethod::Random: {
      std::uniform_real_distribution<double> unif(0.0, 1.0);
      unit.resize(n, d);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) unit(i, j) = unif(rng);
      break;
    }
    case DesignMethod::Lhs:
      unit = unit_lhs(n, d, rng);
      break;
    case DesignMethod::MaximinLhs:
      unit = unit_maximin_lhs(n, d, rng);
      break;
  }
  return from_unit(unit, bounds);
}

double min_distance(const Design& design, const DesignBounds& bounds) {
  check_bounds(bounds);
  if (design.cols() != static_cast<Eigen::Index>(bounds.size())) throw ShapeError("design/bounds dimension mismatch");
  return unit_min_distance(to_unit(design, bounds));
}

Design nest_into(const Design& fine, const Design& candidates, const DesignBounds& bounds) {
  check_bounds(bounds);
  const auto d = static_cast<Eigen::Index>(bounds.size());
  if (fine.cols() != d || candidates.cols() != d) throw ShapeError("design/bounds dimension mismatch");
  if (candidates.rows() < fine.rows())
    throw ShapeError("coarser design (" + std::to_string(candidates.rows()) + " points) is smaller than finer design (" +
                     std::to_string(fine.rows()) + " points)");
  const Design uf = to_unit(fine, bounds);
  const Design uc = to_unit(candidates, bounds);
  std::vector<char> removed(candidates.rows(), 0);
  for (Eigen::Index i = 0; i < uf.rows(); ++i) {
    Eigen::Index nearest = -1;
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index k = 0; k < uc.rows(); ++k) {
      if (removed[k]) continue;
      const double dist = (uf.row(i) - uc.row(k)).squaredNorm();
      if (dist < best) {
        best = dist;
        nearest = k;
      }
    }
    removed[nearest] = 1;
  }
  Design out(candidates.rows(), d);
  Eigen::Index row = 0;
  for (Eigen::Index k = 0; k < candidates.rows(); ++k)
    if (!removed[k]) out.row(row++) = candidates.row(k);
  for (Eigen::Index i = 0; i < fine.rows(); ++i) out.row(row++) = fine.row(i);
  return out;
}

std::vector<Design> nest(const DesignRequest& request) {
  const auto& sizes = request.sizes;
  if (sizes.empty()) throw ShapeError("design request has no levels");
  for (std::size_t k = 1; k < sizes.size(); ++k)
    if (sizes[k] < sizes[k - 1])
      throw ShapeError("level sizes must not decrease from finest to coarsest (got " + std::to_string(sizes[k - 1]) +
                       " then " + std::to_string(sizes[k]) + ")");
  const std::size_t s = sizes.size();
  std::vector<Design> levels(s);  // coarsest first
  levels[s - 1] = base_design(sizes[0], request.bounds, request.method, request.seed);
  for (std::size_t k = 1; k < s; ++k) {
    const std::size_t level = s - 1 - k;
    const Design candidates =
        base_design(sizes[k], request.bounds, request.method, splitmix64(request.seed ^ (0x51ed270b27a3ULL * k)));
    levels[level] = nest_into(levels[level + 1], candidates, request.bounds);
  }
  return levels;
}

}  // namespace mfk
