#ifndef MFK_DESIGN_HPP
#define MFK_DESIGN_HPP

#include <cstdint>
#include <vector>

#include "mfk/kernels.hpp"

namespace mfk {

struct Interval {
  double lower = 0.0;
  double upper = 1.0;
};
using DesignBounds = std::vector<Interval>;

enum class DesignMethod { Random, Lhs, MaximinLhs };

/// n points inside `bounds`. Lhs puts exactly one coordinate in each of the n strata of
/// every axis; MaximinLhs picks the best of several Lhs draws by minimum pairwise distance
/// and improves it with stratum-preserving coordinate swaps.
Design base_design(int n, const DesignBounds& bounds, DesignMethod method, std::uint64_t seed);

/// Smallest pairwise Euclidean distance after mapping `bounds` to the unit cube.
double min_distance(const Design& design, const DesignBounds& bounds);

struct DesignRequest {
  std::vector<int> sizes;  // n_s, ..., n_1: finest level first
  DesignBounds bounds;
  DesignMethod method = DesignMethod::MaximinLhs;
  std::uint64_t seed = 0;
};

/// One step of the nesting algorithm: for each row of `fine` in order, removes the nearest
/// remaining row of `candidates` (unit-cube metric, lowest index on ties), then returns
/// the surviving candidates followed by the rows of `fine`.
Design nest_into(const Design& fine, const Design& candidates, const DesignBounds& bounds);

/// Nested designs D_1 ⊇ ... ⊇ D_s, returned coarsest first (index 0 is D_1).
/// D_s equals base_design(n_s, bounds, method, seed) exactly.
std::vector<Design> nest(const DesignRequest& request);

}  // namespace mfk

#endif  // MFK_DESIGN_HPP
