#pragma once

#include <algorithm>
#include <limits>
#include <numeric>
#include <vector>

#include "dalign/assignment.hpp"
#include "dalign/rng.hpp"

namespace dalign::testing {

inline PointCloud random_cloud(std::size_t n, Rng& rng) {
  PointCloud c;
  for (std::size_t i = 0; i < n; ++i) c.points.push_back({rng.normal(), rng.normal(), rng.normal()});
  return c;
}

// Exhaustive minimum over all n! matchings.
inline double brute_force_optimum(const PointCloud& a, const PointCloud& b) {
  std::vector<std::size_t> perm(a.size());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  double best = std::numeric_limits<double>::infinity();
  do {
    best = std::min(best, assignment_cost(a, b, perm));
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

}  // namespace dalign::testing
