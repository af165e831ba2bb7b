#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace dalign {

using Point3 = std::array<double, 3>;

struct PointCloud {
  std::vector<Point3> points;

  std::size_t size() const { return points.size(); }
  // Throws unless non-empty with finite coordinates.
  void validate() const;

  friend bool operator==(const PointCloud&, const PointCloud&) = default;
};

double squared_distance(const Point3& a, const Point3& b);

/// permutation[i] is the index in the target cloud matched to source point i.
struct Assignment {
  std::vector<std::size_t> permutation;
  double cost = 0.0;
  // Final bidding increment; cost is within size() * epsilon of optimal.
  double epsilon = 0.0;

  std::size_t size() const { return permutation.size(); }
};

struct AuctionOptions {
  // Final epsilon. Unset means 1e-9 times the largest pairwise cost.
  std::optional<double> epsilon;
  bool scaling = true;
  double shrink = 0.25;
};

/// Forward auction with epsilon scaling on squared Euclidean costs.
/// Minimises sum_i |a_i - b_perm[i]|^2 to within N * epsilon.
Assignment auction_assign(const PointCloud& source, const PointCloud& target,
                          const AuctionOptions& options = {});

bool is_bijection(std::span<const std::size_t> permutation);
double assignment_cost(const PointCloud& source, const PointCloud& target,
                       std::span<const std::size_t> permutation);

// out[perm[i]] = cloud[i]: reorders the source cloud into target order, so
// out[k] pairs with target[k].
PointCloud apply_permutation(const PointCloud& cloud, const Assignment& assignment);
Assignment inverse(const Assignment& assignment);

}  // namespace dalign
