#include "dalign/assignment.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <stdexcept>
#include <string>

namespace dalign {

void PointCloud::validate() const {
  if (points.empty()) throw std::invalid_argument("point cloud is empty");
  for (std::size_t i = 0; i < points.size(); ++i) {
    for (double c : points[i]) {
      if (!std::isfinite(c)) {
        throw std::invalid_argument("point cloud has non-finite coordinate at point " +
                                    std::to_string(i));
      }
    }
  }
}

double squared_distance(const Point3& a, const Point3& b) {
  const double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
  return dx * dx + dy * dy + dz * dz;
}

bool is_bijection(std::span<const std::size_t> permutation) {
  std::vector<char> seen(permutation.size(), 0);
  for (std::size_t j : permutation) {
    if (j >= permutation.size() || seen[j]) return false;
    seen[j] = 1;
  }
  return true;
}

double assignment_cost(const PointCloud& source, const PointCloud& target,
                       std::span<const std::size_t> permutation) {
  double total = 0.0;
  for (std::size_t i = 0; i < permutation.size(); ++i) {
    total += squared_distance(source.points[i], target.points[permutation[i]]);
  }
  return total;
}

Assignment auction_assign(const PointCloud& source, const PointCloud& target,
                          const AuctionOptions& options) {
  source.validate();
  target.validate();
  if (source.size() != target.size()) {
    throw std::invalid_argument("auction_assign: cloud sizes differ (" +
                                std::to_string(source.size()) + " vs " +
                                std::to_string(target.size()) + ")");
  }
  if (options.epsilon && !(*options.epsilon > 0.0)) {
    throw std::invalid_argument("auction_assign: epsilon must be positive");
  }
  if (!(options.shrink > 0.0 && options.shrink < 1.0)) {
    throw std::invalid_argument("auction_assign: shrink factor must be in (0, 1)");
  }
  const std::size_t n = source.size();
  std::vector<double> cost(n * n);
  double max_cost = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      cost[i * n + j] = squared_distance(source.points[i], target.points[j]);
      max_cost = std::max(max_cost, cost[i * n + j]);
    }
  }

  Assignment result;
  result.permutation.resize(n);
  if (max_cost == 0.0) {
    for (std::size_t i = 0; i < n; ++i) result.permutation[i] = i;
    result.epsilon = options.epsilon.value_or(0.0);
    return result;
  }

  const double eps_final = options.epsilon.value_or(1e-9 * max_cost);
  double eps = options.scaling
                   ? std::max(max_cost / (2.0 * static_cast<double>(n)), eps_final)
                   : eps_final;

  constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();
  std::vector<double> price(n, 0.0);
  std::vector<std::size_t> owner(n), assigned(n);
  std::deque<std::size_t> unassigned;

  while (true) {
    std::fill(owner.begin(), owner.end(), kNone);
    std::fill(assigned.begin(), assigned.end(), kNone);
    unassigned.clear();
    for (std::size_t i = 0; i < n; ++i) unassigned.push_back(i);

    while (!unassigned.empty()) {
      const std::size_t person = unassigned.front();
      unassigned.pop_front();
      // Benefit is the negated cost; find the best and second-best net values.
      double best = -std::numeric_limits<double>::infinity();
      double second = -std::numeric_limits<double>::infinity();
      std::size_t best_item = 0;
      for (std::size_t j = 0; j < n; ++j) {
        const double value = -cost[person * n + j] - price[j];
        if (value > best) {
          second = best;
          best = value;
          best_item = j;
        } else if (value > second) {
          second = value;
        }
      }
      const double increment = n == 1 ? eps : best - second + eps;
      price[best_item] += increment;
      if (owner[best_item] != kNone) {
        assigned[owner[best_item]] = kNone;
        unassigned.push_back(owner[best_item]);
      }
      owner[best_item] = person;
      assigned[person] = best_item;
    }

    if (eps <= eps_final) break;
    eps = std::max(eps * options.shrink, eps_final);
  }

  result.permutation = assigned;
  result.cost = assignment_cost(source, target, result.permutation);
  result.epsilon = eps_final;
  return result;
}

PointCloud apply_permutation(const PointCloud& cloud, const Assignment& assignment) {
  if (cloud.size() != assignment.size()) {
    throw std::invalid_argument("apply_permutation: cloud has " + std::to_string(cloud.size()) +
                                " points, assignment " + std::to_string(assignment.size()));
  }
  if (!is_bijection(assignment.permutation)) {
    throw std::invalid_argument("apply_permutation: assignment is not a bijection");
  }
  PointCloud out;
  out.points.resize(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    out.points[assignment.permutation[i]] = cloud.points[i];
  }
  return out;
}

Assignment inverse(const Assignment& assignment) {
  if (!is_bijection(assignment.permutation)) {
    throw std::invalid_argument("inverse: assignment is not a bijection");
  }
  Assignment out = assignment;
  for (std::size_t i = 0; i < assignment.size(); ++i) {
    out.permutation[assignment.permutation[i]] = i;
  }
  return out;
}

}  // namespace dalign
