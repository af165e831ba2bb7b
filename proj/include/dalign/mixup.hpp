#pragma once

#include <span>
#include <vector>

#include "dalign/assignment.hpp"
#include "dalign/nn.hpp"
#include "dalign/tensor.hpp"

namespace dalign {

/// Interpolated sample (x~, y~, z~) and its mixing weight. Domain labels
/// code the labeled set as 0 and the unlabeled set as 1, so z = 1 - lambda
/// for cross-set mixes and z = 1 for within-set mixes.
struct AugmentedSample {
  std::vector<double> x;
  std::vector<double> y;
  double z = 0.0;
  double lambda = 1.0;
};

struct AugmentedCloud {
  PointCloud x;
  std::vector<double> y;
  double z = 0.0;
  double lambda = 1.0;
};

struct PseudoLabels {
  Tensor probabilities;  // [batch, classes], rows sum to 1
  std::vector<int> argmax;
};

// x = lambda * x_l + (1 - lambda) * x_u, same for y; z = 1 - lambda.
AugmentedSample cross_set_mix(std::span<const double> x_labeled, std::span<const double> y_labeled,
                              std::span<const double> x_unlabeled,
                              std::span<const double> y_unlabeled, double lambda);

// Point clouds have no canonical point order, so the unlabeled cloud is
// first reordered by phi (an assignment from x_unlabeled to x_labeled).
// phi must be non-null.
AugmentedCloud cross_set_mix(const PointCloud& x_labeled, std::span<const double> y_labeled,
                             const PointCloud& x_unlabeled, std::span<const double> y_unlabeled,
                             double lambda, const Assignment* phi);

AugmentedSample within_set_mix(std::span<const double> x_first, std::span<const double> y_first,
                               std::span<const double> x_second,
                               std::span<const double> y_second, double lambda);

// Softmax of f(g(x)) under the current parameters. No gradient is kept.
PseudoLabels make_pseudo_labels(const AdaNetwork& net, const Tensor& batch);

// Argmax per row of a rank-2 tensor; ties go to the lowest index.
std::vector<int> row_argmax(const Tensor& scores);
Tensor softmax_rows(const Tensor& logits);

struct MixedBatch {
  Tensor x;  // [batch, features]
  Tensor y;  // [batch, classes]
  std::vector<double> z;
  std::vector<double> lambda;
};

// Row-wise mixes of equally sized batches, one lambda per row.
MixedBatch cross_set_mix_batch(const Tensor& x_labeled, const Tensor& y_labeled,
                               const Tensor& x_unlabeled, const Tensor& y_unlabeled,
                               std::span<const double> lambdas);
MixedBatch within_set_mix_batch(const Tensor& x_first, const Tensor& y_first,
                                const Tensor& x_second, const Tensor& y_second,
                                std::span<const double> lambdas);

}  // namespace dalign
