#pragma once

#include <vector>

#include "dalign/tensor.hpp"

namespace dalign::kernels {

// Pairwise reductions over the rows of two sample matrices.
//
// Both variants compute one partial sum per row of `a` and add the
// partials in row order, so the parallel result is bit-identical to the
// serial one for any thread count.

namespace serial {

// sum_{i,j} exp(-|a_i - b_j|^2 / (2 sigma^2))
double rbf_sum(const Tensor& a, const Tensor& b, double sigma);
// sum_{i,j} |a_i - b_j|
double distance_sum(const Tensor& a, const Tensor& b);
// Upper-triangle pairwise distances of the stacked rows of a and b.
std::vector<double> pooled_distances(const Tensor& a, const Tensor& b);

}  // namespace serial

namespace parallel {

double rbf_sum(const Tensor& a, const Tensor& b, double sigma);
double distance_sum(const Tensor& a, const Tensor& b);
std::vector<double> pooled_distances(const Tensor& a, const Tensor& b);

}  // namespace parallel

inline double rbf_sum(const Tensor& a, const Tensor& b, double sigma) {
  return parallel::rbf_sum(a, b, sigma);
}
inline double distance_sum(const Tensor& a, const Tensor& b) {
  return parallel::distance_sum(a, b);
}
inline std::vector<double> pooled_distances(const Tensor& a, const Tensor& b) {
  return parallel::pooled_distances(a, b);
}

int thread_count();

}  // namespace dalign::kernels
