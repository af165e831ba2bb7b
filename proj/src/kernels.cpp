#include "dalign/kernels.hpp"

#include <cmath>
#include <stdexcept>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace dalign::kernels {

namespace {

void check_pair(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.cols()) {
    throw ShapeError("pairwise kernel: shape mismatch " + shape_to_string(a.shape()) +
                     " vs " + shape_to_string(b.shape()));
  }
}

inline double squared_row_distance(const double* x, const double* y, std::size_t d) {
  double acc = 0.0;
  for (std::size_t k = 0; k < d; ++k) {
    const double diff = x[k] - y[k];
    acc += diff * diff;
  }
  return acc;
}

inline double rbf_row(const Tensor& a, const Tensor& b, std::size_t i, double inv_two_var) {
  const std::size_t d = a.cols();
  const double* x = a.data().data() + i * d;
  const double* base = b.data().data();
  double acc = 0.0;
  for (std::size_t j = 0; j < b.rows(); ++j) {
    acc += std::exp(-squared_row_distance(x, base + j * d, d) * inv_two_var);
  }
  return acc;
}

inline double distance_row(const Tensor& a, const Tensor& b, std::size_t i) {
  const std::size_t d = a.cols();
  const double* x = a.data().data() + i * d;
  const double* base = b.data().data();
  double acc = 0.0;
  for (std::size_t j = 0; j < b.rows(); ++j) {
    acc += std::sqrt(squared_row_distance(x, base + j * d, d));
  }
  return acc;
}

double ordered_total(const std::vector<double>& partials) {
  double total = 0.0;
  for (double v : partials) total += v;
  return total;
}

// Row r of the stacked matrix [a; b].
inline const double* stacked_row(const Tensor& a, const Tensor& b, std::size_t r) {
  const std::size_t d = a.cols();
  return r < a.rows() ? a.data().data() + r * d : b.data().data() + (r - a.rows()) * d;
}

// Offset of row r's block in the packed upper triangle of an n x n matrix.
inline std::size_t triangle_offset(std::size_t r, std::size_t n) {
  return r * n - r * (r + 1) / 2;
}

void fill_distance_row(const Tensor& a, const Tensor& b, std::size_t r, std::size_t n,
                       std::vector<double>& out) {
  const std::size_t d = a.cols();
  const double* x = stacked_row(a, b, r);
  std::size_t pos = triangle_offset(r, n);
  for (std::size_t s = r + 1; s < n; ++s) {
    out[pos++] = std::sqrt(squared_row_distance(x, stacked_row(a, b, s), d));
  }
}

}  // namespace

namespace serial {

double rbf_sum(const Tensor& a, const Tensor& b, double sigma) {
  check_pair(a, b);
  if (!(sigma > 0.0)) throw std::invalid_argument("rbf bandwidth must be positive");
  const double inv = 1.0 / (2.0 * sigma * sigma);
  std::vector<double> partial(a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) partial[i] = rbf_row(a, b, i, inv);
  return ordered_total(partial);
}

double distance_sum(const Tensor& a, const Tensor& b) {
  check_pair(a, b);
  std::vector<double> partial(a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) partial[i] = distance_row(a, b, i);
  return ordered_total(partial);
}

std::vector<double> pooled_distances(const Tensor& a, const Tensor& b) {
  check_pair(a, b);
  const std::size_t n = a.rows() + b.rows();
  if (n < 2) return {};
  std::vector<double> out(n * (n - 1) / 2);
  for (std::size_t r = 0; r < n; ++r) fill_distance_row(a, b, r, n, out);
  return out;
}

}  // namespace serial

namespace parallel {

double rbf_sum(const Tensor& a, const Tensor& b, double sigma) {
  check_pair(a, b);
  if (!(sigma > 0.0)) throw std::invalid_argument("rbf bandwidth must be positive");
  const double inv = 1.0 / (2.0 * sigma * sigma);
  const auto rows = static_cast<std::ptrdiff_t>(a.rows());
  std::vector<double> partial(a.rows());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < rows; ++i) {
    partial[static_cast<std::size_t>(i)] = rbf_row(a, b, static_cast<std::size_t>(i), inv);
  }
  return ordered_total(partial);
}

double distance_sum(const Tensor& a, const Tensor& b) {
  check_pair(a, b);
  const auto rows = static_cast<std::ptrdiff_t>(a.rows());
  std::vector<double> partial(a.rows());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < rows; ++i) {
    partial[static_cast<std::size_t>(i)] = distance_row(a, b, static_cast<std::size_t>(i));
  }
  return ordered_total(partial);
}

std::vector<double> pooled_distances(const Tensor& a, const Tensor& b) {
  check_pair(a, b);
  const std::size_t n = a.rows() + b.rows();
  if (n < 2) return {};
  std::vector<double> out(n * (n - 1) / 2);
  const auto rows = static_cast<std::ptrdiff_t>(n);
  // Row lengths shrink with r; dynamic scheduling balances the triangle.
#pragma omp parallel for schedule(dynamic, 16)
  for (std::ptrdiff_t r = 0; r < rows; ++r) {
    fill_distance_row(a, b, static_cast<std::size_t>(r), n, out);
  }
  return out;
}

}  // namespace parallel

int thread_count() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace dalign::kernels
