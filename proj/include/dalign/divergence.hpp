#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "dalign/nn.hpp"
#include "dalign/tensor.hpp"

namespace dalign {

struct MmdResult {
  double value = 0.0;
  double bandwidth = 0.0;
  // RBF kernels are bounded by 1.
  double kernel_bound = 1.0;
  const char* estimator = "biased";
};

// Median pairwise distance of the pooled rows of a and b (1.0 if that is 0).
double median_heuristic(const Tensor& a, const Tensor& b);
// Median pairwise distance within a single set.
double median_heuristic(const Tensor& samples);

// V-statistic MMD with kernel exp(-|x - y|^2 / (2 sigma^2)). Without a
// bandwidth the median heuristic on the pooled set is used.
MmdResult mmd_biased(const Tensor& a, const Tensor& b, std::optional<double> sigma = {});

struct MmdTailBound {
  double threshold = 0.0;  // 2 (sqrt(K/n) + sqrt(K/m) + eps)
  double raw_bound = 0.0;  // 2 exp(-eps^2 n m / (2 K (n + m)))
  double bound = 0.0;      // raw_bound clamped to [0, 1]
};

// Tail bound on the MMD between two samples drawn from one distribution.
MmdTailBound prop1_bound(std::size_t n, std::size_t m, double kernel_bound, double epsilon);

struct ProxyDivergence {
  double err_labeled = 0.0;
  double err_unlabeled = 0.0;
  double value = 0.0;  // 2 (1 - (err_l + err_u)), clamped to [0, 2]
};

struct ProxyOptions {
  double holdout_fraction = 0.5;
  // Independent train/holdout splits; errors are averaged before the
  // value is formed.
  std::size_t splits = 1;
  std::size_t iterations = 300;
  double learning_rate = 0.05;
  double l2 = 1e-3;
  std::uint64_t seed = 0;
};

// Fits a class-balanced logistic domain classifier on the training part of
// each domain and scores it on the held-out part.
ProxyDivergence proxy_divergence(const Tensor& labeled, const Tensor& unlabeled,
                                 const ProxyOptions& options = {});
// Same, on frozen features g(x).
ProxyDivergence proxy_h_divergence(const AdaNetwork& net, const Tensor& labeled,
                                   const Tensor& unlabeled, const ProxyOptions& options = {});

struct BoundReport {
  double empirical_labeled_error = 0.0;
  double proxy_divergence = 0.0;
  double divergence_term = 0.0;    // proxy / 2
  double minor_term = 0.0;         // sqrt(ln(2/delta) / (2m))
  double supervised_radius = 0.0;  // sqrt(ln(2/delta) / (2n))
  double delta = 0.05;
  std::size_t n = 0;
  std::size_t m = 0;
  double bound = 0.0;  // error + divergence_term + minor_term
  // Held-out error standing in for the unobservable generalization error.
  std::optional<double> test_error;
};

BoundReport bound_report(double empirical_labeled_error, double proxy_divergence,
                         std::size_t n, std::size_t m, double delta,
                         std::optional<double> test_error = {});

std::string format_key_value(const BoundReport& report);
std::string bound_csv_header();
std::string bound_csv_row(const BoundReport& report);

}  // namespace dalign
