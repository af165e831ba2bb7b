#include "dalign/mixup.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace dalign {

namespace {

void check_lambda(double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    throw std::invalid_argument("mix weight lambda must lie in [0, 1], got " +
                                std::to_string(lambda));
  }
}

std::vector<double> blend(std::span<const double> a, std::span<const double> b, double lambda,
                          const char* what) {
  if (a.size() != b.size()) {
    throw ShapeError(std::string("mix: ") + what + " sizes differ (" + std::to_string(a.size()) +
                     " vs " + std::to_string(b.size()) + ")");
  }
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = lambda * a[i] + (1.0 - lambda) * b[i];
  return out;
}

MixedBatch mix_batch(const Tensor& xa, const Tensor& ya, const Tensor& xb, const Tensor& yb,
                     std::span<const double> lambdas, bool cross_set) {
  if (xa.shape() != xb.shape() || ya.shape() != yb.shape() || xa.rows() != ya.rows() ||
      lambdas.size() != xa.rows()) {
    throw ShapeError("mix batch: shapes " + shape_to_string(xa.shape()) + "/" +
                     shape_to_string(ya.shape()) + " vs " + shape_to_string(xb.shape()) + "/" +
                     shape_to_string(yb.shape()) + " with " + std::to_string(lambdas.size()) +
                     " weights");
  }
  MixedBatch out{Tensor(xa.shape()), Tensor(ya.shape()), {}, {}};
  for (std::size_t r = 0; r < xa.rows(); ++r) {
    const double lambda = lambdas[r];
    check_lambda(lambda);
    auto xr = out.x.row(r);
    auto yr = out.y.row(r);
    auto xa_r = xa.row(r), xb_r = xb.row(r), ya_r = ya.row(r), yb_r = yb.row(r);
    for (std::size_t c = 0; c < xr.size(); ++c) xr[c] = lambda * xa_r[c] + (1.0 - lambda) * xb_r[c];
    for (std::size_t c = 0; c < yr.size(); ++c) yr[c] = lambda * ya_r[c] + (1.0 - lambda) * yb_r[c];
    out.z.push_back(cross_set ? 1.0 - lambda : 1.0);
    out.lambda.push_back(lambda);
  }
  return out;
}

}  // namespace

AugmentedSample cross_set_mix(std::span<const double> x_labeled, std::span<const double> y_labeled,
                              std::span<const double> x_unlabeled,
                              std::span<const double> y_unlabeled, double lambda) {
  check_lambda(lambda);
  return AugmentedSample{blend(x_labeled, x_unlabeled, lambda, "sample"),
                         blend(y_labeled, y_unlabeled, lambda, "label"), 1.0 - lambda, lambda};
}

AugmentedCloud cross_set_mix(const PointCloud& x_labeled, std::span<const double> y_labeled,
                             const PointCloud& x_unlabeled, std::span<const double> y_unlabeled,
                             double lambda, const Assignment* phi) {
  check_lambda(lambda);
  if (phi == nullptr) {
    throw std::invalid_argument("point-cloud mix requires a point correspondence");
  }
  if (x_labeled.size() != x_unlabeled.size()) {
    throw ShapeError("point-cloud mix: clouds have " + std::to_string(x_labeled.size()) +
                     " and " + std::to_string(x_unlabeled.size()) + " points");
  }
  const PointCloud aligned = apply_permutation(x_unlabeled, *phi);
  AugmentedCloud out;
  out.x.points.resize(x_labeled.size());
  for (std::size_t i = 0; i < x_labeled.size(); ++i) {
    for (int k = 0; k < 3; ++k) {
      out.x.points[i][k] =
          lambda * x_labeled.points[i][k] + (1.0 - lambda) * aligned.points[i][k];
    }
  }
  out.y = blend(y_labeled, y_unlabeled, lambda, "label");
  out.z = 1.0 - lambda;
  out.lambda = lambda;
  return out;
}

AugmentedSample within_set_mix(std::span<const double> x_first, std::span<const double> y_first,
                               std::span<const double> x_second,
                               std::span<const double> y_second, double lambda) {
  check_lambda(lambda);
  return AugmentedSample{blend(x_first, x_second, lambda, "sample"),
                         blend(y_first, y_second, lambda, "label"), 1.0, lambda};
}

Tensor softmax_rows(const Tensor& logits) {
  Tape tape;
  return tape.value(tape.softmax(tape.leaf(logits)));
}

std::vector<int> row_argmax(const Tensor& scores) {
  std::vector<int> out(scores.rows());
  for (std::size_t r = 0; r < scores.rows(); ++r) {
    auto row = scores.row(r);
    std::size_t best = 0;
    for (std::size_t c = 1; c < row.size(); ++c) {
      if (row[c] > row[best]) best = c;
    }
    out[r] = static_cast<int>(best);
  }
  return out;
}

PseudoLabels make_pseudo_labels(const AdaNetwork& net, const Tensor& batch) {
  PseudoLabels out;
  out.probabilities = softmax_rows(class_logits(net, batch));
  out.argmax = row_argmax(out.probabilities);
  return out;
}

MixedBatch cross_set_mix_batch(const Tensor& x_labeled, const Tensor& y_labeled,
                               const Tensor& x_unlabeled, const Tensor& y_unlabeled,
                               std::span<const double> lambdas) {
  return mix_batch(x_labeled, y_labeled, x_unlabeled, y_unlabeled, lambdas, true);
}

MixedBatch within_set_mix_batch(const Tensor& x_first, const Tensor& y_first,
                                const Tensor& x_second, const Tensor& y_second,
                                std::span<const double> lambdas) {
  return mix_batch(x_first, y_first, x_second, y_second, lambdas, false);
}

}  // namespace dalign
