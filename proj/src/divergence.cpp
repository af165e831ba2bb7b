#include "dalign/divergence.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "dalign/kernels.hpp"
#include "dalign/rng.hpp"

namespace dalign {

namespace {

void require_samples(const Tensor& a, const Tensor& b, const char* what) {
  if (a.rank() != 2 || b.rank() != 2 || a.rows() == 0 || b.rows() == 0) {
    throw std::invalid_argument(std::string(what) + ": both sample sets must be non-empty");
  }
  if (a.cols() != b.cols()) {
    throw ShapeError(std::string(what) + ": dimension mismatch " + shape_to_string(a.shape()) +
                     " vs " + shape_to_string(b.shape()));
  }
}

}  // namespace

double median_heuristic(const Tensor& a, const Tensor& b) {
  require_samples(a, b, "median_heuristic");
  std::vector<double> d = kernels::pooled_distances(a, b);
  if (d.empty()) return 1.0;
  auto mid = d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2);
  std::nth_element(d.begin(), mid, d.end());
  return *mid > 0.0 ? *mid : 1.0;
}

double median_heuristic(const Tensor& samples) {
  if (samples.rank() != 2 || samples.rows() == 0) {
    throw std::invalid_argument("median_heuristic: sample set must be non-empty");
  }
  std::vector<double> d = kernels::pooled_distances(samples, Tensor({0, samples.cols()}));
  if (d.empty()) return 1.0;
  auto mid = d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2);
  std::nth_element(d.begin(), mid, d.end());
  return *mid > 0.0 ? *mid : 1.0;
}

MmdResult mmd_biased(const Tensor& a, const Tensor& b, std::optional<double> sigma) {
  require_samples(a, b, "mmd");
  const double bw = sigma ? *sigma : median_heuristic(a, b);
  if (!(bw > 0.0) || !std::isfinite(bw)) throw std::invalid_argument("mmd: bandwidth must be positive");
  const double n = static_cast<double>(a.rows());
  const double m = static_cast<double>(b.rows());
  const double kaa = kernels::rbf_sum(a, a, bw) / (n * n);
  const double kbb = kernels::rbf_sum(b, b, bw) / (m * m);
  const double kab = kernels::rbf_sum(a, b, bw) / (n * m);
  MmdResult out;
  out.value = std::sqrt(std::max(0.0, kaa + kbb - 2.0 * kab));
  out.bandwidth = bw;
  return out;
}

MmdTailBound prop1_bound(std::size_t n, std::size_t m, double kernel_bound, double epsilon) {
  if (n < 1 || m < 1) throw std::invalid_argument("prop1_bound: n and m must be >= 1");
  if (!(kernel_bound > 0.0)) throw std::invalid_argument("prop1_bound: K must be positive");
  if (!(epsilon > 0.0)) throw std::invalid_argument("prop1_bound: epsilon must be positive");
  const double nd = static_cast<double>(n), md = static_cast<double>(m);
  MmdTailBound out;
  out.threshold = 2.0 * (std::sqrt(kernel_bound / nd) + std::sqrt(kernel_bound / md) + epsilon);
  out.raw_bound =
      2.0 * std::exp(-epsilon * epsilon * nd * md / (2.0 * kernel_bound * (nd + md)));
  out.bound = std::clamp(out.raw_bound, 0.0, 1.0);
  return out;
}

namespace {

struct Split {
  std::vector<std::size_t> train, holdout;
};

Split split_indices(std::size_t count, double holdout_fraction, Rng& rng, const char* domain) {
  if (count < 2) {
    throw std::invalid_argument(std::string("proxy divergence: ") + domain +
                                " domain needs at least 2 samples to split");
  }
  std::vector<std::size_t> idx(count);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  shuffle(std::span<std::size_t>(idx), rng);
  auto hold = static_cast<std::size_t>(std::lround(holdout_fraction * static_cast<double>(count)));
  hold = std::clamp<std::size_t>(hold, 1, count - 1);
  Split s;
  s.holdout.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(hold));
  s.train.assign(idx.begin() + static_cast<std::ptrdiff_t>(hold), idx.end());
  return s;
}

struct Logistic {
  std::vector<double> mean, inv_std, w;
  double b = 0.0;

  double score(std::span<const double> x) const {
    double z = b;
    for (std::size_t k = 0; k < w.size(); ++k) z += w[k] * (x[k] - mean[k]) * inv_std[k];
    return z;
  }
};

// Label 1 = unlabeled domain. Each domain carries half of the loss.
Logistic fit_logistic(const Tensor& xl, std::span<const std::size_t> il, const Tensor& xu,
                      std::span<const std::size_t> iu, const ProxyOptions& opt) {
  const std::size_t d = xl.cols();
  Logistic model;
  model.mean.assign(d, 0.0);
  model.inv_std.assign(d, 1.0);
  model.w.assign(d, 0.0);
  // Balanced standardisation: average of the two domain means/variances.
  for (std::size_t k = 0; k < d; ++k) {
    double ml = 0.0, mu = 0.0;
    for (std::size_t i : il) ml += xl.at(i, k);
    for (std::size_t i : iu) mu += xu.at(i, k);
    ml /= static_cast<double>(il.size());
    mu /= static_cast<double>(iu.size());
    const double center = 0.5 * (ml + mu);
    double vl = 0.0, vu = 0.0;
    for (std::size_t i : il) vl += (xl.at(i, k) - center) * (xl.at(i, k) - center);
    for (std::size_t i : iu) vu += (xu.at(i, k) - center) * (xu.at(i, k) - center);
    const double var = 0.5 * (vl / static_cast<double>(il.size()) + vu / static_cast<double>(iu.size()));
    model.mean[k] = center;
    model.inv_std[k] = var > 1e-24 ? 1.0 / std::sqrt(var) : 1.0;
  }
  std::vector<double> m(d + 1, 0.0), v(d + 1, 0.0), g(d + 1);
  const double beta1 = 0.9, beta2 = 0.999;
  for (std::size_t it = 1; it <= opt.iterations; ++it) {
    std::fill(g.begin(), g.end(), 0.0);
    auto accumulate = [&](const Tensor& x, std::span<const std::size_t> rows, double target) {
      const double weight = 0.5 / static_cast<double>(rows.size());
      for (std::size_t i : rows) {
        auto xi = x.row(i);
        const double p = 1.0 / (1.0 + std::exp(-model.score(xi)));
        const double r = weight * (p - target);
        for (std::size_t k = 0; k < d; ++k) g[k] += r * (xi[k] - model.mean[k]) * model.inv_std[k];
        g[d] += r;
      }
    };
    accumulate(xl, il, 0.0);
    accumulate(xu, iu, 1.0);
    for (std::size_t k = 0; k < d; ++k) g[k] += opt.l2 * model.w[k];
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(it));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(it));
    for (std::size_t k = 0; k <= d; ++k) {
      m[k] = beta1 * m[k] + (1.0 - beta1) * g[k];
      v[k] = beta2 * v[k] + (1.0 - beta2) * g[k] * g[k];
      const double step = opt.learning_rate * (m[k] / c1) / (std::sqrt(v[k] / c2) + 1e-8);
      if (k < d) model.w[k] -= step;
      else model.b -= step;
    }
  }
  return model;
}

}  // namespace

ProxyDivergence proxy_divergence(const Tensor& labeled, const Tensor& unlabeled,
                                 const ProxyOptions& options) {
  require_samples(labeled, unlabeled, "proxy divergence");
  if (!(options.holdout_fraction > 0.0 && options.holdout_fraction < 1.0)) {
    throw std::invalid_argument("proxy divergence: holdout fraction must be in (0, 1)");
  }
  if (options.splits == 0) throw std::invalid_argument("proxy divergence: need at least one split");
  Rng rng = Rng(options.seed).stream("proxy");
  double err_l = 0.0, err_u = 0.0;
  for (std::size_t s = 0; s < options.splits; ++s) {
    const Split sl = split_indices(labeled.rows(), options.holdout_fraction, rng, "labeled");
    const Split su = split_indices(unlabeled.rows(), options.holdout_fraction, rng, "unlabeled");
    const Logistic model = fit_logistic(labeled, sl.train, unlabeled, su.train, options);
    std::size_t wrong_l = 0, wrong_u = 0;
    for (std::size_t i : sl.holdout) wrong_l += model.score(labeled.row(i)) > 0.0 ? 1 : 0;
    for (std::size_t i : su.holdout) wrong_u += model.score(unlabeled.row(i)) > 0.0 ? 0 : 1;
    err_l += static_cast<double>(wrong_l) / static_cast<double>(sl.holdout.size());
    err_u += static_cast<double>(wrong_u) / static_cast<double>(su.holdout.size());
  }
  ProxyDivergence out;
  out.err_labeled = err_l / static_cast<double>(options.splits);
  out.err_unlabeled = err_u / static_cast<double>(options.splits);
  out.value = std::clamp(2.0 * (1.0 - (out.err_labeled + out.err_unlabeled)), 0.0, 2.0);
  return out;
}

ProxyDivergence proxy_h_divergence(const AdaNetwork& net, const Tensor& labeled,
                                   const Tensor& unlabeled, const ProxyOptions& options) {
  require_samples(labeled, unlabeled, "proxy divergence");
  return proxy_divergence(extract_features(net, labeled), extract_features(net, unlabeled),
                          options);
}

BoundReport bound_report(double empirical_labeled_error, double proxy, std::size_t n,
                         std::size_t m, double delta, std::optional<double> test_error) {
  if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("bound report: delta must be in (0, 1)");
  if (!(empirical_labeled_error >= 0.0 && empirical_labeled_error <= 1.0)) {
    throw std::invalid_argument("bound report: empirical error must be in [0, 1]");
  }
  if (!(proxy >= 0.0 && proxy <= 2.0)) {
    throw std::invalid_argument("bound report: proxy divergence must be in [0, 2]");
  }
  if (n < 1 || m < 1) throw std::invalid_argument("bound report: n and m must be >= 1");
  BoundReport r;
  r.empirical_labeled_error = empirical_labeled_error;
  r.proxy_divergence = proxy;
  r.divergence_term = 0.5 * proxy;
  r.delta = delta;
  r.n = n;
  r.m = m;
  const double log_term = std::log(2.0 / delta);
  r.minor_term = std::sqrt(log_term / (2.0 * static_cast<double>(m)));
  r.supervised_radius = std::sqrt(log_term / (2.0 * static_cast<double>(n)));
  r.bound = r.empirical_labeled_error + r.divergence_term + r.minor_term;
  r.test_error = test_error;
  return r;
}

namespace {

std::string exact(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::string format_key_value(const BoundReport& r) {
  std::ostringstream out;
  out << "n=" << r.n << '\n'
      << "m=" << r.m << '\n'
      << "delta=" << exact(r.delta) << '\n'
      << "empirical_labeled_error=" << exact(r.empirical_labeled_error) << '\n'
      << "proxy_divergence=" << exact(r.proxy_divergence) << '\n'
      << "divergence_term=" << exact(r.divergence_term) << '\n'
      << "minor_term=" << exact(r.minor_term) << '\n'
      << "bound=" << exact(r.bound) << '\n'
      << "supervised_radius=" << exact(r.supervised_radius) << '\n'
      << "supervised_bound=" << exact(r.empirical_labeled_error + r.supervised_radius) << '\n';
  if (r.test_error) out << "test_error_as_generalization_error=" << exact(*r.test_error) << '\n';
  return out.str();
}

std::string bound_csv_header() {
  return "n,m,delta,empirical_labeled_error,proxy_divergence,divergence_term,minor_term,bound,"
         "supervised_radius,test_error";
}

std::string bound_csv_row(const BoundReport& r) {
  std::ostringstream out;
  out << r.n << ',' << r.m << ',' << exact(r.delta) << ',' << exact(r.empirical_labeled_error)
      << ',' << exact(r.proxy_divergence) << ',' << exact(r.divergence_term) << ','
      << exact(r.minor_term) << ',' << exact(r.bound) << ',' << exact(r.supervised_radius) << ','
      << (r.test_error ? exact(*r.test_error) : std::string());
  return out.str();
}

}  // namespace dalign
