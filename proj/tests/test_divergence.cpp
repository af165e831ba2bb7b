#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

#include "dalign/datasets.hpp"
#include "dalign/divergence.hpp"
#include "support.hpp"

using namespace dalign;
using dalign::testing::random_tensor;

namespace {

std::map<std::string, double> parse_report(const std::string& text) {
  std::map<std::string, double> out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) {
    const auto eq = line.find('=');
    out[line.substr(0, eq)] = std::stod(line.substr(eq + 1));
  }
  return out;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

TEST_CASE("mmd of a set with itself is zero") {
  Rng rng(1);
  const Tensor a = random_tensor({40, 3}, rng);
  CHECK(mmd_biased(a, a).value < 1e-9);
  CHECK(mmd_biased(a, a, 0.5).value < 1e-9);
}

TEST_CASE("mmd is symmetric and non-negative") {
  Rng rng(2);
  for (int i = 0; i < 20; ++i) {
    const Tensor a = random_tensor({7, 2}, rng);
    const Tensor b = random_tensor({11, 2}, rng, 1.5);
    const MmdResult ab = mmd_biased(a, b);
    const MmdResult ba = mmd_biased(b, a);
    CHECK(ab.value >= 0.0);
    CHECK(std::abs(ab.value - ba.value) < 1e-12);
    CHECK(ab.bandwidth == ba.bandwidth);
  }
}

TEST_CASE("unit-separated point masses") {
  const Tensor a = Tensor::matrix(1, 1, {0});
  const Tensor b = Tensor::matrix(1, 1, {1});
  const MmdResult r = mmd_biased(a, b, 1.0);
  // Closed form sqrt(2 - 2 exp(-1/2)).
  CHECK(r.value == doctest::Approx(std::sqrt(2.0 - 2.0 * std::exp(-0.5))).epsilon(1e-14));
  CHECK(r.value == doctest::Approx(0.88710).epsilon(1e-5));
  CHECK(r.kernel_bound == 1.0);
  CHECK(std::string(r.estimator) == "biased");
}

TEST_CASE("median heuristic") {
  const Tensor a = Tensor::matrix(2, 1, {0, 1});
  const Tensor b = Tensor::matrix(1, 1, {3});
  // Pooled distances {1, 3, 2}.
  CHECK(median_heuristic(a, b) == 2.0);
  CHECK(median_heuristic(Tensor::matrix(3, 1, {0, 1, 3})) == 2.0);
  CHECK(median_heuristic(Tensor::matrix(2, 1, {5, 5})) == 1.0);
  CHECK(mmd_biased(a, b).bandwidth == 2.0);
}

TEST_CASE("mmd argument checks") {
  CHECK_THROWS_AS(mmd_biased(Tensor({0, 2}), Tensor({2, 2})), std::invalid_argument);
  CHECK_THROWS_AS(mmd_biased(Tensor({2, 2}), Tensor({2, 3})), ShapeError);
  CHECK_THROWS_AS(mmd_biased(Tensor({2, 2}), Tensor({2, 2}), 0.0), std::invalid_argument);
}

TEST_CASE("prop-1 bound values") {
  const MmdTailBound tiny = prop1_bound(6, 1000, 1.0, 0.1);
  CHECK(tiny.raw_bound == doctest::Approx(2.0 * std::exp(-0.01 * 6000.0 / (2.0 * 1006.0))));
  CHECK(tiny.raw_bound == doctest::Approx(1.941).epsilon(1e-3));
  CHECK(tiny.bound == 1.0);
  const MmdTailBound big = prop1_bound(1000, 1000, 1.0, 0.2);
  CHECK(big.raw_bound == doctest::Approx(2.0 * std::exp(-10.0)).epsilon(1e-12));
  CHECK(big.bound == doctest::Approx(9.08e-5).epsilon(1e-3));
  CHECK(big.threshold == doctest::Approx(2.0 * (2.0 * std::sqrt(1.0 / 1000.0) + 0.2)));
}

TEST_CASE("prop-1 bound strictly decreases in n and m") {
  double last_n = 3, last_m = 3;
  for (std::size_t k = 1; k <= 400; k += 7) {
    const double bn = prop1_bound(k, 50, 1.0, 0.3).raw_bound;
    const double bm = prop1_bound(50, k, 1.0, 0.3).raw_bound;
    CHECK(bn < last_n);
    CHECK(bm < last_m);
    last_n = bn;
    last_m = bm;
  }
  CHECK(prop1_bound(1000000, 1000000, 1.0, 0.2).bound < 1e-100);
  CHECK_THROWS(prop1_bound(0, 5, 1.0, 0.1));
  CHECK_THROWS(prop1_bound(5, 5, 0.0, 0.1));
  CHECK_THROWS(prop1_bound(5, 5, 1.0, 0.0));
}

TEST_CASE("proxy divergence is near zero for identical distributions") {
  std::vector<double> values;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    Rng rng(seed);
    const Tensor a = random_tensor({400, 3}, rng);
    const Tensor b = random_tensor({400, 3}, rng);
    ProxyOptions o;
    o.seed = seed;
    const ProxyDivergence p = proxy_divergence(a, b, o);
    CHECK(p.value >= 0.0);
    CHECK(p.value <= 2.0);
    values.push_back(p.value);
  }
  CHECK(median(values) <= 0.3);
}

TEST_CASE("proxy divergence is near two for separable domains") {
  Rng rng(3);
  Tensor a = random_tensor({200, 2}, rng, 0.3);
  Tensor b = random_tensor({200, 2}, rng, 0.3);
  for (std::size_t r = 0; r < 200; ++r) b.at(r, 0) += 5.0;
  const ProxyDivergence p = proxy_divergence(a, b);
  CHECK(p.value >= 1.7);
  CHECK(p.err_labeled < 0.05);
}

TEST_CASE("shuffling samples between domains centres the proxy at zero") {
  std::vector<double> values;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    Rng rng(seed);
    Tensor a = random_tensor({200, 2}, rng);
    Tensor b = random_tensor({200, 2}, rng);
    for (std::size_t r = 0; r < 200; ++r) b.at(r, 0) += 1.0;
    const Tensor pooled = concat_rows(a, b);
    std::vector<std::size_t> idx(400);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    shuffle(std::span<std::size_t>(idx), rng);
    const Tensor sa = gather_rows(pooled, std::span<const std::size_t>(idx).subspan(0, 200));
    const Tensor sb = gather_rows(pooled, std::span<const std::size_t>(idx).subspan(200));
    ProxyOptions o;
    o.seed = seed;
    values.push_back(proxy_divergence(sa, sb, o).value);
  }
  CHECK(median(values) <= 0.3);
}

TEST_CASE("proxy splits and determinism") {
  Rng rng(4);
  const Tensor a = random_tensor({30, 2}, rng);
  const Tensor b = random_tensor({60, 2}, rng);
  ProxyOptions o;
  o.seed = 9;
  const ProxyDivergence p1 = proxy_divergence(a, b, o);
  const ProxyDivergence p2 = proxy_divergence(a, b, o);
  CHECK(p1.value == p2.value);
  o.splits = 4;
  const ProxyDivergence p4 = proxy_divergence(a, b, o);
  CHECK(p4.err_labeled >= 0.0);
  CHECK(p4.err_labeled <= 1.0);
  CHECK_THROWS(proxy_divergence(Tensor::matrix(1, 2, {0, 0}), b));
  o.holdout_fraction = 1.0;
  CHECK_THROWS(proxy_divergence(a, b, o));
  o.holdout_fraction = 0.5;
  o.splits = 0;
  CHECK_THROWS(proxy_divergence(a, b, o));
}

TEST_CASE("proxy on network features") {
  NetworkSpec spec;
  spec.feature_widths = {2, 8, 4};
  const AdaNetwork net = init_network(spec);
  TwoMoonsOptions o;
  o.n_labeled = 20;
  o.n_unlabeled = 200;
  const TwoMoons d = gen_two_moons(o);
  const ProxyDivergence p = proxy_h_divergence(net, d.labeled.x, d.unlabeled.x);
  CHECK(p.value >= 0.0);
  CHECK(p.value <= 2.0);
}

TEST_CASE("bound report terms") {
  const BoundReport r = bound_report(0.0, 0.0, 6, 1000, 0.05);
  CHECK(std::abs(r.minor_term - 0.04295) < 1e-5);
  CHECK(r.minor_term == doctest::Approx(std::sqrt(std::log(40.0) / 2000.0)));
  CHECK(std::abs(r.supervised_radius - 0.5544) < 1e-4);
  CHECK(r.bound == r.minor_term);
  CHECK(r.supervised_radius > 10 * r.minor_term);
  CHECK(bound_report(0.1, 0.5, 6, 2000, 0.05).minor_term < bound_report(0.1, 0.5, 6, 1000, 0.05).minor_term);
}

TEST_CASE("printed bound equals the sum of printed terms") {
  const BoundReport r = bound_report(1.0 / 3.0, 0.123456789, 6, 1000, 0.05, 0.11);
  const auto kv = parse_report(format_key_value(r));
  CHECK(std::abs(kv.at("bound") - (kv.at("empirical_labeled_error") + kv.at("divergence_term") +
                                   kv.at("minor_term"))) < 1e-12);
  CHECK(kv.count("supervised_radius") == 1);
  CHECK(kv.at("test_error_as_generalization_error") == 0.11);
  const std::string row = bound_csv_row(r);
  const std::string header = bound_csv_header();
  CHECK(std::count(row.begin(), row.end(), ',') == std::count(header.begin(), header.end(), ','));
}

TEST_CASE("bound report rejects invalid inputs") {
  CHECK_THROWS_AS(bound_report(0.1, 0.1, 6, 1000, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(bound_report(0.1, 0.1, 6, 1000, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(bound_report(1.5, 0.1, 6, 1000, 0.05), std::invalid_argument);
  CHECK_THROWS_AS(bound_report(0.1, 2.5, 6, 1000, 0.05), std::invalid_argument);
  CHECK_THROWS_AS(bound_report(0.1, 0.1, 0, 1000, 0.05), std::invalid_argument);
}
