#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <functional>
#include <string>

#include "dalign/tape.hpp"
#include "support.hpp"

using namespace dalign;
using dalign::testing::max_relative_error;
using dalign::testing::numeric_gradient;
using dalign::testing::random_tensor;

namespace {

using Builder = std::function<NodeId(Tape&, NodeId)>;

// Analytic gradient of a scalar-valued graph wrt its single leaf, against
// central differences.
double gradient_error(const Builder& build, const Tensor& x) {
  Tape tape;
  const NodeId leaf = tape.leaf(x);
  const NodeId loss = build(tape, leaf);
  const Tensor analytic = tape.backward(loss)[leaf];
  const Tensor numeric = numeric_gradient(
      [&](const Tensor& probe) {
        Tape t;
        return t.value(build(t, t.leaf(probe))).item();
      },
      x);
  return max_relative_error(analytic, numeric);
}

}  // namespace

TEST_CASE("forward values of elementary ops") {
  Tape t;
  const NodeId a = t.leaf(Tensor::matrix(2, 2, {1, 2, 3, 4}));
  const NodeId b = t.leaf(Tensor::matrix(2, 2, {5, 6, 7, 8}));
  CHECK(t.value(t.matmul(a, b)) == Tensor::matrix(2, 2, {19, 22, 43, 50}));
  CHECK(t.value(t.add(a, b)) == Tensor::matrix(2, 2, {6, 8, 10, 12}));
  CHECK(t.value(t.sub(a, b)) == Tensor::matrix(2, 2, {-4, -4, -4, -4}));
  CHECK(t.value(t.mul(a, b)) == Tensor::matrix(2, 2, {5, 12, 21, 32}));
  CHECK(t.value(t.scale(a, -2)) == Tensor::matrix(2, 2, {-2, -4, -6, -8}));
  CHECK(t.value(t.sum(a)).item() == 10);
  CHECK(t.value(t.mean(a)).item() == 2.5);
  const NodeId bias = t.leaf(Tensor({2}, std::vector<double>{10, 20}));
  CHECK(t.value(t.add(a, bias)) == Tensor::matrix(2, 2, {11, 22, 13, 24}));
  CHECK(t.kind(bias) == OpKind::leaf);
}

TEST_CASE("shape mismatches are rejected") {
  Tape t;
  const NodeId a = t.leaf(Tensor({2, 3}));
  const NodeId b = t.leaf(Tensor({2, 2}));
  CHECK_THROWS_AS(t.matmul(a, a), ShapeError);
  CHECK_THROWS_AS(t.add(a, b), ShapeError);
  CHECK_THROWS_AS(t.backward(a), ShapeError);
  CHECK_THROWS_AS(t.soft_cross_entropy(a, Tensor({2, 2})), ShapeError);
  CHECK_THROWS_AS(t.grl(a, -1.0), std::invalid_argument);
}

TEST_CASE("softmax rows sum to one and survive large logits") {
  Tape t;
  const NodeId z = t.leaf(Tensor::matrix(2, 3, {1000, 1001, 1002, -5, 0, 5}));
  const Tensor& p = t.value(t.softmax(z));
  for (std::size_t r = 0; r < 2; ++r) {
    double s = 0;
    for (double v : p.row(r)) s += v;
    CHECK(std::abs(s - 1.0) < 1e-12);
  }
  CHECK(p.all_finite());
  const Tensor& lp = t.value(t.log_softmax(z));
  CHECK(lp.at(0, 2) == doctest::Approx(-std::log(1 + std::exp(-1.0) + std::exp(-2.0))));
}

TEST_CASE("soft cross-entropy against direct evaluation") {
  Tape t;
  const Tensor logits = Tensor::matrix(2, 2, {0.3, -0.2, 1.5, 0.5});
  const Tensor targets = Tensor::matrix(2, 2, {0.25, 0.75, 1.0, 0.0});
  const NodeId z = t.leaf(logits);
  double expected = 0.0;
  const std::vector<double> w{0.5, 2.0};
  for (std::size_t r = 0; r < 2; ++r) {
    const double lse = std::log(std::exp(logits.at(r, 0)) + std::exp(logits.at(r, 1)));
    double ce = 0;
    for (std::size_t c = 0; c < 2; ++c) ce -= targets.at(r, c) * (logits.at(r, c) - lse);
    expected += w[r] * ce;
  }
  CHECK(t.value(t.soft_cross_entropy(z, targets, w)).item() == doctest::Approx(expected / 2));
  CHECK(t.value(t.soft_cross_entropy(z, targets, w, 4.0)).item() ==
        doctest::Approx(expected / 4));
}

TEST_CASE("entropy extremes") {
  Tape t;
  // Effectively one-hot predictions: entropy vanishes.
  const NodeId sharp = t.leaf(Tensor::matrix(1, 3, {800, 0, 0}));
  CHECK(t.value(t.mean_entropy(sharp)).item() == doctest::Approx(0.0).epsilon(1e-12));
  const NodeId flat = t.leaf(Tensor({4, 5}, 0.7));
  CHECK(std::abs(t.value(t.mean_entropy(flat)).item() - std::log(5.0)) < 1e-9);
}

TEST_CASE("every op's gradient matches finite differences") {
  Rng rng(11);
  const Tensor x = random_tensor({3, 4}, rng);
  const Tensor w = random_tensor({4, 2}, rng);
  const Tensor targets = Tensor::matrix(3, 2, {0.2, 0.8, 1, 0, 0.5, 0.5});
  const Tensor bias = random_tensor({4}, rng);
  const std::vector<std::pair<std::string, Builder>> cases{
      {"matmul", [&](Tape& t, NodeId a) { return t.sum(t.matmul(a, t.leaf(w))); }},
      {"matmul-right", [&](Tape& t, NodeId a) {
         return t.sum(t.tanh(t.matmul(t.leaf(x), a)));
       }},
      {"add-broadcast", [&](Tape& t, NodeId a) { return t.sum(t.tanh(t.add(a, t.leaf(bias)))); }},
      {"sub", [&](Tape& t, NodeId a) { return t.sum(t.mul(t.sub(a, t.leaf(x)), a)); }},
      {"mul", [&](Tape& t, NodeId a) { return t.sum(t.mul(a, a)); }},
      {"scale", [&](Tape& t, NodeId a) { return t.mean(t.tanh(t.scale(a, 0.7))); }},
      {"relu", [&](Tape& t, NodeId a) { return t.sum(t.mul(t.relu(a), a)); }},
      {"softmax", [&](Tape& t, NodeId a) { return t.sum(t.mul(t.softmax(a), t.leaf(x))); }},
      {"log_softmax", [&](Tape& t, NodeId a) { return t.sum(t.mul(t.log_softmax(a), t.leaf(x))); }},
      {"mse", [&](Tape& t, NodeId a) { return t.mse(t.tanh(a), x); }},
      {"entropy", [&](Tape& t, NodeId a) { return t.mean_entropy(a); }},
  };
  for (const auto& [name, build] : cases) {
    CAPTURE(name);
    // Shift away from relu kinks.
    Tensor probe = x;
    for (auto& v : probe.data()) v += std::copysign(0.05, v);
    if (name == "matmul-right") probe = w;
    CHECK(gradient_error(build, probe) < 1e-7);
  }
  const std::vector<double> weights{0.3, 1.0, 0.6};
  const Tensor logits = random_tensor({3, 2}, rng);
  CHECK(gradient_error([&](Tape& t, NodeId a) { return t.soft_cross_entropy(a, targets, weights, 5.0); },
                       logits) < 1e-7);
}

TEST_CASE("grl reverses and scales the gradient") {
  Rng rng(5);
  for (double scale : {0.0, 0.25, 1.0, 3.0}) {
    const Tensor x = random_tensor({2, 3}, rng);
    Tape t;
    const NodeId a = t.leaf(x);
    const NodeId r = t.grl(a, scale);
    CHECK(t.value(r) == x);
    const NodeId loss = t.sum(t.tanh(r));
    const Tensor g = t.backward(loss)[a];
    Tape plain;
    const NodeId b = plain.leaf(x);
    const Tensor ref = plain.backward(plain.sum(plain.tanh(b)))[b];
    for (std::size_t i = 0; i < g.size(); ++i) CHECK(g[i] == doctest::Approx(-scale * ref[i]).epsilon(1e-15));
  }
}

TEST_CASE("nodes off the loss path get zero gradients") {
  Tape t;
  const NodeId a = t.leaf(Tensor({2}, 1.0));
  const NodeId unused = t.leaf(Tensor({3}, 2.0));
  const NodeId loss = t.sum(t.mul(a, a));
  const Gradients g = t.backward(loss);
  CHECK(g[unused] == Tensor({3}, 0.0));
  CHECK(g[a] == Tensor({2}, 2.0));
  CHECK(g[loss].item() == 1.0);
}

TEST_CASE("shared inputs accumulate gradients") {
  Tape t;
  const NodeId a = t.leaf(Tensor({1}, 3.0));
  const NodeId loss = t.sum(t.add(t.mul(a, a), t.scale(a, 2.0)));
  CHECK(t.backward(loss)[a][0] == 8.0);
}
