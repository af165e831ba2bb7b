#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "dalign/nn.hpp"
#include "support.hpp"

using namespace dalign;
using dalign::testing::max_relative_error;
using dalign::testing::numeric_gradient;
using dalign::testing::random_tensor;

namespace fs = std::filesystem;

namespace {

NetworkSpec small_spec(std::uint64_t seed = 3) {
  NetworkSpec s;
  s.feature_widths = {3, 5, 4};
  s.class_count = 3;
  s.discriminator_hidden = {6};
  s.seed = seed;
  return s;
}

fs::path temp_path(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "dalign_test_nn";
  fs::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_CASE("glorot init stays inside its bound with zero biases") {
  Rng rng(1);
  const Mlp mlp = make_mlp({4, 6, 2}, Activation::tanh, false, rng);
  CHECK(mlp.layer_count() == 2);
  const double a0 = std::sqrt(6.0 / 10.0);
  for (double v : mlp.weights[0].data()) CHECK(std::abs(v) < a0);
  for (double v : mlp.biases[0].data()) CHECK(v == 0.0);
  CHECK(mlp.weights[1].shape() == Shape{6, 2});
  CHECK_THROWS(make_mlp({4}, Activation::tanh, false, rng));
  CHECK_THROWS(make_mlp({4, 0}, Activation::tanh, false, rng));
}

TEST_CASE("mlp forward equals a hand computation") {
  Mlp mlp;
  mlp.widths = {2, 2, 1};
  mlp.activation = Activation::relu;
  mlp.weights = {Tensor::matrix(2, 2, {1, -1, 2, 0.5}), Tensor::matrix(2, 1, {1, 3})};
  mlp.biases = {Tensor({2}, std::vector<double>{0, -1}), Tensor({1}, std::vector<double>{0.5})};
  Tape tape;
  const MlpNodes nodes = bind_parameters(tape, mlp);
  const NodeId x = tape.leaf(Tensor::matrix(1, 2, {1, 1}));
  // hidden = relu([3, -0.5]) = [3, 0]; out = 3 + 0 + 0.5
  CHECK(tape.value(mlp_forward(tape, mlp, nodes, x)).item() == 3.5);
  const NodeId bad = tape.leaf(Tensor::matrix(1, 3, {1, 1, 1}));
  CHECK_THROWS_AS(mlp_forward(tape, mlp, nodes, bad), ShapeError);
}

TEST_CASE("network construction validates widths") {
  Rng rng(2);
  Mlp g = make_mlp({2, 4}, Activation::tanh, true, rng);
  Mlp f = make_mlp({4, 2}, Activation::tanh, false, rng);
  Mlp h = make_mlp({4, 3, 2}, Activation::relu, false, rng);
  CHECK_NOTHROW(AdaNetwork(g, f, h, 1.0));
  CHECK_THROWS_AS(AdaNetwork(g, make_mlp({3, 2}, Activation::tanh, false, rng), h, 1.0), ShapeError);
  CHECK_THROWS_AS(AdaNetwork(g, f, make_mlp({4, 3}, Activation::relu, false, rng), 1.0), ShapeError);
  CHECK_THROWS_AS(AdaNetwork(g, f, h, -1.0), std::invalid_argument);
  NetworkSpec spec = small_spec();
  spec.class_count = 1;
  CHECK_THROWS(init_network(spec));
}

TEST_CASE("parameter views are ordered and named") {
  const AdaNetwork net = init_network(small_spec());
  const auto names = net.parameter_names();
  const std::vector<std::string> expected{"g.w0", "g.b0", "g.w1", "g.b1", "f.w0",
                                          "f.b0", "h.w0", "h.b0", "h.w1", "h.b1"};
  CHECK(names == expected);
  CHECK(net.parameters().size() == names.size());
  CHECK(net.parameters()[4]->shape() == Shape{4, 3});
  CHECK(init_network(small_spec()).parameters()[0]->values() == net.parameters()[0]->values());
}

TEST_CASE("network gradients match finite differences") {
  const AdaNetwork net = init_network(small_spec());
  Rng rng(8);
  const Tensor x = random_tensor({4, 3}, rng);
  const Tensor targets = Tensor::matrix(4, 3, {1, 0, 0, 0.2, 0.3, 0.5, 0, 0, 1, 0.5, 0.5, 0});
  Tape tape;
  const NetworkNodes nodes = bind_parameters(tape, net);
  const ForwardPass pass = forward_all(tape, net, nodes, tape.leaf(x));
  const NodeId loss = tape.soft_cross_entropy(pass.class_logits, targets);
  const std::vector<Tensor> grads = gather_gradients(tape.backward(loss), nodes);
  const auto params = net.parameters();
  for (std::size_t i = 0; i < 6; ++i) {
    CAPTURE(i);
    const Tensor numeric = numeric_gradient(
        [&](const Tensor& probe) {
          AdaNetwork copy = net;
          *copy.parameters()[i] = probe;
          Tape t;
          const NetworkNodes nn = bind_parameters(t, copy);
          const ForwardPass p = forward_all(t, copy, nn, t.leaf(x));
          return t.value(t.soft_cross_entropy(p.class_logits, targets)).item();
        },
        *params[i]);
    CHECK(max_relative_error(grads[i], numeric) < 1e-6);
  }
}

TEST_CASE("inference helpers agree with the tape forward pass") {
  const AdaNetwork net = init_network(small_spec());
  Rng rng(4);
  const Tensor x = random_tensor({5, 3}, rng);
  Tape tape;
  const NetworkNodes nodes = bind_parameters(tape, net);
  const ForwardPass pass = forward_all(tape, net, nodes, tape.leaf(x));
  CHECK(class_logits(net, x) == tape.value(pass.class_logits));
  CHECK(extract_features(net, x) == tape.value(pass.features));
  CHECK(tape.value(pass.domain_logits).shape() == Shape{5, 2});
}

TEST_CASE("first adam step moves each weight by about the learning rate") {
  AdaNetwork net = init_network(small_spec());
  AdamState adam = make_adam(net, 0.01);
  const auto before = net.parameters();
  std::vector<Tensor> start;
  for (const Tensor* p : before) start.push_back(*p);
  std::vector<Tensor> grads;
  Rng rng(6);
  for (const Tensor* p : before) grads.push_back(random_tensor(p->shape(), rng));
  adam_step(adam, net.parameters(), grads, net.parameter_names());
  for (std::size_t i = 0; i < grads.size(); ++i) {
    for (std::size_t k = 0; k < grads[i].size(); ++k) {
      const double g = grads[i][k];
      const double expected = start[i][k] - 0.01 * g / (std::abs(g) + 1e-8);
      CHECK((*net.parameters()[i])[k] == doctest::Approx(expected).epsilon(1e-12));
    }
  }
  CHECK(adam.step == 1);
}

TEST_CASE("adam rejects non-finite gradients by name") {
  AdaNetwork net = init_network(small_spec());
  AdamState adam = make_adam(net, 0.01);
  std::vector<Tensor> grads;
  for (const Tensor* p : net.parameters()) grads.push_back(Tensor::zeros_like(*p));
  grads[3][0] = std::nan("");
  try {
    adam_step(adam, net.parameters(), grads, net.parameter_names());
    FAIL("expected an exception");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("g.b1") != std::string::npos);
  }
  CHECK(adam.step == 0);
}

TEST_CASE("ema update") {
  AdaNetwork student = init_network(small_spec(1));
  AdaNetwork teacher = init_network(small_spec(2));
  const AdaNetwork original = teacher;
  ema_update(teacher, student, 0.5);
  for (std::size_t i = 0; i < teacher.parameters().size(); ++i) {
    for (std::size_t k = 0; k < teacher.parameters()[i]->size(); ++k) {
      CHECK((*teacher.parameters()[i])[k] ==
            doctest::Approx(0.5 * (*original.parameters()[i])[k] + 0.5 * (*student.parameters()[i])[k]));
    }
  }
  ema_update(teacher, student, 0.0);
  for (std::size_t i = 0; i < teacher.parameters().size(); ++i) {
    CHECK(*teacher.parameters()[i] == *student.parameters()[i]);
  }
  CHECK_THROWS_AS(ema_update(teacher, student, 1.0), std::invalid_argument);
}

TEST_CASE("checkpoint round trip is exact") {
  NetworkSpec spec = small_spec(9);
  spec.activation = Activation::relu;
  spec.grl_scale = 0.3;
  const AdaNetwork net = init_network(spec);
  const fs::path path = temp_path("roundtrip.bin");
  save_checkpoint(path, net);
  const AdaNetwork back = load_checkpoint(path);
  CHECK(back.parameter_names() == net.parameter_names());
  for (std::size_t i = 0; i < net.parameters().size(); ++i) {
    CHECK(*back.parameters()[i] == *net.parameters()[i]);
  }
  CHECK(back.grl_scale() == 0.3);
  CHECK(back.g().activation == Activation::relu);
  CHECK(back.g().activate_output);
  CHECK_FALSE(back.f().activate_output);
}

TEST_CASE("corrupt checkpoints are rejected") {
  const AdaNetwork net = init_network(small_spec());
  const fs::path good = temp_path("good.bin");
  save_checkpoint(good, net);
  std::string bytes;
  {
    std::ifstream in(good, std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), {});
  }
  auto write = [](const fs::path& p, const std::string& b) {
    std::ofstream out(p, std::ios::binary);
    out << b;
  };
  const fs::path bad = temp_path("bad.bin");
  std::string magic = bytes;
  magic[0] = 'X';
  write(bad, magic);
  CHECK_THROWS_AS(load_checkpoint(bad), std::runtime_error);
  std::string version = bytes;
  version[8] = 7;
  write(bad, version);
  CHECK_THROWS_WITH_AS(load_checkpoint(bad), doctest::Contains("version"), std::runtime_error);
  write(bad, bytes.substr(0, bytes.size() - 5));
  CHECK_THROWS_WITH_AS(load_checkpoint(bad), doctest::Contains("truncated"), std::runtime_error);
  CHECK_THROWS(load_checkpoint(temp_path("missing.bin")));
}
