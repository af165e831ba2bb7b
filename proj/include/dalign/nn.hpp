#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dalign/rng.hpp"
#include "dalign/tape.hpp"
#include "dalign/tensor.hpp"

namespace dalign {

enum class Activation { relu, tanh };

const char* activation_name(Activation act);
Activation parse_activation(std::string_view name);

/// Fully-connected stack. Weights are [in, out], biases [out]. Hidden
/// layers apply the activation; the last layer does so only when
/// activate_output is set.
struct Mlp {
  std::vector<std::size_t> widths;
  Activation activation = Activation::tanh;
  bool activate_output = false;
  std::vector<Tensor> weights;
  std::vector<Tensor> biases;

  std::size_t input_width() const { return widths.front(); }
  std::size_t output_width() const { return widths.back(); }
  std::size_t layer_count() const { return weights.size(); }

  void validate() const;
};

// Glorot-uniform weights in (-a, a), a = sqrt(6 / (fan_in + fan_out)); zero biases.
Mlp make_mlp(std::vector<std::size_t> widths, Activation activation, bool activate_output,
             Rng& rng);

struct MlpNodes {
  std::vector<NodeId> weights;
  std::vector<NodeId> biases;
};

MlpNodes bind_parameters(Tape& tape, const Mlp& mlp);
NodeId mlp_forward(Tape& tape, const Mlp& mlp, const MlpNodes& params, NodeId input);

struct NetworkSpec {
  // g: input width first, feature width last.
  std::vector<std::size_t> feature_widths{2, 32, 32, 8};
  std::size_t class_count = 2;
  std::vector<std::size_t> discriminator_hidden{64, 64};
  Activation activation = Activation::tanh;
  double grl_scale = 1.0;
  std::uint64_t seed = 0;
};

/// Feature extractor g, class predictor f (one linear layer) and domain
/// discriminator h (two logits: labeled, unlabeled).
class AdaNetwork {
 public:
  AdaNetwork(Mlp g, Mlp f, Mlp h, double grl_scale);

  const Mlp& g() const { return g_; }
  const Mlp& f() const { return f_; }
  const Mlp& h() const { return h_; }

  double grl_scale() const { return grl_scale_; }
  void set_grl_scale(double scale);

  std::size_t input_width() const { return g_.input_width(); }
  std::size_t feature_width() const { return g_.output_width(); }
  std::size_t class_count() const { return f_.output_width(); }

  // Flat parameter views in a fixed order: g, f, h; weight then bias per layer.
  std::vector<std::string> parameter_names() const;
  std::vector<const Tensor*> parameters() const;
  std::vector<Tensor*> parameters();

 private:
  Mlp g_, f_, h_;
  double grl_scale_;
};

AdaNetwork init_network(const NetworkSpec& spec);

struct NetworkNodes {
  MlpNodes g, f, h;
  std::vector<NodeId> flat() const;
};

NetworkNodes bind_parameters(Tape& tape, const AdaNetwork& net);

struct ForwardPass {
  NodeId features;
  NodeId class_logits;
  NodeId domain_logits;
};

// class logits = f(g(x)); domain logits = h(grl(g(x), grl_scale)).
ForwardPass forward_all(Tape& tape, const AdaNetwork& net, const NetworkNodes& params,
                        NodeId batch);

// Convenience for inference: class logits only.
Tensor class_logits(const AdaNetwork& net, const Tensor& batch);
Tensor extract_features(const AdaNetwork& net, const Tensor& batch);

std::vector<Tensor> gather_gradients(const Gradients& grads, const NetworkNodes& nodes);

struct AdamState {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t step = 0;
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;
};

AdamState make_adam(const AdaNetwork& net, double learning_rate);

// Bias-corrected Adam update. Throws naming the parameter on a non-finite gradient.
void adam_step(AdamState& state, std::span<Tensor* const> params,
               std::span<const Tensor> grads, std::span<const std::string> names = {});

// teacher <- decay * teacher + (1 - decay) * student, parameter-wise.
void ema_update(AdaNetwork& teacher, const AdaNetwork& student, double decay);

/// Binary checkpoint: "DALIGNCK", u32 version, u32-length metadata text
/// (key=value lines), u32 tensor count, then per tensor u32 name length,
/// name, u32 rank, u64 extents, little-endian f64 values.
void save_checkpoint(const std::filesystem::path& path, const AdaNetwork& net);
AdaNetwork load_checkpoint(const std::filesystem::path& path);

inline constexpr std::uint32_t kCheckpointVersion = 1;

}  // namespace dalign
