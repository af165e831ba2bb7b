#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "dalign/datasets.hpp"
#include "dalign/divergence.hpp"
#include "dalign/mixup.hpp"
#include "dalign/nn.hpp"
#include "dalign/rng.hpp"
#include "dalign/tape.hpp"

namespace dalign {

enum class Variant { supervised, das_only, sas_only, ada, ada_ict, ada_ent };

const char* variant_name(Variant variant);
Variant parse_variant(std::string_view name);

struct TrainingConfig {
  Variant variant = Variant::ada;
  double gamma = 1.0;
  double alpha = 1.0;
  std::size_t epochs = 400;
  std::size_t batch_size = 64;
  double learning_rate = 3e-3;
  // Fraction of training after which the learning rate decays linearly to 0.
  double lr_decay_start = 0.75;
  std::uint64_t seed = 0;

  // Consistency weight w(e) = start + (end - start) * min(1, e / ramp_epochs),
  // with e the fractional epoch.
  double ict_weight_start = 0.0;
  double ict_weight_end = 1.0;
  double ict_ramp_epochs = 100.0;
  double ema_decay = 0.99;
  // Use teacher pseudo-labels for the cross-set mixes as well.
  bool teacher_cross_set_labels = false;

  double entropy_weight = 0.1;

  // Replaces the Beta(alpha, alpha) draws; 1 reproduces plain supervision.
  std::optional<double> fixed_lambda;

  // Also evaluate the proxy divergence every k epochs (0: only at the ends).
  std::size_t proxy_every = 0;
  ProxyOptions proxy;

  NetworkSpec network;

  void validate() const;
  double ict_weight(double epoch) const;
  double learning_rate_at(std::size_t epoch) const;
};

struct StepBatch {
  Tensor x_labeled;    // [B, d]
  Tensor y_labeled;    // [B, classes] one-hot
  Tensor x_unlabeled;  // [B, d]
};

struct StepMetrics {
  double classification_loss = 0.0;
  double domain_loss = 0.0;
  double unlabeled_loss = 0.0;
  double total_loss = 0.0;
};

struct EpochMetrics {
  std::size_t epoch = 0;
  double learning_rate = 0.0;
  double classification_loss = 0.0;
  double domain_loss = 0.0;
  double unlabeled_loss = 0.0;
  double train_accuracy = 0.0;
  std::optional<double> test_accuracy;
  std::optional<double> proxy_divergence;
  double wall_seconds = 0.0;
};

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Mixed batch plus the class-loss weights it is trained with.
struct PreparedBatch {
  MixedBatch mix;
  std::vector<double> class_weights;
  double class_normalizer = 0.0;  // 0: row count
  bool use_domain = true;
};

// Steps 1 and 2 of a training iteration: pseudo-labels from `label_net`
// and one lambda per pair. supervised and das_only draw nothing.
PreparedBatch prepare_batch(Variant variant, const AdaNetwork& label_net, const StepBatch& batch,
                            double alpha, std::optional<double> fixed_lambda, Rng& mixup_rng);

struct ObjectiveNodes {
  NodeId total;
  NodeId classification;
  std::optional<NodeId> domain;
};

// (1/N) sum_i w_i CE(f(g(x_i)), y_i) + gamma * mean_i CE(h(grl(g(x_i))), [1 - z_i, z_i]).
ObjectiveNodes ada_objective(Tape& tape, const AdaNetwork& net, const NetworkNodes& params,
                             const PreparedBatch& batch, double gamma);

// Scalar value of ada_objective for the given network (no gradients).
double ada_objective_value(const AdaNetwork& net, const PreparedBatch& batch, double gamma);

// Within-set mixes of the unlabeled batch with a shuffled copy of itself,
// targets from the teacher's softmax.
MixedBatch prepare_within_set(const AdaNetwork& teacher, const Tensor& x_unlabeled, double alpha,
                              Rng& ict_rng);

StepMetrics train_step_ada(AdaNetwork& net, AdamState& adam, const StepBatch& batch,
                           const TrainingConfig& config, Rng& mixup_rng);
StepMetrics train_step_ict(AdaNetwork& student, AdaNetwork& teacher, AdamState& adam,
                           const StepBatch& batch, const TrainingConfig& config, double ict_weight,
                           Rng& mixup_rng, Rng& ict_rng);
StepMetrics train_step_ent(AdaNetwork& net, AdamState& adam, const StepBatch& batch,
                           const TrainingConfig& config, Rng& mixup_rng);

struct Evaluation {
  double accuracy = 0.0;
  std::vector<double> per_class_accuracy;
  std::vector<std::size_t> per_class_count;
  double error_rate() const { return 1.0 - accuracy; }
};

Evaluation evaluate(const AdaNetwork& net, const LabeledSet& set);
Evaluation evaluate_predictions(std::span<const int> predicted, std::span<const int> truth,
                                std::size_t num_classes);

struct TrainingResult {
  AdaNetwork network;
  std::vector<EpochMetrics> epochs;
  std::vector<StepMetrics> steps;
  ProxyDivergence initial_proxy;
  ProxyDivergence final_proxy;
  std::optional<Evaluation> test;
};

using EpochCallback = std::function<void(const EpochMetrics&)>;

/// Full training loop. An epoch is one pass over the shuffled unlabeled
/// set; the labeled set is cycled so every step sees as many labeled as
/// unlabeled samples. All randomness comes from child streams of
/// config.seed, so identical inputs give bit-identical traces.
TrainingResult train(const TrainingConfig& config, const LabeledSet& labeled,
                     const UnlabeledSet& unlabeled, const LabeledSet* test = nullptr,
                     const EpochCallback& on_epoch = {});

std::string metrics_csv_header();
// Everything except wall-clock time, so reruns are byte-identical.
std::string metrics_csv_row(const EpochMetrics& metrics);

}  // namespace dalign
