#include "dalign/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

namespace dalign {

const char* variant_name(Variant variant) {
  switch (variant) {
    case Variant::supervised: return "supervised";
    case Variant::das_only: return "das_only";
    case Variant::sas_only: return "sas_only";
    case Variant::ada: return "ada";
    case Variant::ada_ict: return "ada_ict";
    case Variant::ada_ent: return "ada_ent";
  }
  return "unknown";
}

Variant parse_variant(std::string_view name) {
  for (Variant v : {Variant::supervised, Variant::das_only, Variant::sas_only, Variant::ada,
                    Variant::ada_ict, Variant::ada_ent}) {
    if (name == variant_name(v)) return v;
  }
  throw std::invalid_argument("unknown variant '" + std::string(name) +
                              "' (expected supervised, das_only, sas_only, ada, ada_ict, ada_ent)");
}

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument("training config: " + what);
}

bool non_negative(double v) { return std::isfinite(v) && v >= 0.0; }

}  // namespace

void TrainingConfig::validate() const {
  require(non_negative(gamma), "gamma must be finite and >= 0");
  require(std::isfinite(alpha) && alpha > 0.0, "alpha must be finite and > 0");
  require(epochs > 0, "epochs must be positive");
  require(batch_size > 0, "batch size must be positive");
  require(std::isfinite(learning_rate) && learning_rate > 0.0, "learning rate must be > 0");
  require(lr_decay_start >= 0.0 && lr_decay_start <= 1.0, "lr decay start must be in [0, 1]");
  require(non_negative(ict_weight_start) && non_negative(ict_weight_end),
          "ICT weights must be >= 0");
  require(non_negative(ict_ramp_epochs), "ICT ramp must be >= 0");
  require(ema_decay >= 0.0 && ema_decay < 1.0, "EMA decay must be in [0, 1)");
  require(non_negative(entropy_weight), "entropy weight must be >= 0");
  if (fixed_lambda) {
    require(*fixed_lambda >= 0.0 && *fixed_lambda <= 1.0, "fixed lambda must be in [0, 1]");
  }
}

double TrainingConfig::ict_weight(double epoch) const {
  const double ramp = ict_ramp_epochs > 0.0 ? std::min(1.0, std::max(0.0, epoch) / ict_ramp_epochs)
                                            : 1.0;
  return ict_weight_start + (ict_weight_end - ict_weight_start) * ramp;
}

double TrainingConfig::learning_rate_at(std::size_t epoch) const {
  const double total = static_cast<double>(epochs);
  const double start = lr_decay_start * total;
  const double e = static_cast<double>(epoch);
  if (e < start || total <= start) return learning_rate;
  return learning_rate * std::max(0.0, (total - e) / (total - start));
}

PreparedBatch prepare_batch(Variant variant, const AdaNetwork& label_net, const StepBatch& batch,
                            double alpha, std::optional<double> fixed_lambda, Rng& mixup_rng) {
  const std::size_t b = batch.x_labeled.rows();
  if (b == 0 || batch.x_unlabeled.rows() == 0) {
    throw std::invalid_argument("training step: batches must be non-empty");
  }
  if (batch.y_labeled.rows() != b) throw ShapeError("training step: label rows differ from samples");
  PreparedBatch out;
  switch (variant) {
    case Variant::supervised: {
      out.mix = MixedBatch{batch.x_labeled, batch.y_labeled, std::vector<double>(b, 0.0),
                           std::vector<double>(b, 1.0)};
      out.class_weights.assign(b, 1.0);
      out.use_domain = false;
      return out;
    }
    case Variant::das_only: {
      // Original samples only: labeled rows carry z = 0 and the class loss,
      // unlabeled rows z = 1 and no class loss.
      const std::size_t u = batch.x_unlabeled.rows();
      Tensor y_unl({u, batch.y_labeled.cols()}, 0.0);
      out.mix.x = concat_rows(batch.x_labeled, batch.x_unlabeled);
      out.mix.y = concat_rows(batch.y_labeled, y_unl);
      out.mix.z.assign(b, 0.0);
      out.mix.z.resize(b + u, 1.0);
      out.mix.lambda.assign(b, 1.0);
      out.mix.lambda.resize(b + u, 0.0);
      out.class_weights = out.mix.lambda;
      out.class_normalizer = static_cast<double>(b);
      return out;
    }
    default: break;
  }
  if (batch.x_unlabeled.rows() != b) {
    throw ShapeError("cross-set mix needs equal labeled and unlabeled batch sizes");
  }
  const PseudoLabels pseudo = make_pseudo_labels(label_net, batch.x_unlabeled);
  std::vector<double> lambdas(b);
  for (auto& l : lambdas) l = fixed_lambda ? *fixed_lambda : sample_beta(mixup_rng, alpha);
  out.mix = cross_set_mix_batch(batch.x_labeled, batch.y_labeled, batch.x_unlabeled,
                                pseudo.probabilities, lambdas);
  out.class_weights = lambdas;
  out.use_domain = variant != Variant::sas_only;
  return out;
}

ObjectiveNodes ada_objective(Tape& tape, const AdaNetwork& net, const NetworkNodes& params,
                             const PreparedBatch& batch, double gamma) {
  const NodeId x = tape.leaf(batch.mix.x);
  ObjectiveNodes out{};
  if (!batch.use_domain) {
    const NodeId feat = mlp_forward(tape, net.g(), params.g, x);
    const NodeId logits = mlp_forward(tape, net.f(), params.f, feat);
    out.classification = tape.soft_cross_entropy(logits, batch.mix.y, batch.class_weights,
                                                 batch.class_normalizer);
    out.total = out.classification;
    return out;
  }
  const ForwardPass pass = forward_all(tape, net, params, x);
  out.classification = tape.soft_cross_entropy(pass.class_logits, batch.mix.y,
                                               batch.class_weights, batch.class_normalizer);
  const std::size_t rows = batch.mix.z.size();
  Tensor domain_targets({rows, 2});
  for (std::size_t r = 0; r < rows; ++r) {
    domain_targets.at(r, 0) = 1.0 - batch.mix.z[r];
    domain_targets.at(r, 1) = batch.mix.z[r];
  }
  out.domain = tape.soft_cross_entropy(pass.domain_logits, std::move(domain_targets));
  out.total = tape.add(out.classification, tape.scale(*out.domain, gamma));
  return out;
}

double ada_objective_value(const AdaNetwork& net, const PreparedBatch& batch, double gamma) {
  Tape tape;
  const NetworkNodes params = bind_parameters(tape, net);
  return tape.value(ada_objective(tape, net, params, batch, gamma).total).item();
}

MixedBatch prepare_within_set(const AdaNetwork& teacher, const Tensor& x_unlabeled, double alpha,
                              Rng& ict_rng) {
  const std::size_t b = x_unlabeled.rows();
  if (b == 0) throw std::invalid_argument("within-set mix: empty batch");
  const PseudoLabels pseudo = make_pseudo_labels(teacher, x_unlabeled);
  std::vector<std::size_t> partner(b);
  std::iota(partner.begin(), partner.end(), std::size_t{0});
  shuffle(std::span<std::size_t>(partner), ict_rng);
  std::vector<double> lambdas(b);
  for (auto& l : lambdas) l = sample_beta(ict_rng, alpha);
  return within_set_mix_batch(x_unlabeled, pseudo.probabilities, gather_rows(x_unlabeled, partner),
                              gather_rows(pseudo.probabilities, partner), lambdas);
}

namespace {

void check_finite(const StepMetrics& m) {
  if (std::isfinite(m.total_loss) && std::isfinite(m.classification_loss) &&
      std::isfinite(m.domain_loss) && std::isfinite(m.unlabeled_loss)) {
    return;
  }
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "non-finite loss: classification=%g domain=%g unlabeled=%g total=%g",
                m.classification_loss, m.domain_loss, m.unlabeled_loss, m.total_loss);
  throw TrainingError(buf);
}

struct Extra {
  NodeId node;
  double weight;
};

// Builds the ADA objective plus an optional unlabeled term and applies one
// Adam step.
template <typename AddExtra>
StepMetrics optimise(AdaNetwork& net, AdamState& adam, const PreparedBatch& prepared,
                     double gamma, AddExtra&& add_extra) {
  Tape tape;
  const NetworkNodes params = bind_parameters(tape, net);
  ObjectiveNodes obj = ada_objective(tape, net, params, prepared, gamma);
  StepMetrics m;
  m.classification_loss = tape.value(obj.classification).item();
  m.domain_loss = obj.domain ? tape.value(*obj.domain).item() : 0.0;
  NodeId total = obj.total;
  if (std::optional<Extra> extra = add_extra(tape, params)) {
    m.unlabeled_loss = tape.value(extra->node).item();
    total = tape.add(total, tape.scale(extra->node, extra->weight));
  }
  m.total_loss = tape.value(total).item();
  check_finite(m);
  const Gradients grads = tape.backward(total);
  const std::vector<Tensor> g = gather_gradients(grads, params);
  const std::vector<Tensor*> p = net.parameters();
  const std::vector<std::string> names = net.parameter_names();
  try {
    adam_step(adam, p, g, names);
  } catch (const std::runtime_error& e) {
    throw TrainingError(e.what());
  }
  return m;
}

auto no_extra = [](Tape&, const NetworkNodes&) { return std::optional<Extra>{}; };

}  // namespace

StepMetrics train_step_ada(AdaNetwork& net, AdamState& adam, const StepBatch& batch,
                           const TrainingConfig& config, Rng& mixup_rng) {
  const PreparedBatch prepared =
      prepare_batch(config.variant == Variant::ada_ict || config.variant == Variant::ada_ent
                        ? Variant::ada
                        : config.variant,
                    net, batch, config.alpha, config.fixed_lambda, mixup_rng);
  return optimise(net, adam, prepared, config.gamma, no_extra);
}

StepMetrics train_step_ict(AdaNetwork& student, AdaNetwork& teacher, AdamState& adam,
                           const StepBatch& batch, const TrainingConfig& config, double ict_weight,
                           Rng& mixup_rng, Rng& ict_rng) {
  const AdaNetwork& label_net = config.teacher_cross_set_labels ? teacher : student;
  const PreparedBatch prepared =
      prepare_batch(Variant::ada, label_net, batch, config.alpha, config.fixed_lambda, mixup_rng);
  const MixedBatch within = prepare_within_set(teacher, batch.x_unlabeled, config.alpha, ict_rng);
  const StepMetrics m =
      optimise(student, adam, prepared, config.gamma, [&](Tape& tape, const NetworkNodes& params) {
        const NodeId x = tape.leaf(within.x);
        const NodeId feat = mlp_forward(tape, student.g(), params.g, x);
        const NodeId probs = tape.softmax(mlp_forward(tape, student.f(), params.f, feat));
        return std::optional<Extra>{Extra{tape.mse(probs, within.y), ict_weight}};
      });
  ema_update(teacher, student, config.ema_decay);
  return m;
}

StepMetrics train_step_ent(AdaNetwork& net, AdamState& adam, const StepBatch& batch,
                           const TrainingConfig& config, Rng& mixup_rng) {
  const PreparedBatch prepared =
      prepare_batch(Variant::ada, net, batch, config.alpha, config.fixed_lambda, mixup_rng);
  return optimise(net, adam, prepared, config.gamma, [&](Tape& tape, const NetworkNodes& params) {
    const NodeId x = tape.leaf(batch.x_unlabeled);
    const NodeId feat = mlp_forward(tape, net.g(), params.g, x);
    const NodeId logits = mlp_forward(tape, net.f(), params.f, feat);
    return std::optional<Extra>{Extra{tape.mean_entropy(logits), config.entropy_weight}};
  });
}

Evaluation evaluate_predictions(std::span<const int> predicted, std::span<const int> truth,
                                std::size_t num_classes) {
  if (truth.empty()) throw std::invalid_argument("evaluate: empty set");
  if (predicted.size() != truth.size()) throw ShapeError("evaluate: prediction count mismatch");
  Evaluation ev;
  ev.per_class_accuracy.assign(num_classes, 0.0);
  ev.per_class_count.assign(num_classes, 0);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const auto t = static_cast<std::size_t>(truth[i]);
    if (truth[i] < 0 || t >= num_classes) throw std::invalid_argument("evaluate: label out of range");
    ++ev.per_class_count[t];
    if (predicted[i] == truth[i]) {
      ++correct;
      ev.per_class_accuracy[t] += 1.0;
    }
  }
  for (std::size_t c = 0; c < num_classes; ++c) {
    if (ev.per_class_count[c] > 0) ev.per_class_accuracy[c] /= static_cast<double>(ev.per_class_count[c]);
  }
  ev.accuracy = static_cast<double>(correct) / static_cast<double>(truth.size());
  return ev;
}

Evaluation evaluate(const AdaNetwork& net, const LabeledSet& set) {
  if (set.size() == 0) throw std::invalid_argument("evaluate: empty set");
  const std::vector<int> predicted = row_argmax(class_logits(net, set.x));
  return evaluate_predictions(predicted, set.y, std::max(set.num_classes, net.class_count()));
}

namespace {

class Sampler {
 public:
  Sampler(std::size_t count, Rng rng) : order_(count), rng_(std::move(rng)) {
    std::iota(order_.begin(), order_.end(), std::size_t{0});
  }

  void reshuffle() {
    shuffle(std::span<std::size_t>(order_), rng_);
    pos_ = 0;
  }

  // Next `count` indices, reshuffling whenever the order is exhausted.
  std::vector<std::size_t> cycle(std::size_t count) {
    std::vector<std::size_t> out;
    out.reserve(count);
    while (out.size() < count) {
      if (pos_ == 0 || pos_ == order_.size()) reshuffle();
      out.push_back(order_[pos_++]);
    }
    return out;
  }

  const std::vector<std::size_t>& order() const { return order_; }

 private:
  std::vector<std::size_t> order_;
  Rng rng_;
  std::size_t pos_ = 0;
};

}  // namespace

TrainingResult train(const TrainingConfig& config, const LabeledSet& labeled,
                     const UnlabeledSet& unlabeled, const LabeledSet* test,
                     const EpochCallback& on_epoch) {
  config.validate();
  labeled.validate();
  if (labeled.size() == 0) throw std::invalid_argument("train: labeled set is empty");
  if (unlabeled.size() == 0) throw std::invalid_argument("train: unlabeled set is empty");
  if (unlabeled.x.cols() != labeled.x.cols()) {
    throw ShapeError("train: labeled and unlabeled feature widths differ");
  }
  NetworkSpec spec = config.network;
  spec.feature_widths.front() = labeled.x.cols();
  spec.class_count = std::max(spec.class_count, labeled.num_classes);
  spec.seed = config.seed;

  const Rng root(config.seed);
  Rng mixup_rng = root.stream("mixup");
  Rng ict_rng = root.stream("ict");
  Sampler unl_sampler(unlabeled.size(), root.stream("sampler/unlabeled"));
  Sampler lab_sampler(labeled.size(), root.stream("sampler/labeled"));

  TrainingResult result{init_network(spec), {}, {}, {}, {}, {}};
  AdaNetwork& net = result.network;
  AdaNetwork teacher = net;
  AdamState adam = make_adam(net, config.learning_rate);
  const Tensor y_onehot = one_hot(labeled.y, net.class_count());

  ProxyOptions proxy = config.proxy;
  proxy.seed = config.seed;
  result.initial_proxy = proxy_h_divergence(net, labeled.x, unlabeled.x, proxy);

  const std::size_t b = config.batch_size;
  const std::size_t m = unlabeled.size();
  const std::size_t steps_per_epoch = (m + b - 1) / b;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    EpochMetrics em;
    em.epoch = epoch + 1;
    em.learning_rate = config.learning_rate_at(epoch);
    adam.learning_rate = em.learning_rate;
    unl_sampler.reshuffle();
    const auto& order = unl_sampler.order();
    for (std::size_t s = 0; s < steps_per_epoch; ++s) {
      const std::size_t begin = s * b;
      const std::size_t end = std::min(m, begin + b);
      const std::vector<std::size_t> ui(order.begin() + static_cast<std::ptrdiff_t>(begin),
                                        order.begin() + static_cast<std::ptrdiff_t>(end));
      const std::vector<std::size_t> li = lab_sampler.cycle(ui.size());
      const StepBatch batch{gather_rows(labeled.x, li), gather_rows(y_onehot, li),
                            gather_rows(unlabeled.x, ui)};
      StepMetrics sm;
      try {
        switch (config.variant) {
          case Variant::ada_ict: {
            const double fe = static_cast<double>(epoch) +
                              static_cast<double>(s) / static_cast<double>(steps_per_epoch);
            sm = train_step_ict(net, teacher, adam, batch, config, config.ict_weight(fe),
                                mixup_rng, ict_rng);
            break;
          }
          case Variant::ada_ent:
            sm = train_step_ent(net, adam, batch, config, mixup_rng);
            break;
          default:
            sm = train_step_ada(net, adam, batch, config, mixup_rng);
        }
      } catch (const TrainingError& e) {
        throw TrainingError(std::string(e.what()) + " at epoch " + std::to_string(epoch + 1) +
                            ", step " + std::to_string(s + 1));
      }
      result.steps.push_back(sm);
      em.classification_loss += sm.classification_loss;
      em.domain_loss += sm.domain_loss;
      em.unlabeled_loss += sm.unlabeled_loss;
    }
    const auto steps = static_cast<double>(steps_per_epoch);
    em.classification_loss /= steps;
    em.domain_loss /= steps;
    em.unlabeled_loss /= steps;
    em.train_accuracy = evaluate(net, labeled).accuracy;
    if (test) em.test_accuracy = evaluate(net, *test).accuracy;
    const bool last = epoch + 1 == config.epochs;
    if (last) {
      result.final_proxy = proxy_h_divergence(net, labeled.x, unlabeled.x, proxy);
      em.proxy_divergence = result.final_proxy.value;
    } else if (config.proxy_every > 0 && (epoch + 1) % config.proxy_every == 0) {
      em.proxy_divergence = proxy_h_divergence(net, labeled.x, unlabeled.x, proxy).value;
    }
    em.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.epochs.push_back(em);
    if (on_epoch) on_epoch(em);
  }
  if (test) result.test = evaluate(net, *test);
  return result;
}

std::string metrics_csv_header() {
  return "epoch,learning_rate,classification_loss,domain_loss,unlabeled_loss,train_accuracy,"
         "test_accuracy,proxy_divergence";
}

std::string metrics_csv_row(const EpochMetrics& m) {
  char buf[512];
  auto opt = [](const std::optional<double>& v) {
    char tmp[32] = "";
    if (v) std::snprintf(tmp, sizeof tmp, "%.10g", *v);
    return std::string(tmp);
  };
  std::snprintf(buf, sizeof buf, "%zu,%.10g,%.10g,%.10g,%.10g,%.10g,", m.epoch, m.learning_rate,
                m.classification_loss, m.domain_loss, m.unlabeled_loss, m.train_accuracy);
  return std::string(buf) + opt(m.test_accuracy) + "," + opt(m.proxy_divergence);
}

}  // namespace dalign
