#pragma once

#include <compare>
#include <cstddef>
#include <vector>

#include "dalign/tensor.hpp"

namespace dalign {

struct NodeId {
  std::size_t index = 0;
  friend auto operator<=>(const NodeId&, const NodeId&) = default;
};

enum class OpKind {
  leaf,
  matmul,
  add,
  sub,
  mul,
  scale,
  relu,
  tanh,
  sum,
  mean,
  softmax,
  log_softmax,
  soft_cross_entropy,
  mse,
  mean_entropy,
  grl,
};

const char* op_name(OpKind kind);

class Gradients {
 public:
  explicit Gradients(std::vector<Tensor> grads) : grads_(std::move(grads)) {}
  const Tensor& operator[](NodeId id) const { return grads_.at(id.index); }
  std::size_t size() const { return grads_.size(); }

 private:
  std::vector<Tensor> grads_;
};

/// Append-only record of a computation. Every op validates shapes, computes
/// its value eagerly and caches it; backward() replays the record in reverse.
///
/// Broadcasting is limited to the leading axis: a right operand of shape
/// [D] (or [1, D]) combines with a left operand [B, D].
///
/// A tape is single-threaded. Separate tapes are independent.
class Tape {
 public:
  NodeId leaf(Tensor value);

  NodeId matmul(NodeId a, NodeId b);
  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId scale(NodeId a, double factor);
  NodeId relu(NodeId a);
  NodeId tanh(NodeId a);
  NodeId sum(NodeId a);
  NodeId mean(NodeId a);
  // Row-wise over the last axis of a rank-2 input.
  NodeId softmax(NodeId a);
  NodeId log_softmax(NodeId a);

  // (1/normalizer) * sum_i w_i * (-sum_c t_ic log softmax(z)_ic).
  // Targets and weights are constants. normalizer <= 0 means "row count".
  NodeId soft_cross_entropy(NodeId logits, Tensor targets, std::vector<double> weights,
                            double normalizer = 0.0);
  NodeId soft_cross_entropy(NodeId logits, Tensor targets);
  // Mean of squared differences over all elements against a constant target.
  NodeId mse(NodeId a, Tensor target);
  // Mean over rows of the Shannon entropy of softmax(logits).
  NodeId mean_entropy(NodeId logits);
  // Identity forward; backward multiplies the upstream gradient by -scale.
  NodeId grl(NodeId a, double scale);

  const Tensor& value(NodeId id) const;
  OpKind kind(NodeId id) const;
  std::size_t size() const { return nodes_.size(); }

  Gradients backward(NodeId loss) const;

 private:
  struct Node {
    OpKind kind = OpKind::leaf;
    std::vector<NodeId> inputs;
    Tensor value;
    Tensor aux;  // op-specific constant or cached intermediate
    std::vector<double> weights;
    double factor = 0.0;
  };

  const Node& node(NodeId id) const;
  NodeId push(Node node);
  NodeId elementwise(OpKind kind, NodeId a, NodeId b);

  std::vector<Node> nodes_;
};

}  // namespace dalign
