#include "dalign/tape.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace dalign {

const char* op_name(OpKind kind) {
  switch (kind) {
    case OpKind::leaf: return "leaf";
    case OpKind::matmul: return "matmul";
    case OpKind::add: return "add";
    case OpKind::sub: return "sub";
    case OpKind::mul: return "mul";
    case OpKind::scale: return "scale";
    case OpKind::relu: return "relu";
    case OpKind::tanh: return "tanh";
    case OpKind::sum: return "sum";
    case OpKind::mean: return "mean";
    case OpKind::softmax: return "softmax";
    case OpKind::log_softmax: return "log_softmax";
    case OpKind::soft_cross_entropy: return "soft_cross_entropy";
    case OpKind::mse: return "mse";
    case OpKind::mean_entropy: return "mean_entropy";
    case OpKind::grl: return "grl";
  }
  return "unknown";
}

namespace {

enum class Broadcast { none, leading };

Broadcast broadcast_kind(const Tensor& a, const Tensor& b, OpKind kind) {
  if (a.shape() == b.shape()) return Broadcast::none;
  if (a.rank() >= 2) {
    Shape tail(a.shape().begin() + 1, a.shape().end());
    Shape tail_with_one = tail;
    tail_with_one.insert(tail_with_one.begin(), 1);
    if (b.shape() == tail || b.shape() == tail_with_one) return Broadcast::leading;
  }
  throw ShapeError(std::string(op_name(kind)) + ": shape mismatch " +
                   shape_to_string(a.shape()) + " vs " + shape_to_string(b.shape()));
}

void require_matrix(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw ShapeError(std::string(op) + ": expected a rank-2 input, got " +
                     shape_to_string(t.shape()));
  }
}

// Row-wise log-sum-exp with max subtraction.
double row_logsumexp(std::span<const double> row) {
  double top = -std::numeric_limits<double>::infinity();
  for (double v : row) top = std::max(top, v);
  double acc = 0.0;
  for (double v : row) acc += std::exp(v - top);
  return top + std::log(acc);
}

Tensor softmax_rows(const Tensor& z) {
  Tensor out(z.shape());
  for (std::size_t r = 0; r < z.rows(); ++r) {
    const double lse = row_logsumexp(z.row(r));
    auto in = z.row(r);
    auto o = out.row(r);
    for (std::size_t c = 0; c < in.size(); ++c) o[c] = std::exp(in[c] - lse);
  }
  return out;
}

}  // namespace

const Tape::Node& Tape::node(NodeId id) const {
  if (id.index >= nodes_.size()) {
    throw std::out_of_range("node id " + std::to_string(id.index) + " not on tape");
  }
  return nodes_[id.index];
}

NodeId Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return NodeId{nodes_.size() - 1};
}

const Tensor& Tape::value(NodeId id) const { return node(id).value; }
OpKind Tape::kind(NodeId id) const { return node(id).kind; }

NodeId Tape::leaf(Tensor value) {
  Node n;
  n.kind = OpKind::leaf;
  n.value = std::move(value);
  return push(std::move(n));
}

NodeId Tape::matmul(NodeId a, NodeId b) {
  const Tensor& x = value(a);
  const Tensor& y = value(b);
  if (x.rank() != 2 || y.rank() != 2 || x.shape()[1] != y.shape()[0]) {
    throw ShapeError("matmul: shape mismatch " + shape_to_string(x.shape()) + " vs " +
                     shape_to_string(y.shape()));
  }
  const std::size_t rows = x.shape()[0], inner = x.shape()[1], cols = y.shape()[1];
  Tensor out(Shape{rows, cols});
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t k = 0; k < inner; ++k) {
      const double xik = x[i * inner + k];
      for (std::size_t j = 0; j < cols; ++j) out[i * cols + j] += xik * y[k * cols + j];
    }
  }
  Node n;
  n.kind = OpKind::matmul;
  n.inputs = {a, b};
  n.value = std::move(out);
  return push(std::move(n));
}

NodeId Tape::elementwise(OpKind kind, NodeId a, NodeId b) {
  const Tensor& x = value(a);
  const Tensor& y = value(b);
  const Broadcast mode = broadcast_kind(x, y, kind);
  Tensor out(x.shape());
  const std::size_t width = mode == Broadcast::leading ? y.size() : x.size();
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double rhs = y[i % width];
    switch (kind) {
      case OpKind::add: out[i] = x[i] + rhs; break;
      case OpKind::sub: out[i] = x[i] - rhs; break;
      default: out[i] = x[i] * rhs; break;
    }
  }
  Node n;
  n.kind = kind;
  n.inputs = {a, b};
  n.value = std::move(out);
  return push(std::move(n));
}

NodeId Tape::add(NodeId a, NodeId b) { return elementwise(OpKind::add, a, b); }
NodeId Tape::sub(NodeId a, NodeId b) { return elementwise(OpKind::sub, a, b); }
NodeId Tape::mul(NodeId a, NodeId b) { return elementwise(OpKind::mul, a, b); }

NodeId Tape::scale(NodeId a, double factor) {
  Tensor out = value(a);
  for (double& v : out.data()) v *= factor;
  Node n;
  n.kind = OpKind::scale;
  n.inputs = {a};
  n.value = std::move(out);
  n.factor = factor;
  return push(std::move(n));
}

NodeId Tape::relu(NodeId a) {
  Tensor out = value(a);
  for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
  Node n;
  n.kind = OpKind::relu;
  n.inputs = {a};
  n.value = std::move(out);
  return push(std::move(n));
}

NodeId Tape::tanh(NodeId a) {
  Tensor out = value(a);
  for (double& v : out.data()) v = std::tanh(v);
  Node n;
  n.kind = OpKind::tanh;
  n.inputs = {a};
  n.value = std::move(out);
  return push(std::move(n));
}

NodeId Tape::sum(NodeId a) {
  double acc = 0.0;
  for (double v : value(a).data()) acc += v;
  Node n;
  n.kind = OpKind::sum;
  n.inputs = {a};
  n.value = Tensor::scalar(acc);
  return push(std::move(n));
}

NodeId Tape::mean(NodeId a) {
  const Tensor& x = value(a);
  if (x.empty()) throw ShapeError("mean: empty input");
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  Node n;
  n.kind = OpKind::mean;
  n.inputs = {a};
  n.value = Tensor::scalar(acc / static_cast<double>(x.size()));
  return push(std::move(n));
}

NodeId Tape::softmax(NodeId a) {
  const Tensor& z = value(a);
  require_matrix(z, "softmax");
  Node n;
  n.kind = OpKind::softmax;
  n.inputs = {a};
  n.value = softmax_rows(z);
  return push(std::move(n));
}

NodeId Tape::log_softmax(NodeId a) {
  const Tensor& z = value(a);
  require_matrix(z, "log_softmax");
  Tensor out(z.shape());
  for (std::size_t r = 0; r < z.rows(); ++r) {
    const double lse = row_logsumexp(z.row(r));
    auto in = z.row(r);
    auto o = out.row(r);
    for (std::size_t c = 0; c < in.size(); ++c) o[c] = in[c] - lse;
  }
  Node n;
  n.kind = OpKind::log_softmax;
  n.inputs = {a};
  n.value = std::move(out);
  return push(std::move(n));
}

NodeId Tape::soft_cross_entropy(NodeId logits, Tensor targets, std::vector<double> weights,
                                double normalizer) {
  const Tensor& z = value(logits);
  require_matrix(z, "soft_cross_entropy");
  if (targets.shape() != z.shape()) {
    throw ShapeError("soft_cross_entropy: logits " + shape_to_string(z.shape()) +
                     " vs targets " + shape_to_string(targets.shape()));
  }
  if (weights.size() != z.rows()) {
    throw ShapeError("soft_cross_entropy: " + std::to_string(weights.size()) +
                     " weights for " + std::to_string(z.rows()) + " rows");
  }
  if (z.rows() == 0) throw ShapeError("soft_cross_entropy: empty batch");
  const double norm = normalizer > 0.0 ? normalizer : static_cast<double>(z.rows());
  double total = 0.0;
  for (std::size_t r = 0; r < z.rows(); ++r) {
    const double lse = row_logsumexp(z.row(r));
    auto in = z.row(r);
    auto t = targets.row(r);
    double ce = 0.0;
    for (std::size_t c = 0; c < in.size(); ++c) {
      if (t[c] != 0.0) ce -= t[c] * (in[c] - lse);
    }
    total += weights[r] * ce;
  }
  Node n;
  n.kind = OpKind::soft_cross_entropy;
  n.inputs = {logits};
  n.value = Tensor::scalar(total / norm);
  n.aux = std::move(targets);
  n.weights = std::move(weights);
  n.factor = norm;
  return push(std::move(n));
}

NodeId Tape::soft_cross_entropy(NodeId logits, Tensor targets) {
  std::vector<double> weights(value(logits).rows(), 1.0);
  return soft_cross_entropy(logits, std::move(targets), std::move(weights));
}

NodeId Tape::mse(NodeId a, Tensor target) {
  const Tensor& x = value(a);
  if (x.shape() != target.shape()) {
    throw ShapeError("mse: shape mismatch " + shape_to_string(x.shape()) + " vs " +
                     shape_to_string(target.shape()));
  }
  if (x.empty()) throw ShapeError("mse: empty input");
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - target[i];
    acc += d * d;
  }
  Node n;
  n.kind = OpKind::mse;
  n.inputs = {a};
  n.value = Tensor::scalar(acc / static_cast<double>(x.size()));
  n.aux = std::move(target);
  return push(std::move(n));
}

NodeId Tape::mean_entropy(NodeId logits) {
  const Tensor& z = value(logits);
  require_matrix(z, "mean_entropy");
  if (z.rows() == 0) throw ShapeError("mean_entropy: empty batch");
  // aux caches per-row entropy for the backward pass.
  Tensor row_entropy(Shape{z.rows()});
  double total = 0.0;
  for (std::size_t r = 0; r < z.rows(); ++r) {
    const double lse = row_logsumexp(z.row(r));
    double h = 0.0;
    for (double v : z.row(r)) {
      const double logp = v - lse;
      h -= std::exp(logp) * logp;
    }
    row_entropy[r] = h;
    total += h;
  }
  Node n;
  n.kind = OpKind::mean_entropy;
  n.inputs = {logits};
  n.value = Tensor::scalar(total / static_cast<double>(z.rows()));
  n.aux = std::move(row_entropy);
  return push(std::move(n));
}

NodeId Tape::grl(NodeId a, double scale) {
  if (!(scale >= 0.0) || !std::isfinite(scale)) {
    throw std::invalid_argument("grl: scale must be finite and non-negative");
  }
  Node n;
  n.kind = OpKind::grl;
  n.inputs = {a};
  n.value = value(a);
  n.factor = scale;
  return push(std::move(n));
}

namespace {

void accumulate_broadcast(Tensor& grad, const Tensor& upstream, double sign) {
  if (grad.size() == upstream.size()) {
    for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += sign * upstream[i];
    return;
  }
  const std::size_t width = grad.size();
  for (std::size_t i = 0; i < upstream.size(); ++i) grad[i % width] += sign * upstream[i];
}

}  // namespace

Gradients Tape::backward(NodeId loss) const {
  const Node& root = node(loss);
  if (root.value.size() != 1) {
    throw ShapeError("backward: loss must be scalar, got shape " +
                     shape_to_string(root.value.shape()));
  }
  std::vector<Tensor> grads;
  grads.reserve(nodes_.size());
  for (const Node& n : nodes_) grads.emplace_back(n.value.shape(), 0.0);
  grads[loss.index][0] = 1.0;

  for (std::size_t idx = loss.index + 1; idx-- > 0;) {
    const Node& n = nodes_[idx];
    if (n.kind == OpKind::leaf) continue;
    const Tensor& up = grads[idx];
    switch (n.kind) {
      case OpKind::leaf: break;
      case OpKind::matmul: {
        const Tensor& x = nodes_[n.inputs[0].index].value;
        const Tensor& y = nodes_[n.inputs[1].index].value;
        Tensor& gx = grads[n.inputs[0].index];
        Tensor& gy = grads[n.inputs[1].index];
        const std::size_t rows = x.shape()[0], inner = x.shape()[1], cols = y.shape()[1];
        for (std::size_t i = 0; i < rows; ++i) {
          for (std::size_t k = 0; k < inner; ++k) {
            double acc = 0.0;
            const double xik = x[i * inner + k];
            for (std::size_t j = 0; j < cols; ++j) {
              const double u = up[i * cols + j];
              acc += u * y[k * cols + j];
              gy[k * cols + j] += xik * u;
            }
            gx[i * inner + k] += acc;
          }
        }
        break;
      }
      case OpKind::add:
      case OpKind::sub: {
        accumulate_broadcast(grads[n.inputs[0].index], up, 1.0);
        accumulate_broadcast(grads[n.inputs[1].index], up,
                             n.kind == OpKind::add ? 1.0 : -1.0);
        break;
      }
      case OpKind::mul: {
        const Tensor& x = nodes_[n.inputs[0].index].value;
        const Tensor& y = nodes_[n.inputs[1].index].value;
        Tensor& gx = grads[n.inputs[0].index];
        Tensor& gy = grads[n.inputs[1].index];
        const std::size_t width = y.size();
        for (std::size_t i = 0; i < x.size(); ++i) {
          gx[i] += up[i] * y[i % width];
          gy[i % width] += up[i] * x[i];
        }
        break;
      }
      case OpKind::scale: {
        Tensor& gx = grads[n.inputs[0].index];
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += n.factor * up[i];
        break;
      }
      case OpKind::relu: {
        const Tensor& x = nodes_[n.inputs[0].index].value;
        Tensor& gx = grads[n.inputs[0].index];
        for (std::size_t i = 0; i < gx.size(); ++i) {
          if (x[i] > 0.0) gx[i] += up[i];
        }
        break;
      }
      case OpKind::tanh: {
        Tensor& gx = grads[n.inputs[0].index];
        for (std::size_t i = 0; i < gx.size(); ++i) {
          const double y = n.value[i];
          gx[i] += up[i] * (1.0 - y * y);
        }
        break;
      }
      case OpKind::sum: {
        Tensor& gx = grads[n.inputs[0].index];
        for (double& g : gx.data()) g += up[0];
        break;
      }
      case OpKind::mean: {
        Tensor& gx = grads[n.inputs[0].index];
        const double g0 = up[0] / static_cast<double>(gx.size());
        for (double& g : gx.data()) g += g0;
        break;
      }
      case OpKind::softmax: {
        Tensor& gx = grads[n.inputs[0].index];
        for (std::size_t r = 0; r < n.value.rows(); ++r) {
          auto p = n.value.row(r);
          auto u = up.row(r);
          auto g = gx.row(r);
          double dot = 0.0;
          for (std::size_t c = 0; c < p.size(); ++c) dot += u[c] * p[c];
          for (std::size_t c = 0; c < p.size(); ++c) g[c] += p[c] * (u[c] - dot);
        }
        break;
      }
      case OpKind::log_softmax: {
        Tensor& gx = grads[n.inputs[0].index];
        for (std::size_t r = 0; r < n.value.rows(); ++r) {
          auto logp = n.value.row(r);
          auto u = up.row(r);
          auto g = gx.row(r);
          double total = 0.0;
          for (double v : u) total += v;
          for (std::size_t c = 0; c < logp.size(); ++c) g[c] += u[c] - std::exp(logp[c]) * total;
        }
        break;
      }
      case OpKind::soft_cross_entropy: {
        const Tensor& z = nodes_[n.inputs[0].index].value;
        Tensor& gz = grads[n.inputs[0].index];
        const Tensor p = softmax_rows(z);
        for (std::size_t r = 0; r < z.rows(); ++r) {
          auto t = n.aux.row(r);
          double mass = 0.0;
          for (double v : t) mass += v;
          const double w = up[0] * n.weights[r] / n.factor;
          auto pr = p.row(r);
          auto g = gz.row(r);
          for (std::size_t c = 0; c < pr.size(); ++c) g[c] += w * (pr[c] * mass - t[c]);
        }
        break;
      }
      case OpKind::mse: {
        const Tensor& x = nodes_[n.inputs[0].index].value;
        Tensor& gx = grads[n.inputs[0].index];
        const double k = 2.0 * up[0] / static_cast<double>(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) gx[i] += k * (x[i] - n.aux[i]);
        break;
      }
      case OpKind::mean_entropy: {
        const Tensor& z = nodes_[n.inputs[0].index].value;
        Tensor& gz = grads[n.inputs[0].index];
        const double k = up[0] / static_cast<double>(z.rows());
        for (std::size_t r = 0; r < z.rows(); ++r) {
          const double lse = row_logsumexp(z.row(r));
          auto in = z.row(r);
          auto g = gz.row(r);
          const double h = n.aux[r];
          for (std::size_t c = 0; c < in.size(); ++c) {
            const double logp = in[c] - lse;
            g[c] -= k * std::exp(logp) * (logp + h);
          }
        }
        break;
      }
      case OpKind::grl: {
        Tensor& gx = grads[n.inputs[0].index];
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] -= n.factor * up[i];
        break;
      }
    }
  }
  return Gradients(std::move(grads));
}

}  // namespace dalign
