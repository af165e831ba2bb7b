#include "dalign/nn.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace dalign {

const char* activation_name(Activation act) {
  return act == Activation::relu ? "relu" : "tanh";
}

Activation parse_activation(std::string_view name) {
  if (name == "relu") return Activation::relu;
  if (name == "tanh") return Activation::tanh;
  throw std::invalid_argument("unknown activation '" + std::string(name) + "'");
}

void Mlp::validate() const {
  if (widths.size() < 2) throw std::invalid_argument("mlp needs at least two widths");
  for (std::size_t w : widths) {
    if (w == 0) throw std::invalid_argument("mlp widths must be positive");
  }
  if (weights.size() != widths.size() - 1 || biases.size() != weights.size()) {
    throw std::invalid_argument("mlp parameter count does not match widths");
  }
  for (std::size_t l = 0; l < weights.size(); ++l) {
    if (weights[l].shape() != Shape{widths[l], widths[l + 1]} ||
        biases[l].shape() != Shape{widths[l + 1]}) {
      throw ShapeError("mlp layer " + std::to_string(l) + " has shapes " +
                       shape_to_string(weights[l].shape()) + "/" +
                       shape_to_string(biases[l].shape()));
    }
  }
}

Mlp make_mlp(std::vector<std::size_t> widths, Activation activation, bool activate_output,
             Rng& rng) {
  Mlp mlp;
  mlp.widths = std::move(widths);
  mlp.activation = activation;
  mlp.activate_output = activate_output;
  if (mlp.widths.size() < 2) throw std::invalid_argument("mlp needs at least two widths");
  for (std::size_t w : mlp.widths) {
    if (w == 0) throw std::invalid_argument("mlp widths must be positive");
  }
  for (std::size_t l = 0; l + 1 < mlp.widths.size(); ++l) {
    const std::size_t fan_in = mlp.widths[l], fan_out = mlp.widths[l + 1];
    const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Tensor w(Shape{fan_in, fan_out});
    for (double& v : w.data()) v = rng.uniform(-a, a);
    mlp.weights.push_back(std::move(w));
    mlp.biases.emplace_back(Shape{fan_out}, 0.0);
  }
  return mlp;
}

MlpNodes bind_parameters(Tape& tape, const Mlp& mlp) {
  MlpNodes nodes;
  for (std::size_t l = 0; l < mlp.layer_count(); ++l) {
    nodes.weights.push_back(tape.leaf(mlp.weights[l]));
    nodes.biases.push_back(tape.leaf(mlp.biases[l]));
  }
  return nodes;
}

NodeId mlp_forward(Tape& tape, const Mlp& mlp, const MlpNodes& params, NodeId input) {
  const Tensor& x = tape.value(input);
  if (x.rank() != 2 || x.cols() != mlp.input_width()) {
    throw ShapeError("mlp expects [batch, " + std::to_string(mlp.input_width()) +
                     "] input, got " + shape_to_string(x.shape()));
  }
  NodeId h = input;
  for (std::size_t l = 0; l < mlp.layer_count(); ++l) {
    h = tape.add(tape.matmul(h, params.weights[l]), params.biases[l]);
    const bool last = l + 1 == mlp.layer_count();
    if (!last || mlp.activate_output) {
      h = mlp.activation == Activation::relu ? tape.relu(h) : tape.tanh(h);
    }
  }
  return h;
}

AdaNetwork::AdaNetwork(Mlp g, Mlp f, Mlp h, double grl_scale)
    : g_(std::move(g)), f_(std::move(f)), h_(std::move(h)), grl_scale_(0.0) {
  g_.validate();
  f_.validate();
  h_.validate();
  if (f_.input_width() != g_.output_width() || h_.input_width() != g_.output_width()) {
    throw ShapeError("class predictor input " + std::to_string(f_.input_width()) +
                     " / discriminator input " + std::to_string(h_.input_width()) +
                     " must equal feature width " + std::to_string(g_.output_width()));
  }
  if (h_.output_width() != 2) throw ShapeError("domain discriminator must output 2 logits");
  set_grl_scale(grl_scale);
}

void AdaNetwork::set_grl_scale(double scale) {
  if (!(scale >= 0.0) || !std::isfinite(scale)) {
    throw std::invalid_argument("grl scale must be finite and non-negative");
  }
  grl_scale_ = scale;
}

std::vector<std::string> AdaNetwork::parameter_names() const {
  std::vector<std::string> names;
  const std::array<std::pair<const char*, const Mlp*>, 3> parts{
      {{"g", &g_}, {"f", &f_}, {"h", &h_}}};
  for (const auto& [prefix, mlp] : parts) {
    for (std::size_t l = 0; l < mlp->layer_count(); ++l) {
      names.push_back(std::string(prefix) + ".w" + std::to_string(l));
      names.push_back(std::string(prefix) + ".b" + std::to_string(l));
    }
  }
  return names;
}

std::vector<const Tensor*> AdaNetwork::parameters() const {
  std::vector<const Tensor*> out;
  for (const Mlp* mlp : {&g_, &f_, &h_}) {
    for (std::size_t l = 0; l < mlp->layer_count(); ++l) {
      out.push_back(&mlp->weights[l]);
      out.push_back(&mlp->biases[l]);
    }
  }
  return out;
}

std::vector<Tensor*> AdaNetwork::parameters() {
  std::vector<Tensor*> out;
  for (Mlp* mlp : {&g_, &f_, &h_}) {
    for (std::size_t l = 0; l < mlp->layer_count(); ++l) {
      out.push_back(&mlp->weights[l]);
      out.push_back(&mlp->biases[l]);
    }
  }
  return out;
}

AdaNetwork init_network(const NetworkSpec& spec) {
  if (spec.feature_widths.size() < 2) {
    throw std::invalid_argument("feature extractor needs input and output widths");
  }
  if (spec.class_count < 2) throw std::invalid_argument("need at least two classes");
  Rng rng = Rng(spec.seed).stream("init");
  Mlp g = make_mlp(spec.feature_widths, spec.activation, true, rng);
  Mlp f = make_mlp({g.output_width(), spec.class_count}, spec.activation, false, rng);
  std::vector<std::size_t> h_widths{g.output_width()};
  h_widths.insert(h_widths.end(), spec.discriminator_hidden.begin(),
                  spec.discriminator_hidden.end());
  h_widths.push_back(2);
  Mlp h = make_mlp(std::move(h_widths), Activation::relu, false, rng);
  return AdaNetwork(std::move(g), std::move(f), std::move(h), spec.grl_scale);
}

std::vector<NodeId> NetworkNodes::flat() const {
  std::vector<NodeId> out;
  for (const MlpNodes* m : {&g, &f, &h}) {
    for (std::size_t l = 0; l < m->weights.size(); ++l) {
      out.push_back(m->weights[l]);
      out.push_back(m->biases[l]);
    }
  }
  return out;
}

NetworkNodes bind_parameters(Tape& tape, const AdaNetwork& net) {
  return NetworkNodes{bind_parameters(tape, net.g()), bind_parameters(tape, net.f()),
                      bind_parameters(tape, net.h())};
}

ForwardPass forward_all(Tape& tape, const AdaNetwork& net, const NetworkNodes& params,
                        NodeId batch) {
  ForwardPass pass;
  pass.features = mlp_forward(tape, net.g(), params.g, batch);
  pass.class_logits = mlp_forward(tape, net.f(), params.f, pass.features);
  const NodeId reversed = tape.grl(pass.features, net.grl_scale());
  pass.domain_logits = mlp_forward(tape, net.h(), params.h, reversed);
  return pass;
}

Tensor class_logits(const AdaNetwork& net, const Tensor& batch) {
  Tape tape;
  const MlpNodes g = bind_parameters(tape, net.g());
  const MlpNodes f = bind_parameters(tape, net.f());
  const NodeId x = tape.leaf(batch);
  return tape.value(mlp_forward(tape, net.f(), f, mlp_forward(tape, net.g(), g, x)));
}

Tensor extract_features(const AdaNetwork& net, const Tensor& batch) {
  Tape tape;
  const MlpNodes g = bind_parameters(tape, net.g());
  const NodeId x = tape.leaf(batch);
  return tape.value(mlp_forward(tape, net.g(), g, x));
}

std::vector<Tensor> gather_gradients(const Gradients& grads, const NetworkNodes& nodes) {
  std::vector<Tensor> out;
  for (NodeId id : nodes.flat()) out.push_back(grads[id]);
  return out;
}

AdamState make_adam(const AdaNetwork& net, double learning_rate) {
  AdamState state;
  state.learning_rate = learning_rate;
  for (const Tensor* p : net.parameters()) {
    state.first_moment.push_back(Tensor::zeros_like(*p));
    state.second_moment.push_back(Tensor::zeros_like(*p));
  }
  return state;
}

void adam_step(AdamState& state, std::span<Tensor* const> params,
               std::span<const Tensor> grads, std::span<const std::string> names) {
  if (params.size() != grads.size() || params.size() != state.first_moment.size()) {
    throw ShapeError("adam_step: " + std::to_string(params.size()) + " parameters, " +
                     std::to_string(grads.size()) + " gradients, " +
                     std::to_string(state.first_moment.size()) + " moment slots");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const std::string label = i < names.size() ? names[i] : "#" + std::to_string(i);
    if (params[i]->shape() != grads[i].shape()) {
      throw ShapeError("adam_step: parameter " + label + " shape " +
                       shape_to_string(params[i]->shape()) + " vs gradient " +
                       shape_to_string(grads[i].shape()));
    }
    if (!grads[i].all_finite()) {
      throw std::runtime_error("adam_step: non-finite gradient for parameter " + label);
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    Tensor& m = state.first_moment[i];
    Tensor& v = state.second_moment[i];
    const Tensor& g = grads[i];
    for (std::size_t k = 0; k < p.size(); ++k) {
      m[k] = state.beta1 * m[k] + (1.0 - state.beta1) * g[k];
      v[k] = state.beta2 * v[k] + (1.0 - state.beta2) * g[k] * g[k];
      const double m_hat = m[k] / c1;
      const double v_hat = v[k] / c2;
      p[k] -= state.learning_rate * m_hat / (std::sqrt(v_hat) + state.epsilon);
    }
  }
}

void ema_update(AdaNetwork& teacher, const AdaNetwork& student, double decay) {
  if (!(decay >= 0.0 && decay < 1.0)) throw std::invalid_argument("ema decay must be in [0,1)");
  auto dst = teacher.parameters();
  auto src = student.parameters();
  if (dst.size() != src.size()) throw ShapeError("ema_update: architectures differ");
  for (std::size_t i = 0; i < dst.size(); ++i) {
    if (dst[i]->shape() != src[i]->shape()) throw ShapeError("ema_update: architectures differ");
    for (std::size_t k = 0; k < dst[i]->size(); ++k) {
      (*dst[i])[k] = decay * (*dst[i])[k] + (1.0 - decay) * (*src[i])[k];
    }
  }
}

// ---- checkpoint ----

namespace {

constexpr char kMagic[8] = {'D', 'A', 'L', 'I', 'G', 'N', 'C', 'K'};

void put_u32(std::ostream& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.put(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_u64(std::ostream& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.put(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_bytes(std::istream& in, int count) {
  std::uint64_t v = 0;
  for (int i = 0; i < count; ++i) {
    const int c = in.get();
    if (c == std::char_traits<char>::eof()) throw std::runtime_error("checkpoint truncated");
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(c)) << (8 * i);
  }
  return v;
}
std::uint32_t get_u32(std::istream& in) { return static_cast<std::uint32_t>(get_bytes(in, 4)); }
std::uint64_t get_u64(std::istream& in) { return get_bytes(in, 8); }

std::string get_string(std::istream& in, std::uint32_t length) {
  std::string s(length, '\0');
  in.read(s.data(), length);
  if (!in) throw std::runtime_error("checkpoint truncated");
  return s;
}

std::string join_widths(const std::vector<std::size_t>& widths) {
  std::string out;
  for (std::size_t i = 0; i < widths.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(widths[i]);
  }
  return out;
}

std::vector<std::size_t> split_widths(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(std::stoul(item));
  return out;
}

void append_mlp_meta(std::ostringstream& meta, const char* prefix, const Mlp& mlp) {
  meta << prefix << ".widths=" << join_widths(mlp.widths) << '\n'
       << prefix << ".activation=" << activation_name(mlp.activation) << '\n'
       << prefix << ".activate_output=" << (mlp.activate_output ? 1 : 0) << '\n';
}

Mlp mlp_from_meta(const std::map<std::string, std::string>& meta, const std::string& prefix) {
  auto get = [&](const std::string& key) {
    auto it = meta.find(prefix + "." + key);
    if (it == meta.end()) throw std::runtime_error("checkpoint metadata missing " + prefix + "." + key);
    return it->second;
  };
  Mlp mlp;
  mlp.widths = split_widths(get("widths"));
  mlp.activation = parse_activation(get("activation"));
  mlp.activate_output = get("activate_output") == "1";
  return mlp;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const AdaNetwork& net) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open checkpoint for writing: " + path.string());
  std::ostringstream meta;
  append_mlp_meta(meta, "g", net.g());
  append_mlp_meta(meta, "f", net.f());
  append_mlp_meta(meta, "h", net.h());
  char grl[64];
  std::snprintf(grl, sizeof grl, "%.17g", net.grl_scale());
  meta << "grl_scale=" << grl << '\n';
  const std::string meta_text = meta.str();

  out.write(kMagic, sizeof kMagic);
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(meta_text.size()));
  out.write(meta_text.data(), static_cast<std::streamsize>(meta_text.size()));

  const auto names = net.parameter_names();
  const auto params = net.parameters();
  put_u32(out, static_cast<std::uint32_t>(params.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    put_u32(out, static_cast<std::uint32_t>(names[i].size()));
    out.write(names[i].data(), static_cast<std::streamsize>(names[i].size()));
    put_u32(out, static_cast<std::uint32_t>(params[i]->rank()));
    for (std::size_t d : params[i]->shape()) put_u64(out, d);
    for (double v : params[i]->data()) put_u64(out, std::bit_cast<std::uint64_t>(v));
  }
  if (!out) throw std::runtime_error("failed writing checkpoint: " + path.string());
}

AdaNetwork load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path.string());
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof magic) != 0) {
    throw std::runtime_error("not a checkpoint file: " + path.string());
  }
  const std::uint32_t version = get_u32(in);
  if (version != kCheckpointVersion) {
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
  }
  const std::string meta_text = get_string(in, get_u32(in));
  std::map<std::string, std::string> meta;
  std::istringstream lines(meta_text);
  for (std::string line; std::getline(lines, line);) {
    const auto eq = line.find('=');
    if (eq != std::string::npos) meta[line.substr(0, eq)] = line.substr(eq + 1);
  }
  Mlp parts[3] = {mlp_from_meta(meta, "g"), mlp_from_meta(meta, "f"), mlp_from_meta(meta, "h")};

  std::map<std::string, Tensor> tensors;
  const std::uint32_t count = get_u32(in);
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = get_string(in, get_u32(in));
    const std::uint32_t rank = get_u32(in);
    Shape shape(rank);
    for (auto& d : shape) d = get_u64(in);
    std::vector<double> data(shape_product(shape));
    for (double& v : data) v = std::bit_cast<double>(get_u64(in));
    tensors.emplace(std::move(name), Tensor(std::move(shape), std::move(data)));
  }
  const char* prefixes[3] = {"g", "f", "h"};
  for (int p = 0; p < 3; ++p) {
    for (std::size_t l = 0; l + 1 < parts[p].widths.size(); ++l) {
      for (const char* kind : {"w", "b"}) {
        const std::string key = std::string(prefixes[p]) + "." + kind + std::to_string(l);
        auto it = tensors.find(key);
        if (it == tensors.end()) throw std::runtime_error("checkpoint missing tensor " + key);
        (kind[0] == 'w' ? parts[p].weights : parts[p].biases).push_back(it->second);
      }
    }
  }
  auto grl = meta.find("grl_scale");
  const double scale = grl == meta.end() ? 1.0 : std::stod(grl->second);
  return AdaNetwork(std::move(parts[0]), std::move(parts[1]), std::move(parts[2]), scale);
}

}  // namespace dalign
