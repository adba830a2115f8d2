#include "kkthpinn/network.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

#include "kkthpinn/error.hpp"

namespace kkthpinn {

std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
  }
  return "unknown";
}

Activation parse_activation(std::string_view name) {
  if (name == "relu") return Activation::relu;
  if (name == "tanh") return Activation::tanh;
  throw ConfigError("unknown activation '" + std::string(name) + "' (expected relu or tanh)");
}

std::size_t Mlp::num_parameters() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l < weights.size(); ++l) n += weights[l].size() + biases[l].size();
  return n;
}

Gradients Gradients::zeros_like(const Mlp& net) {
  Gradients g;
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    g.weights.emplace_back(net.weights[l].rows(), net.weights[l].cols());
    g.biases.emplace_back(net.biases[l].size(), 0.0);
  }
  return g;
}

bool Gradients::all_finite() const noexcept {
  for (const auto& w : weights)
    if (!w.all_finite()) return false;
  for (const auto& b : biases)
    for (double v : b)
      if (!std::isfinite(v)) return false;
  return true;
}

Mlp init_mlp(const std::vector<std::size_t>& layer_dims, Activation activation,
             std::uint64_t seed) {
  if (layer_dims.size() < 2) {
    throw ConfigError("init_mlp: need at least input and output dimensions");
  }
  for (std::size_t d : layer_dims)
    if (d == 0) throw ConfigError("init_mlp: layer dimensions must be positive");

  Mlp net;
  net.layer_dims = layer_dims;
  net.activation = activation;
  std::mt19937_64 rng(seed);
  for (std::size_t l = 0; l + 1 < layer_dims.size(); ++l) {
    const std::size_t fan_in = layer_dims[l];
    const std::size_t fan_out = layer_dims[l + 1];
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Mat w(fan_out, fan_in);
    for (double& v : w.data()) v = dist(rng);
    net.weights.push_back(std::move(w));
    net.biases.emplace_back(fan_out, 0.0);
  }
  return net;
}

namespace {

double activate(Activation a, double z) {
  return a == Activation::relu ? (z > 0.0 ? z : 0.0) : std::tanh(z);
}

// Derivative expressed through the pre-activation z and the activation value h.
double activate_grad(Activation a, double z, double h) {
  return a == Activation::relu ? (z > 0.0 ? 1.0 : 0.0) : 1.0 - h * h;
}

}  // namespace

Mat forward(const Mlp& net, const Mat& x_batch, ForwardTrace* trace) {
  if (x_batch.cols() != net.input_dim()) {
    throw ShapeError("forward: input has " + std::to_string(x_batch.cols()) +
                     " columns, network expects " + std::to_string(net.input_dim()));
  }
  if (!x_batch.all_finite()) throw DataError("forward: non-finite input");

  if (trace) {
    trace->pre_activations.clear();
    trace->post_activations.clear();
    trace->post_activations.push_back(x_batch);
  }

  Mat h = x_batch;
  const std::size_t layers = net.num_layers();
  for (std::size_t l = 0; l < layers; ++l) {
    const Mat& w = net.weights[l];
    const Vec& bias = net.biases[l];
    Mat z(h.rows(), w.rows());
    for (std::size_t n = 0; n < h.rows(); ++n) {
      auto in = h.row(n);
      auto out = z.row(n);
      for (std::size_t j = 0; j < w.rows(); ++j) {
        auto wj = w.row(j);
        double s = bias[j];
        for (std::size_t k = 0; k < wj.size(); ++k) s += wj[k] * in[k];
        out[j] = s;
      }
    }
    const bool is_output = l + 1 == layers;
    Mat a = z;
    if (!is_output) {
      for (double& v : a.data()) v = activate(net.activation, v);
    }
    if (trace) {
      trace->pre_activations.push_back(std::move(z));
      trace->post_activations.push_back(a);
    }
    h = std::move(a);
  }
  return h;
}

Gradients backward(const Mlp& net, const ForwardTrace& trace, const Mat& grad_output) {
  const std::size_t layers = net.num_layers();
  if (trace.pre_activations.size() != layers || trace.post_activations.size() != layers + 1) {
    throw ShapeError("backward: trace does not match network depth");
  }
  const std::size_t batch = trace.post_activations.front().rows();
  if (grad_output.rows() != batch || grad_output.cols() != net.output_dim()) {
    throw ShapeError("backward: upstream gradient is " + std::to_string(grad_output.rows()) + "x" +
                     std::to_string(grad_output.cols()) + ", expected " + std::to_string(batch) +
                     "x" + std::to_string(net.output_dim()));
  }

  Gradients g = Gradients::zeros_like(net);
  Mat delta = grad_output;  // d(loss)/d(pre-activation) of the current layer
  for (std::size_t l = layers; l-- > 0;) {
    const Mat& w = net.weights[l];
    const Mat& input = trace.post_activations[l];
    Mat& gw = g.weights[l];
    Vec& gb = g.biases[l];
    for (std::size_t n = 0; n < batch; ++n) {
      auto dn = delta.row(n);
      auto in = input.row(n);
      for (std::size_t j = 0; j < w.rows(); ++j) {
        const double d = dn[j];
        gb[j] += d;
        if (d == 0.0) continue;
        auto gwj = gw.row(j);
        for (std::size_t k = 0; k < in.size(); ++k) gwj[k] += d * in[k];
      }
    }
    if (l == 0) break;

    const Mat& z_prev = trace.pre_activations[l - 1];
    const Mat& h_prev = trace.post_activations[l];
    Mat next(batch, w.cols());
    for (std::size_t n = 0; n < batch; ++n) {
      auto dn = delta.row(n);
      auto out = next.row(n);
      for (std::size_t j = 0; j < w.rows(); ++j) {
        const double d = dn[j];
        if (d == 0.0) continue;
        auto wj = w.row(j);
        for (std::size_t k = 0; k < wj.size(); ++k) out[k] += d * wj[k];
      }
      auto zp = z_prev.row(n);
      auto hp = h_prev.row(n);
      for (std::size_t k = 0; k < out.size(); ++k) {
        out[k] *= activate_grad(net.activation, zp[k], hp[k]);
      }
    }
    delta = std::move(next);
  }
  return g;
}

std::uint64_t parameter_checksum(const Mlp& net) {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](double v) {
    std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) {
      h ^= (bits >> (8 * i)) & 0xffu;
      h *= 1099511628211ull;
    }
  };
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    for (double v : net.weights[l].data()) mix(v);
    for (double v : net.biases[l]) mix(v);
  }
  return h;
}

AdamState::AdamState(const Mlp& net, Options options)
    : options_(options), m_(Gradients::zeros_like(net)), v_(Gradients::zeros_like(net)) {
  if (!(options_.learning_rate > 0.0)) throw ConfigError("Adam: learning rate must be positive");
}

void AdamState::step(Mlp& net, const Gradients& grads) {
  if (grads.weights.size() != net.num_layers() || grads.biases.size() != net.num_layers()) {
    throw ShapeError("Adam: gradient layer count does not match network");
  }
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    if (grads.weights[l].rows() != net.weights[l].rows() ||
        grads.weights[l].cols() != net.weights[l].cols() ||
        grads.biases[l].size() != net.biases[l].size()) {
      throw ShapeError("Adam: gradient shape mismatch at layer " + std::to_string(l));
    }
  }
  if (!grads.all_finite()) throw TrainingError("Adam: non-finite gradient");

  ++step_;
  const double b1 = options_.beta1;
  const double b2 = options_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  const double lr = options_.learning_rate;
  const double eps = options_.epsilon;

  auto update = [&](std::span<double> param, std::span<const double> g, std::span<double> m,
                    std::span<double> v) {
    for (std::size_t i = 0; i < param.size(); ++i) {
      m[i] = b1 * m[i] + (1.0 - b1) * g[i];
      v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      param[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
    }
  };
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    update(net.weights[l].data(), grads.weights[l].data(), m_.weights[l].data(),
           v_.weights[l].data());
    update(net.biases[l], grads.biases[l], m_.biases[l], v_.biases[l]);
  }
}

namespace {

constexpr std::string_view kCheckpointMagic = "kkthpinn-mlp";
constexpr int kCheckpointVersion = 1;

std::string hexf(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%a", v);
  return buf;
}

double parse_double(const std::string& tok, const std::string& where) {
  char* end = nullptr;
  const double v = std::strtod(tok.c_str(), &end);
  if (end == tok.c_str() || *end != '\0') throw ParseError(where + ": bad number '" + tok + "'");
  return v;
}

}  // namespace

void write_checkpoint(const std::filesystem::path& path, const Mlp& net) {
  std::ofstream out(path);
  if (!out) throw PathError("cannot write checkpoint " + path.string());
  out << kCheckpointMagic << ' ' << kCheckpointVersion << '\n';
  out << "activation " << to_string(net.activation) << '\n';
  out << "layers";
  for (std::size_t d : net.layer_dims) out << ' ' << d;
  out << '\n';
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    const Mat& w = net.weights[l];
    out << "weights " << l << ' ' << w.rows() << ' ' << w.cols() << '\n';
    for (std::size_t i = 0; i < w.rows(); ++i) {
      for (std::size_t j = 0; j < w.cols(); ++j) out << (j ? " " : "") << hexf(w(i, j));
      out << '\n';
    }
    out << "biases " << l << ' ' << net.biases[l].size() << '\n';
    for (std::size_t j = 0; j < net.biases[l].size(); ++j)
      out << (j ? " " : "") << hexf(net.biases[l][j]);
    out << '\n';
  }
  if (!out) throw PathError("failed writing checkpoint " + path.string());
}

Mlp read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw PathError("cannot open checkpoint " + path.string());
  const std::string where = "checkpoint " + path.string();

  std::string magic, key, name;
  int version = 0;
  if (!(in >> magic >> version) || magic != kCheckpointMagic) {
    throw ParseError(where + ": not a network checkpoint");
  }
  if (version != kCheckpointVersion) {
    throw ParseError(where + ": unsupported version " + std::to_string(version));
  }
  if (!(in >> key >> name) || key != "activation") throw ParseError(where + ": missing activation");
  const Activation act = parse_activation(name);

  std::string line;
  std::getline(in, line);
  if (!std::getline(in, line)) throw ParseError(where + ": missing layers");
  std::istringstream ls(line);
  std::vector<std::size_t> dims;
  if (!(ls >> key) || key != "layers") throw ParseError(where + ": missing layers");
  for (std::size_t d; ls >> d;) dims.push_back(d);
  if (dims.size() < 2) throw ParseError(where + ": need at least two layer dimensions");

  Mlp net = init_mlp(dims, act, 0);
  std::string tok;
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    std::size_t idx = 0, rows = 0, cols = 0;
    if (!(in >> key >> idx >> rows >> cols) || key != "weights" || idx != l ||
        rows != dims[l + 1] || cols != dims[l]) {
      throw ParseError(where + ": bad weights header for layer " + std::to_string(l));
    }
    for (double& v : net.weights[l].data()) {
      if (!(in >> tok)) throw ParseError(where + ": truncated weights");
      v = parse_double(tok, where);
    }
    std::size_t n = 0;
    if (!(in >> key >> idx >> n) || key != "biases" || idx != l || n != dims[l + 1]) {
      throw ParseError(where + ": bad biases header for layer " + std::to_string(l));
    }
    for (double& v : net.biases[l]) {
      if (!(in >> tok)) throw ParseError(where + ": truncated biases");
      v = parse_double(tok, where);
    }
  }
  return net;
}

}  // namespace kkthpinn
