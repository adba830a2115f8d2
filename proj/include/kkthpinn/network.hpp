#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "kkthpinn/linalg.hpp"

namespace kkthpinn {

enum class Activation { relu, tanh };

std::string_view to_string(Activation a);
Activation parse_activation(std::string_view name);

/// Fully connected network: activated hidden layers, linear output layer.
/// weights[l] is N_{l+1} x N_l, biases[l] has N_{l+1} entries.
struct Mlp {
  std::vector<std::size_t> layer_dims;
  Activation activation = Activation::relu;
  std::vector<Mat> weights;
  std::vector<Vec> biases;

  std::size_t num_layers() const noexcept { return weights.size(); }
  std::size_t input_dim() const { return layer_dims.front(); }
  std::size_t output_dim() const { return layer_dims.back(); }
  std::size_t num_parameters() const;

  friend bool operator==(const Mlp&, const Mlp&) = default;
};

/// Same layout as the parameters of an Mlp.
struct Gradients {
  std::vector<Mat> weights;
  std::vector<Vec> biases;

  static Gradients zeros_like(const Mlp& net);
  bool all_finite() const noexcept;
};

/// Per-layer values cached by forward() for backward(). Rows are samples.
struct ForwardTrace {
  std::vector<Mat> pre_activations;   // L entries, one per layer output
  std::vector<Mat> post_activations;  // L+1 entries, [0] is the input batch
};

/// Glorot-uniform weights, zero biases. Identical seeds give identical parameters.
Mlp init_mlp(const std::vector<std::size_t>& layer_dims, Activation activation, std::uint64_t seed);

/// Output batch (rows are samples) and the trace needed for backward().
Mat forward(const Mlp& net, const Mat& x_batch, ForwardTrace* trace = nullptr);

/// Backpropagates d(loss)/d(output) through a traced forward pass.
Gradients backward(const Mlp& net, const ForwardTrace& trace, const Mat& grad_output);

/// FNV-1a digest over the bit patterns of every parameter.
std::uint64_t parameter_checksum(const Mlp& net);

class AdamState {
 public:
  struct Options {
    double learning_rate = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
  };

  AdamState(const Mlp& net, Options options);
  explicit AdamState(const Mlp& net) : AdamState(net, Options{}) {}

  /// Bias-corrected Adam update in place. Throws TrainingError on non-finite gradients.
  void step(Mlp& net, const Gradients& grads);

  std::uint64_t steps() const noexcept { return step_; }
  const Options& options() const noexcept { return options_; }

 private:
  Options options_;
  Gradients m_;
  Gradients v_;
  std::uint64_t step_ = 0;
};

/// Text checkpoint with hexadecimal floating point, so a round trip is bit-exact.
void write_checkpoint(const std::filesystem::path& path, const Mlp& net);
Mlp read_checkpoint(const std::filesystem::path& path);

}  // namespace kkthpinn
