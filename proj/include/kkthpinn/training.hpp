#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "kkthpinn/data.hpp"
#include "kkthpinn/network.hpp"
#include "kkthpinn/projection.hpp"

namespace kkthpinn {

/// SplitMix64 finalizer over (a, b); used to derive independent RNG streams.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

enum class ModeKind { nn, pinn, kkt_hpinn, nn_post };

/// Training regime. PINN carries its penalty weight.
struct TrainMode {
  ModeKind kind = ModeKind::nn;
  double lambda = 1.0;

  static TrainMode nn() { return {ModeKind::nn, 1.0}; }
  static TrainMode pinn(double lambda);
  static TrainMode kkt_hpinn() { return {ModeKind::kkt_hpinn, 1.0}; }
  static TrainMode nn_post() { return {ModeKind::nn_post, 1.0}; }

  std::string tag() const;
  bool needs_constraints() const noexcept { return kind != ModeKind::nn; }
  /// Whether predictions pass through the projection layers at evaluation.
  bool projects() const noexcept {
    return kind == ModeKind::kkt_hpinn || kind == ModeKind::nn_post;
  }
};

TrainMode parse_mode(std::string_view tag, double lambda = 1.0);

struct TrainConfig {
  std::size_t epochs = 1000;
  std::size_t batch_size = 16;
  double learning_rate = 1e-4;
  std::uint64_t seed = 0;
  double validation_fraction = 0.2;

  void validate() const;
};

/// Optional extra soft constraint on the (possibly projected) network output.
/// Returns the per-sample penalty and writes d(penalty)/d(output) into grad.
using SoftPenalty = std::function<double(std::span<const double> x, std::span<const double> y,
                                         std::span<double> grad)>;

struct Partition {
  Mat x;
  Mat y;
  std::size_t size() const noexcept { return x.rows(); }
  bool empty() const noexcept { return x.rows() == 0; }
};

struct Split {
  Partition train;
  Partition validation;
  Partition test;
};

/// Seeded shuffle; `test_fraction` of the rows become the test set and
/// `validation_fraction` of the remainder the validation set.
Split split_dataset(const Dataset& ds, double test_fraction, double validation_fraction,
                    std::uint64_t seed);

struct LossResult {
  double value = 0.0;
  Gradients gradients;
};

/// (1/2N)·Σ‖ŷ − y‖²
LossResult loss_nn(const Mlp& net, const Mat& x, const Mat& y);
/// (1/2N)·Σ(‖ŷ − y‖² + λ‖A·x + B·ŷ − b‖²)
LossResult loss_pinn(const Mlp& net, const Mat& x, const Mat& y, const ConstraintSpec& spec,
                     double lambda);
/// (1/2N)·Σ‖A*·x + B*·ŷ + b* − y‖²; gradients flow back through B*.
LossResult loss_kkt(const Mlp& net, const ProjectionParams& proj, const Mat& x, const Mat& y);

/// Loss of any regime, optionally adding (1/N)·Σ penalty(x, output) on the
/// regime's output (the projected output for KKT-hPINN).
LossResult mode_loss(const Mlp& net, const TrainMode& mode, const ConstraintSpec* spec,
                     const ProjectionParams* proj, const Mat& x, const Mat& y,
                     const SoftPenalty& penalty = {});

/// Network output as seen by the regime: raw, or projected for kkt_hpinn/nn_post.
Mat predict(const Mlp& net, const TrainMode& mode, const ProjectionParams* proj, const Mat& x);

struct Metrics {
  double rmse_overall = 0.0;
  std::optional<double> rmse_constrained;    // absent when no output is constrained
  std::optional<double> rmse_unconstrained;  // absent when every output is constrained
  double mean_violation = 0.0;
  double max_violation = 0.0;
};

/// RMSE is the root of the mean squared error over samples x selected outputs;
/// an output is constrained when its column of B is nonzero.
Metrics evaluate(const Mlp& net, const TrainMode& mode, const Partition& part,
                 const ConstraintSpec& spec);
Metrics evaluate_predictions(const Mat& predictions, const Partition& part,
                             const ConstraintSpec& spec);

struct RunReport {
  std::string mode;
  std::optional<double> lambda;  // pinn only
  std::uint64_t seed = 0;
  TrainConfig config;
  double initial_train_rmse = 0.0;
  std::vector<double> train_rmse;
  std::vector<double> val_rmse;
  std::vector<double> mean_violation;  // validation predictions
  std::vector<double> max_violation;   // all partitions
  std::optional<Metrics> test;
};

struct TrainResult {
  Mlp net;
  RunReport report;
};

/// Shuffled minibatch Adam for `config.epochs` epochs. `spec` must be in the
/// same units as the split; plain nn uses it only for reporting violations.
TrainResult train(Mlp net, const TrainMode& mode, const Split& split,
                  const ConstraintSpec& spec, const TrainConfig& config,
                  const SoftPenalty& penalty = {});

nlohmann::ordered_json metrics_to_json(const Metrics& m);
nlohmann::ordered_json report_summary_json(const RunReport& r);
/// epoch,train_rmse,val_rmse,mean_violation
void write_report_csv(const std::filesystem::path& path, const RunReport& r);

}  // namespace kkthpinn
