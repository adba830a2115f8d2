#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "kkthpinn/data.hpp"
#include "kkthpinn/network.hpp"
#include "kkthpinn/training.hpp"

namespace kkthpinn {

struct ExperimentConfig {
  Task task = Task::cstr;
  std::optional<std::filesystem::path> data;  // load instead of generating
  std::size_t n_samples = 0;                  // 0: task default
  std::uint64_t data_seed = 7;
  double noise_std = 0.0;

  std::vector<TrainMode> modes = {TrainMode::nn(), TrainMode::pinn(1.0), TrainMode::nn_post(),
                                  TrainMode::kkt_hpinn()};
  std::size_t n_repeats = 10;
  std::vector<double> holdout_fractions = {0.2, 0.3, 0.4};
  TrainConfig train;  // train.seed is the base seed of the whole experiment
  Activation activation = Activation::relu;
  std::size_t hidden_width = 0;   // 0: task default
  std::size_t hidden_layers = 0;  // 0: task default

  std::filesystem::path output_dir;  // empty: nothing is written
  std::size_t jobs = 1;

  void validate() const;
};

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation, 0 for a single value
};

/// Mean and n−1 standard deviation.
MeanStd mean_std(std::span<const double> values);

/// Seed for one training run; distinct for every (mode, fraction, repeat).
std::uint64_t run_seed(std::uint64_t base, std::size_t mode_index, std::size_t fraction_index,
                       std::size_t repeat);
/// Seed of the data split, shared by all modes of a (fraction, repeat) cell.
std::uint64_t split_seed(std::uint64_t base, std::size_t fraction_index, std::size_t repeat);

struct RunRecord {
  std::string mode;
  double fraction = 0.0;
  std::size_t repeat = 0;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  Metrics test;
  std::optional<RunReport> report;
};

struct CellSummary {
  std::string mode;
  double fraction = 0.0;
  std::size_t runs = 0;
  std::size_t failed = 0;
  MeanStd rmse_overall;
  std::optional<MeanStd> rmse_constrained;
  std::optional<MeanStd> rmse_unconstrained;
  MeanStd mean_violation;
  /// (rmse_nn − rmse_mode)/rmse_nn; absent for pinn or without an nn baseline.
  std::optional<double> improvement_overall;
  std::optional<double> improvement_constrained;
  std::optional<double> improvement_unconstrained;
  std::vector<std::string> errors;

  bool complete() const noexcept { return failed == 0; }
};

struct SummaryTable {
  std::string task;
  std::vector<CellSummary> cells;
  std::vector<RunRecord> runs;

  bool complete() const noexcept;
  const CellSummary* find(const std::string& mode, double fraction) const;
};

/// Dataset the experiment would use: loaded or generated, not yet scaled.
Dataset experiment_dataset(const ExperimentConfig& cfg);

SummaryTable run_experiment(const ExperimentConfig& cfg);
SummaryTable run_experiment(const ExperimentConfig& cfg, const Dataset& raw);

/// Aggregates per-run metrics into cells; pure function of the records.
std::vector<CellSummary> aggregate(const std::vector<RunRecord>& runs,
                                   const std::vector<TrainMode>& modes,
                                   const std::vector<double>& fractions);

nlohmann::ordered_json summary_to_json(const SummaryTable& table, const ExperimentConfig& cfg);
std::string format_summary_table(const SummaryTable& table);

/// Wide CSV: epoch, then <mode>_train_rmse, <mode>_val_rmse, <mode>_violation per report.
void emit_learning_curves(std::span<const RunReport> reports, const std::filesystem::path& path);

std::string fraction_tag(double fraction);

}  // namespace kkthpinn
