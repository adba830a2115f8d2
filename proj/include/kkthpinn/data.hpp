#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "kkthpinn/linalg.hpp"
#include "kkthpinn/projection.hpp"

namespace kkthpinn {

enum class Task { cstr, plant, distillation, custom };

std::string_view to_string(Task t);
Task parse_task(std::string_view name);

/// Fixed description of a case study: dimensions, constraints, sampling box,
/// feasibility tolerance and the default network/sample sizes.
struct TaskDef {
  Task task;
  std::size_t n_inputs;
  std::size_t n_outputs;
  ConstraintSpec spec;
  std::vector<std::pair<double, double>> input_ranges;
  double tolerance;
  std::size_t default_samples;
  std::size_t hidden_width;
  std::size_t hidden_layers;
  std::vector<std::string> x_descriptions;
  std::vector<std::string> y_descriptions;
};

const TaskDef& task_definition(Task task);

/// Paired samples (rows) with the constraint set they obey.
///
/// `spec` is always in original units. X and Y hold values already divided by
/// `scale_x` / `scale_y` (all ones until fit_maxabs), so `working_spec()` is the
/// constraint set satisfied by the stored rows.
struct Dataset {
  std::string task;
  Mat x;
  Mat y;
  ConstraintSpec spec;
  Vec scale_x;
  Vec scale_y;
  std::vector<std::string> x_names;
  std::vector<std::string> y_names;
  double tolerance = 1e-8;
  std::uint64_t seed = 0;
  double noise_std = 0.0;

  std::size_t size() const noexcept { return x.rows(); }
  ConstraintSpec working_spec() const;
};

/// Column headers x1..xN0 and y1..yNL.
std::vector<std::string> default_names(char prefix, std::size_t n);

/// Splits `total` proportionally to nonnegative `shares`; the parts sum to total.
Vec split_by_shares(double total, std::span<const double> shares);

/// CSTR steady state for inputs (T, F_B, F_E): extent ξ = F_lim·kτ/(1+kτ),
/// k = A_k·exp(−E_a/T), outputs (ξ, F_B − ξ, F_E − ξ).
Vec cstr_outputs(std::span<const double> x);
Vec cstr_outputs_for_extent(std::span<const double> x, double extent);

Dataset cstr_generate(std::size_t n, std::uint64_t seed, double noise_std = 0.0);
Dataset plant_generate(std::size_t n, std::uint64_t seed, double noise_std = 0.0);
Dataset distillation_generate(std::size_t n, std::uint64_t seed, double noise_std = 0.0);
Dataset generate(Task task, std::size_t n, std::uint64_t seed, double noise_std = 0.0);

/// Divides every column by its max-abs value and accumulates the factors in the scales.
Dataset fit_maxabs(const Dataset& ds);
/// Restores original units (scales back to one).
Dataset unscale(const Dataset& ds);
/// Re-expresses the stored values with the given (e.g. training-time) scale factors.
Dataset with_scales(const Dataset& ds, std::span<const double> scale_x,
                    std::span<const double> scale_y);

struct FilterResult {
  Dataset data;
  std::size_t retained = 0;
  std::size_t dropped = 0;
};

/// Keeps rows whose constraint violation (2-norm, working units) is at most tol.
FilterResult filter_feasible(const Dataset& ds, double tol);

/// Manifest that accompanies `csv`: same stem with ".manifest.json".
std::filesystem::path manifest_path_for(const std::filesystem::path& csv);

void write_csv(const std::filesystem::path& csv, const Dataset& ds);
Dataset read_csv(const std::filesystem::path& csv);

}  // namespace kkthpinn
