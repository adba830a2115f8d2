#include "kkthpinn/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

#include "kkthpinn/error.hpp"

namespace kkthpinn {

void ExperimentConfig::validate() const {
  train.validate();
  if (n_repeats < 1) throw ConfigError("experiment: repeats must be at least 1");
  if (modes.empty()) throw ConfigError("experiment: no modes selected");
  if (holdout_fractions.empty()) throw ConfigError("experiment: no holdout fractions");
  for (double f : holdout_fractions) {
    if (!(f > 0.0 && f < 1.0)) throw ConfigError("experiment: holdout fractions must lie in (0, 1)");
  }
  std::set<std::string> tags;
  for (const auto& m : modes) {
    if (!tags.insert(m.tag()).second) throw ConfigError("experiment: duplicate mode " + m.tag());
  }
  if (std::set<double>(holdout_fractions.begin(), holdout_fractions.end()).size() !=
      holdout_fractions.size()) {
    throw ConfigError("experiment: duplicate holdout fraction");
  }
  if (n_repeats >= (1u << 20) || holdout_fractions.size() >= (1u << 20)) {
    throw ConfigError("experiment: too many repeats or fractions for the seed schedule");
  }
  if (jobs < 1) throw ConfigError("experiment: jobs must be at least 1");
}

MeanStd mean_std(std::span<const double> values) {
  MeanStd r;
  if (values.empty()) return r;
  const double n = static_cast<double>(values.size());
  r.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - r.mean) * (v - r.mean);
    r.std = std::sqrt(ss / (n - 1.0));
  }
  return r;
}

std::uint64_t run_seed(std::uint64_t base, std::size_t mode_index, std::size_t fraction_index,
                       std::size_t repeat) {
  return mix_seed(base, 0) ^ ((static_cast<std::uint64_t>(mode_index) << 40) |
                              (static_cast<std::uint64_t>(fraction_index) << 20) |
                              static_cast<std::uint64_t>(repeat));
}

std::uint64_t split_seed(std::uint64_t base, std::size_t fraction_index, std::size_t repeat) {
  return mix_seed(base, 1) ^
         ((static_cast<std::uint64_t>(fraction_index) << 20) | static_cast<std::uint64_t>(repeat));
}

std::string fraction_tag(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", fraction);
  return buf;
}

bool SummaryTable::complete() const noexcept {
  return std::ranges::all_of(cells, [](const CellSummary& c) { return c.complete(); });
}

const CellSummary* SummaryTable::find(const std::string& mode, double fraction) const {
  for (const auto& c : cells)
    if (c.mode == mode && c.fraction == fraction) return &c;
  return nullptr;
}

Dataset experiment_dataset(const ExperimentConfig& cfg) {
  if (cfg.data) return read_csv(*cfg.data);
  const TaskDef& def = task_definition(cfg.task);
  return generate(cfg.task, cfg.n_samples ? cfg.n_samples : def.default_samples, cfg.data_seed,
                  cfg.noise_std);
}

std::vector<CellSummary> aggregate(const std::vector<RunRecord>& runs,
                                   const std::vector<TrainMode>& modes,
                                   const std::vector<double>& fractions) {
  std::vector<CellSummary> cells;
  for (const auto& mode : modes) {
    for (double f : fractions) {
      CellSummary c;
      c.mode = mode.tag();
      c.fraction = f;
      std::vector<double> overall, con, unc, viol;
      bool has_con = true, has_unc = true;
      for (const auto& r : runs) {
        if (r.mode != c.mode || r.fraction != f) continue;
        if (!r.ok) {
          ++c.failed;
          c.errors.push_back("repeat " + std::to_string(r.repeat) + ": " + r.error);
          continue;
        }
        ++c.runs;
        overall.push_back(r.test.rmse_overall);
        viol.push_back(r.test.mean_violation);
        if (r.test.rmse_constrained) con.push_back(*r.test.rmse_constrained); else has_con = false;
        if (r.test.rmse_unconstrained) unc.push_back(*r.test.rmse_unconstrained); else has_unc = false;
      }
      c.rmse_overall = mean_std(overall);
      c.mean_violation = mean_std(viol);
      if (c.runs > 0 && has_con) c.rmse_constrained = mean_std(con);
      if (c.runs > 0 && has_unc) c.rmse_unconstrained = mean_std(unc);
      cells.push_back(std::move(c));
    }
  }

  auto improvement = [](double base, double value) -> std::optional<double> {
    if (!(base > 0.0)) return std::nullopt;
    return (base - value) / base;
  };
  for (auto& c : cells) {
    if (c.mode == "pinn" || c.runs == 0) continue;
    const auto nn = std::ranges::find_if(
        cells, [&](const CellSummary& o) { return o.mode == "nn" && o.fraction == c.fraction; });
    if (nn == cells.end() || nn->runs == 0) continue;
    c.improvement_overall = improvement(nn->rmse_overall.mean, c.rmse_overall.mean);
    if (c.rmse_constrained && nn->rmse_constrained) {
      c.improvement_constrained = improvement(nn->rmse_constrained->mean, c.rmse_constrained->mean);
    }
    if (c.rmse_unconstrained && nn->rmse_unconstrained) {
      c.improvement_unconstrained =
          improvement(nn->rmse_unconstrained->mean, c.rmse_unconstrained->mean);
    }
  }
  return cells;
}

namespace {

nlohmann::ordered_json to_json(const MeanStd& m) { return {{"mean", m.mean}, {"std", m.std}}; }

template <typename T>
nlohmann::ordered_json opt_json(const std::optional<T>& v) {
  if (!v) return nullptr;
  if constexpr (std::is_same_v<T, MeanStd>) {
    return to_json(*v);
  } else {
    return *v;
  }
}

std::vector<std::size_t> architecture(const ExperimentConfig& cfg, const Dataset& ds) {
  std::size_t width = cfg.hidden_width, layers = cfg.hidden_layers;
  if (cfg.task != Task::custom && !cfg.data) {
    const TaskDef& def = task_definition(cfg.task);
    if (!width) width = def.hidden_width;
    if (!layers) layers = def.hidden_layers;
  } else if (ds.task != "custom") {
    try {
      const TaskDef& def = task_definition(parse_task(ds.task));
      if (!width) width = def.hidden_width;
      if (!layers) layers = def.hidden_layers;
    } catch (const ConfigError&) {
    }
  }
  if (!width) width = 32;
  if (!layers) layers = 2;
  std::vector<std::size_t> dims{ds.x.cols()};
  for (std::size_t l = 0; l < layers; ++l) dims.push_back(width);
  dims.push_back(ds.y.cols());
  return dims;
}

void write_outputs(const SummaryTable& table, const ExperimentConfig& cfg) {
  namespace fs = std::filesystem;
  const fs::path runs_dir = cfg.output_dir / "runs";
  std::error_code ec;
  fs::create_directories(runs_dir, ec);
  if (ec) throw PathError("cannot create " + runs_dir.string() + ": " + ec.message());

  for (const auto& r : table.runs) {
    const std::string stem = r.mode + "_" + fraction_tag(r.fraction) + "_" + std::to_string(r.repeat);
    nlohmann::ordered_json j;
    if (r.ok && r.report) {
      write_report_csv(runs_dir / (stem + ".csv"), *r.report);
      j = report_summary_json(*r.report);
    } else {
      j["mode"] = r.mode;
      j["seed"] = r.seed;
      j["error"] = r.error;
    }
    j["holdout"] = r.fraction;
    j["repeat"] = r.repeat;
    std::ofstream out(runs_dir / (stem + ".json"));
    out << j.dump(2) << '\n';
  }

  {
    std::ofstream out(cfg.output_dir / "summary.json");
    if (!out) throw PathError("cannot write summary.json in " + cfg.output_dir.string());
    out << summary_to_json(table, cfg).dump(2) << '\n';
  }
  {
    std::ofstream out(cfg.output_dir / "summary.txt");
    out << format_summary_table(table);
  }

  std::vector<RunReport> curves;
  for (const auto& r : table.runs) {
    if (r.ok && r.report && r.repeat == 0 && r.fraction == cfg.holdout_fractions.front()) {
      curves.push_back(*r.report);
    }
  }
  if (!curves.empty()) emit_learning_curves(curves, cfg.output_dir / "curves.csv");
}

}  // namespace

SummaryTable run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  return run_experiment(cfg, experiment_dataset(cfg));
}

SummaryTable run_experiment(const ExperimentConfig& cfg, const Dataset& raw) {
  cfg.validate();
  const Dataset scaled = fit_maxabs(raw);
  const ConstraintSpec spec = scaled.working_spec();
  const std::vector<std::size_t> dims = architecture(cfg, scaled);
  const std::uint64_t base = cfg.train.seed;

  struct Job {
    std::size_t mode_index, fraction_index, repeat;
  };
  std::vector<Job> jobs;
  for (std::size_t mi = 0; mi < cfg.modes.size(); ++mi)
    for (std::size_t fi = 0; fi < cfg.holdout_fractions.size(); ++fi)
      for (std::size_t r = 0; r < cfg.n_repeats; ++r) jobs.push_back({mi, fi, r});

  std::vector<RunRecord> records(jobs.size());
  auto run_one = [&](std::size_t k) {
    const Job& job = jobs[k];
    RunRecord& rec = records[k];
    const TrainMode& mode = cfg.modes[job.mode_index];
    rec.mode = mode.tag();
    rec.fraction = cfg.holdout_fractions[job.fraction_index];
    rec.repeat = job.repeat;
    rec.seed = run_seed(base, job.mode_index, job.fraction_index, job.repeat);
    try {
      const Split split = split_dataset(scaled, rec.fraction, cfg.train.validation_fraction,
                                        split_seed(base, job.fraction_index, job.repeat));
      TrainConfig tc = cfg.train;
      tc.seed = rec.seed;
      TrainResult res = train(init_mlp(dims, cfg.activation, rec.seed), mode, split, spec, tc);
      rec.test = *res.report.test;
      rec.report = std::move(res.report);
      rec.ok = true;
    } catch (const std::exception& e) {
      rec.ok = false;
      rec.error = e.what();
    }
  };

  if (cfg.jobs <= 1) {
    for (std::size_t k = 0; k < jobs.size(); ++k) run_one(k);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> workers;
    for (std::size_t w = 0; w < std::min(cfg.jobs, jobs.size()); ++w) {
      workers.emplace_back([&] {
        for (std::size_t k; (k = next.fetch_add(1)) < jobs.size();) run_one(k);
      });
    }
  }

  SummaryTable table;
  table.task = raw.task;
  table.cells = aggregate(records, cfg.modes, cfg.holdout_fractions);
  table.runs = std::move(records);
  if (!cfg.output_dir.empty()) write_outputs(table, cfg);
  return table;
}

nlohmann::ordered_json summary_to_json(const SummaryTable& table, const ExperimentConfig& cfg) {
  nlohmann::ordered_json j;
  j["task"] = table.task;
  nlohmann::ordered_json c;
  c["data"] = cfg.data ? nlohmann::ordered_json(cfg.data->string()) : nullptr;
  c["samples"] = cfg.n_samples;
  c["data_seed"] = cfg.data_seed;
  c["noise_std"] = cfg.noise_std;
  std::vector<std::string> tags;
  for (const auto& m : cfg.modes) tags.push_back(m.tag());
  c["modes"] = tags;
  for (const auto& m : cfg.modes)
    if (m.kind == ModeKind::pinn) c["lambda"] = m.lambda;
  c["repeats"] = cfg.n_repeats;
  c["holdout_fractions"] = cfg.holdout_fractions;
  c["epochs"] = cfg.train.epochs;
  c["batch_size"] = cfg.train.batch_size;
  c["learning_rate"] = cfg.train.learning_rate;
  c["validation_fraction"] = cfg.train.validation_fraction;
  c["seed"] = cfg.train.seed;
  c["activation"] = std::string(to_string(cfg.activation));
  j["config"] = c;
  j["complete"] = table.complete();

  nlohmann::ordered_json cells = nlohmann::ordered_json::array();
  for (const auto& cell : table.cells) {
    nlohmann::ordered_json e;
    e["mode"] = cell.mode;
    e["holdout"] = cell.fraction;
    e["runs"] = cell.runs;
    e["failed"] = cell.failed;
    e["complete"] = cell.complete();
    e["rmse_overall"] = to_json(cell.rmse_overall);
    e["rmse_constrained"] = opt_json(cell.rmse_constrained);
    e["rmse_unconstrained"] = opt_json(cell.rmse_unconstrained);
    e["mean_violation"] = to_json(cell.mean_violation);
    e["improvement_vs_nn"] = {{"overall", opt_json(cell.improvement_overall)},
                              {"constrained", opt_json(cell.improvement_constrained)},
                              {"unconstrained", opt_json(cell.improvement_unconstrained)}};
    if (!cell.errors.empty()) e["errors"] = cell.errors;
    cells.push_back(std::move(e));
  }
  j["cells"] = std::move(cells);
  return j;
}

std::string format_summary_table(const SummaryTable& table) {
  auto ms = [](const std::optional<MeanStd>& m) {
    if (!m) return std::string("-");
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.4e +/- %.2e", m->mean, m->std);
    return std::string(buf);
  };
  auto pct = [](const std::optional<double>& v) {
    if (!v) return std::string("-");
    char buf[32];
    std::snprintf(buf, sizeof buf, "%+.1f%%", 100.0 * *v);
    return std::string(buf);
  };

  std::ostringstream os;
  char line[512];
  std::snprintf(line, sizeof line, "%-10s %-7s %-4s %-24s %-24s %-24s %-24s %-8s\n", "mode",
                "holdout", "runs", "rmse_overall", "rmse_constrained", "rmse_unconstrained",
                "mean_violation", "vs_nn");
  os << "task: " << table.task << '\n' << line;
  for (const auto& c : table.cells) {
    std::snprintf(line, sizeof line, "%-10s %-7s %-4zu %-24s %-24s %-24s %-24s %-8s%s\n",
                  c.mode.c_str(), fraction_tag(c.fraction).c_str(), c.runs,
                  ms(c.rmse_overall).c_str(), ms(c.rmse_constrained).c_str(),
                  ms(c.rmse_unconstrained).c_str(), ms(c.mean_violation).c_str(),
                  pct(c.improvement_overall).c_str(), c.complete() ? "" : "  INCOMPLETE");
    os << line;
  }
  return os.str();
}

void emit_learning_curves(std::span<const RunReport> reports, const std::filesystem::path& path) {
  if (reports.empty()) throw ShapeError("emit_learning_curves: no reports");
  const std::size_t epochs = reports.front().train_rmse.size();
  for (const auto& r : reports) {
    if (r.train_rmse.size() != epochs) {
      throw ShapeError("emit_learning_curves: reports have different epoch counts");
    }
  }
  std::ofstream out(path);
  if (!out) throw PathError("cannot write " + path.string());
  out << "epoch";
  for (const auto& r : reports) {
    out << ',' << r.mode << "_train_rmse," << r.mode << "_val_rmse," << r.mode << "_violation";
  }
  out << '\n';
  char buf[32];
  for (std::size_t e = 0; e < epochs; ++e) {
    out << e + 1;
    for (const auto& r : reports) {
      for (double v : {r.train_rmse[e], r.val_rmse[e], r.mean_violation[e]}) {
        std::snprintf(buf, sizeof buf, ",%.17g", v);
        out << buf;
      }
    }
    out << '\n';
  }
  if (!out) throw PathError("failed writing " + path.string());
}

}  // namespace kkthpinn
