// Command-line front end: dataset generation, single training runs,
// checkpoint evaluation, the repeated-seed experiment protocol and a
// self-verification suite.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "kkthpinn/data.hpp"
#include "kkthpinn/error.hpp"
#include "kkthpinn/harness.hpp"
#include "kkthpinn/network.hpp"
#include "kkthpinn/training.hpp"
#include "kkthpinn/verify.hpp"

namespace fs = std::filesystem;
using namespace kkthpinn;

namespace {

struct DataOptions {
  std::string data;
  std::string task;
  std::size_t n = 0;
  std::uint64_t data_seed = 7;
  double noise = 0.0;
};

struct TrainOptions {
  std::size_t epochs = 1000;
  std::size_t batch_size = 16;
  double lr = 1e-4;
  double lambda = 1.0;
  std::uint64_t seed = 0;
  std::string activation = "relu";
};

void add_data_options(CLI::App* cmd, DataOptions& o) {
  cmd->add_option("--data", o.data, "Dataset CSV (its .manifest.json must sit alongside)");
  cmd->add_option("--task", o.task, "Synthesize a task instead: cstr, plant or distillation");
  cmd->add_option("--n", o.n, "Samples to synthesize (default: task default)");
  cmd->add_option("--data-seed", o.data_seed, "Seed for synthesizing the dataset")
      ->capture_default_str();
  cmd->add_option("--noise", o.noise, "Std of constraint-preserving output noise")
      ->capture_default_str();
}

void add_train_options(CLI::App* cmd, TrainOptions& o) {
  cmd->add_option("--epochs", o.epochs, "Training epochs")->capture_default_str();
  cmd->add_option("--batch-size", o.batch_size, "Minibatch size")->capture_default_str();
  cmd->add_option("--lr", o.lr, "Adam learning rate")->capture_default_str();
  cmd->add_option("--lambda", o.lambda, "PINN penalty weight")->capture_default_str();
  cmd->add_option("--seed", o.seed, "Seed for initialization, splits and shuffling")
      ->capture_default_str();
  cmd->add_option("--activation", o.activation, "Hidden activation: relu or tanh")
      ->capture_default_str();
}

Dataset load_data(const DataOptions& o) {
  if (!o.data.empty()) {
    if (!fs::exists(o.data)) throw PathError("dataset not found: " + o.data);
    return read_csv(o.data);
  }
  if (o.task.empty()) throw ConfigError("either --data or --task is required");
  const Task task = parse_task(o.task);
  return generate(task, o.n ? o.n : task_definition(task).default_samples, o.data_seed, o.noise);
}

TrainConfig make_train_config(const TrainOptions& o) {
  TrainConfig c;
  c.epochs = o.epochs;
  c.batch_size = o.batch_size;
  c.learning_rate = o.lr;
  c.seed = o.seed;
  c.validate();
  return c;
}

std::vector<std::size_t> default_dims(const Dataset& ds) {
  std::size_t width = 32, layers = 2;
  if (ds.task != "custom") {
    try {
      const TaskDef& def = task_definition(parse_task(ds.task));
      width = def.hidden_width;
      layers = def.hidden_layers;
    } catch (const ConfigError&) {
    }
  }
  std::vector<std::size_t> dims{ds.x.cols()};
  dims.insert(dims.end(), layers, width);
  dims.push_back(ds.y.cols());
  return dims;
}

void print_metrics(const std::string& label, const Metrics& m) {
  std::cout << label << ": " << metrics_to_json(m).dump() << '\n';
}

int cmd_generate(const DataOptions& o, const std::string& out) {
  if (o.task.empty()) throw ConfigError("generate needs --task");
  const Task task = parse_task(o.task);
  const std::size_t n = o.n ? o.n : task_definition(task).default_samples;
  const Dataset ds = generate(task, n, o.data_seed, o.noise);
  const fs::path path = out.empty() ? fs::path(o.task + ".csv") : fs::path(out);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  write_csv(path, ds);
  std::cout << "wrote " << ds.size() << " samples to " << path.string() << " (manifest "
            << manifest_path_for(path).string() << ")\n";
  return 0;
}

int cmd_train(const DataOptions& d, const TrainOptions& t, const std::string& mode_tag,
              double holdout, const std::string& out) {
  const TrainMode mode = parse_mode(mode_tag, t.lambda);
  const TrainConfig cfg = make_train_config(t);
  const Dataset scaled = fit_maxabs(load_data(d));
  const Split split = split_dataset(scaled, holdout, cfg.validation_fraction, t.seed);
  const auto dims = default_dims(scaled);
  Mlp net = init_mlp(dims, parse_activation(t.activation), t.seed);

  TrainResult res = train(std::move(net), mode, split, scaled.working_spec(), cfg);

  const fs::path dir = out.empty() ? fs::path("run") : fs::path(out);
  fs::create_directories(dir);
  write_checkpoint(dir / "model.ckpt", res.net);
  write_report_csv(dir / "report.csv", res.report);
  nlohmann::ordered_json j = report_summary_json(res.report);
  j["task"] = scaled.task;
  j["data"] = d.data.empty() ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(d.data);
  j["holdout"] = holdout;
  j["layer_dims"] = dims;
  j["activation"] = t.activation;
  j["scale_x"] = scaled.scale_x;
  j["scale_y"] = scaled.scale_y;
  std::ofstream(dir / "report.json") << j.dump(2) << '\n';

  std::cout << "mode " << mode.tag() << ", " << cfg.epochs << " epochs, train rmse "
            << res.report.train_rmse.back() << ", val rmse " << res.report.val_rmse.back() << '\n';
  if (res.report.test) print_metrics("test", *res.report.test);
  std::cout << "wrote " << (dir / "model.ckpt").string() << ", report.csv, report.json\n";
  return 0;
}

int cmd_evaluate(const std::string& model, const std::string& data, const std::string& mode_override) {
  if (!fs::exists(model)) throw PathError("checkpoint not found: " + model);
  if (!fs::exists(data)) throw PathError("dataset not found: " + data);
  const Mlp net = read_checkpoint(model);
  Dataset ds = read_csv(data);

  std::string mode_tag = mode_override;
  const fs::path meta = fs::path(model).parent_path() / "report.json";
  if (fs::exists(meta)) {
    const auto j = nlohmann::json::parse(std::ifstream(meta));
    if (mode_tag.empty()) mode_tag = j.at("mode").get<std::string>();
    ds = with_scales(ds, j.at("scale_x").get<Vec>(), j.at("scale_y").get<Vec>());
  } else {
    ds = fit_maxabs(ds);
  }
  if (mode_tag.empty()) mode_tag = "nn";
  const TrainMode mode = parse_mode(mode_tag);
  const Metrics m = evaluate(net, mode, Partition{ds.x, ds.y}, ds.working_spec());
  std::cout << "mode " << mode.tag() << ", " << ds.size() << " samples\n";
  print_metrics("metrics", m);
  return 0;
}

int cmd_experiment(const DataOptions& d, const TrainOptions& t,
                   const std::vector<std::string>& modes, const std::vector<double>& holdouts,
                   std::size_t repeats, std::size_t jobs, const std::string& out) {
  ExperimentConfig cfg;
  if (!d.data.empty()) {
    if (!fs::exists(d.data)) throw PathError("dataset not found: " + d.data);
    cfg.data = d.data;
    cfg.task = Task::custom;
  } else {
    if (d.task.empty()) throw ConfigError("either --data or --task is required");
    cfg.task = parse_task(d.task);
  }
  cfg.n_samples = d.n;
  cfg.data_seed = d.data_seed;
  cfg.noise_std = d.noise;
  if (!modes.empty()) {
    cfg.modes.clear();
    for (const auto& m : modes) cfg.modes.push_back(parse_mode(m, t.lambda));
  } else {
    for (auto& m : cfg.modes)
      if (m.kind == ModeKind::pinn) m = TrainMode::pinn(t.lambda);
  }
  if (!holdouts.empty()) cfg.holdout_fractions = holdouts;
  cfg.n_repeats = repeats;
  cfg.train = make_train_config(t);
  cfg.activation = parse_activation(t.activation);
  cfg.output_dir = out;
  cfg.jobs = jobs;

  const SummaryTable table = run_experiment(cfg);
  std::cout << format_summary_table(table);
  std::cout << "wrote " << (fs::path(out) / "summary.json").string() << '\n';
  return table.complete() ? 0 : 1;
}

int cmd_verify(std::uint64_t seed) {
  bool ok = true;
  for (const auto& c : run_verification(seed)) {
    std::cout << (c.passed ? "[PASS] " : "[FAIL] ") << c.name;
    if (!c.detail.empty()) std::cout << " (" << c.detail << ")";
    std::cout << '\n';
    ok = ok && c.passed;
  }
  std::cout << (ok ? "all invariant checks passed\n" : "some invariant checks FAILED\n");
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Surrogate MLPs with hard linear equality constraints (KKT projection layers)"};
  app.require_subcommand(1);

  DataOptions gen_data;
  std::string gen_out;
  auto* gen = app.add_subcommand("generate", "Synthesize a task dataset as CSV + manifest");
  gen->add_option("--task", gen_data.task, "cstr, plant or distillation")->required();
  gen->add_option("--n", gen_data.n, "Number of samples (default: task default)");
  gen->add_option("--seed", gen_data.data_seed, "Sampling seed")->capture_default_str();
  gen->add_option("--noise", gen_data.noise, "Std of constraint-preserving output noise")
      ->capture_default_str();
  gen->add_option("--out", gen_out, "CSV path (default: <task>.csv)");

  DataOptions tr_data;
  TrainOptions tr_opts;
  std::string tr_mode = "kkt_hpinn", tr_out;
  double tr_holdout = 0.2;
  auto* trn = app.add_subcommand("train", "Train one model in one mode");
  add_data_options(trn, tr_data);
  add_train_options(trn, tr_opts);
  trn->add_option("--mode", tr_mode, "nn, pinn, nn_post or kkt_hpinn")->capture_default_str();
  trn->add_option("--holdout", tr_holdout, "Fraction held out as test set")->capture_default_str();
  trn->add_option("--out", tr_out, "Output directory (default: run)");

  std::string ev_model, ev_data, ev_mode;
  auto* ev = app.add_subcommand("evaluate", "Evaluate a checkpoint on a dataset");
  ev->add_option("--model", ev_model, "Checkpoint written by train")->required();
  ev->add_option("--data", ev_data, "Dataset CSV")->required();
  ev->add_option("--mode", ev_mode, "Override the mode recorded next to the checkpoint");

  DataOptions ex_data;
  TrainOptions ex_opts;
  std::vector<std::string> ex_modes;
  std::vector<double> ex_holdouts;
  std::size_t ex_repeats = 10, ex_jobs = 1;
  std::string ex_out;
  auto* ex = app.add_subcommand("experiment", "Repeated-seed comparison of all modes");
  add_data_options(ex, ex_data);
  add_train_options(ex, ex_opts);
  ex->add_option("--mode", ex_modes, "Modes to compare (default: nn pinn nn_post kkt_hpinn)");
  ex->add_option("--holdout", ex_holdouts, "Held-out test fractions (default: 0.2 0.3 0.4)");
  ex->add_option("--repeats", ex_repeats, "Repeats per (mode, holdout)")->capture_default_str();
  ex->add_option("--jobs", ex_jobs, "Worker threads")->capture_default_str();
  ex->add_option("--out", ex_out, "Output directory")->required();

  std::uint64_t ver_seed = 1;
  auto* ver = app.add_subcommand("verify", "Check projection and gradient invariants");
  ver->add_option("--seed", ver_seed, "Seed for the random instances")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return e.get_exit_code() == 0 ? 0 : 2;
  }

  try {
    if (*gen) return cmd_generate(gen_data, gen_out);
    if (*trn) return cmd_train(tr_data, tr_opts, tr_mode, tr_holdout, tr_out);
    if (*ev) return cmd_evaluate(ev_model, ev_data, ev_mode);
    if (*ex) return cmd_experiment(ex_data, ex_opts, ex_modes, ex_holdouts, ex_repeats, ex_jobs, ex_out);
    if (*ver) return cmd_verify(ver_seed);
  } catch (const PathError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
