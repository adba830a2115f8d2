#include "kkthpinn/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>

#include "kkthpinn/error.hpp"

namespace kkthpinn {

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ull * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

TrainMode TrainMode::pinn(double lambda) {
  if (!(lambda > 0.0) || !std::isfinite(lambda)) {
    throw ConfigError("pinn: penalty weight lambda must be positive");
  }
  return {ModeKind::pinn, lambda};
}

std::string TrainMode::tag() const {
  switch (kind) {
    case ModeKind::nn: return "nn";
    case ModeKind::pinn: return "pinn";
    case ModeKind::kkt_hpinn: return "kkt_hpinn";
    case ModeKind::nn_post: return "nn_post";
  }
  return "unknown";
}

TrainMode parse_mode(std::string_view tag, double lambda) {
  if (tag == "nn") return TrainMode::nn();
  if (tag == "pinn") return TrainMode::pinn(lambda);
  if (tag == "kkt_hpinn") return TrainMode::kkt_hpinn();
  if (tag == "nn_post") return TrainMode::nn_post();
  throw ConfigError("unknown mode '" + std::string(tag) +
                    "' (expected nn, pinn, kkt_hpinn or nn_post)");
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be at least 1");
  if (batch_size < 1) throw ConfigError("batch size must be at least 1");
  if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  if (!(validation_fraction > 0.0 && validation_fraction < 1.0)) {
    throw ConfigError("validation fraction must lie in (0, 1)");
  }
}

namespace {

Partition take_rows(const Dataset& ds, std::span<const std::size_t> idx) {
  Partition p{Mat(idx.size(), ds.x.cols()), Mat(idx.size(), ds.y.cols())};
  for (std::size_t k = 0; k < idx.size(); ++k) {
    std::ranges::copy(ds.x.row(idx[k]), p.x.row(k).begin());
    std::ranges::copy(ds.y.row(idx[k]), p.y.row(k).begin());
  }
  return p;
}

void gather(const Partition& src, std::span<const std::size_t> idx, Mat& x, Mat& y) {
  x = Mat(idx.size(), src.x.cols());
  y = Mat(idx.size(), src.y.cols());
  for (std::size_t k = 0; k < idx.size(); ++k) {
    std::ranges::copy(src.x.row(idx[k]), x.row(k).begin());
    std::ranges::copy(src.y.row(idx[k]), y.row(k).begin());
  }
}

void check_batch(const Mlp& net, const Mat& x, const Mat& y) {
  if (x.rows() == 0) throw DataError("loss: empty batch");
  if (x.rows() != y.rows() || y.cols() != net.output_dim()) {
    throw ShapeError("loss: batch shapes do not match the network");
  }
}

}  // namespace

Split split_dataset(const Dataset& ds, double test_fraction, double validation_fraction,
                    std::uint64_t seed) {
  if (!(test_fraction >= 0.0 && test_fraction < 1.0)) {
    throw ConfigError("test fraction must lie in [0, 1)");
  }
  if (!(validation_fraction > 0.0 && validation_fraction < 1.0)) {
    throw ConfigError("validation fraction must lie in (0, 1)");
  }
  const std::size_t n = ds.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(mix_seed(seed, 0x5b1175));
  std::shuffle(idx.begin(), idx.end(), rng);

  const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(n)));
  const std::size_t rest = n - n_test;
  auto n_val = static_cast<std::size_t>(std::llround(validation_fraction * static_cast<double>(rest)));
  n_val = std::max<std::size_t>(n_val, 1);
  if (rest < n_val + 1) {
    throw DataError("split_dataset: " + std::to_string(n) +
                    " samples are too few for the requested fractions");
  }
  std::span<const std::size_t> all(idx);
  return Split{take_rows(ds, all.subspan(n_test + n_val)),
               take_rows(ds, all.subspan(n_test, n_val)), take_rows(ds, all.first(n_test))};
}

LossResult mode_loss(const Mlp& net, const TrainMode& mode, const ConstraintSpec* spec,
                     const ProjectionParams* proj, const Mat& x, const Mat& y,
                     const SoftPenalty& penalty) {
  check_batch(net, x, y);
  if (mode.kind == ModeKind::pinn && !spec) throw ConfigError("pinn loss needs constraints");
  if (mode.kind == ModeKind::kkt_hpinn && !proj) {
    throw ConfigError("kkt_hpinn loss needs projection parameters");
  }
  if (mode.kind == ModeKind::pinn && !(mode.lambda > 0.0)) {
    throw ConfigError("pinn: penalty weight lambda must be positive");
  }

  ForwardTrace trace;
  const Mat y_hat = forward(net, x, &trace);
  const bool projected = mode.kind == ModeKind::kkt_hpinn;
  const Mat out = projected ? apply_projection(*proj, x, y_hat) : y_hat;

  const std::size_t n = x.rows();
  const double inv_n = 1.0 / static_cast<double>(n);
  Mat grad(n, out.cols());
  double fit = 0.0;
  double pen = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    auto o = out.row(i);
    auto t = y.row(i);
    auto g = grad.row(i);
    for (std::size_t j = 0; j < o.size(); ++j) {
      const double d = o[j] - t[j];
      fit += d * d;
      g[j] = d * inv_n;
    }
    if (mode.kind == ModeKind::pinn) {
      const Vec r = spec->residual(x.row(i), o);
      for (double v : r) pen += v * v;
      const Mat& b = spec->b();
      for (std::size_t k = 0; k < r.size(); ++k) {
        const double w = mode.lambda * inv_n * r[k];
        auto bk = b.row(k);
        for (std::size_t j = 0; j < g.size(); ++j) g[j] += w * bk[j];
      }
    }
  }
  double value = 0.5 * inv_n * fit;
  if (mode.kind == ModeKind::pinn) value += 0.5 * inv_n * mode.lambda * pen;

  if (penalty) {
    Vec pg(out.cols());
    double extra = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      std::fill(pg.begin(), pg.end(), 0.0);
      extra += penalty(x.row(i), out.row(i), pg);
      auto g = grad.row(i);
      for (std::size_t j = 0; j < g.size(); ++j) g[j] += inv_n * pg[j];
    }
    value += inv_n * extra;
  }

  const Mat upstream = projected ? projection_backward(*proj, grad) : grad;
  return LossResult{value, backward(net, trace, upstream)};
}

LossResult loss_nn(const Mlp& net, const Mat& x, const Mat& y) {
  return mode_loss(net, TrainMode::nn(), nullptr, nullptr, x, y);
}

LossResult loss_pinn(const Mlp& net, const Mat& x, const Mat& y, const ConstraintSpec& spec,
                     double lambda) {
  if (!(lambda > 0.0)) throw ConfigError("pinn: penalty weight lambda must be positive");
  return mode_loss(net, TrainMode{ModeKind::pinn, lambda}, &spec, nullptr, x, y);
}

LossResult loss_kkt(const Mlp& net, const ProjectionParams& proj, const Mat& x, const Mat& y) {
  return mode_loss(net, TrainMode::kkt_hpinn(), nullptr, &proj, x, y);
}

Mat predict(const Mlp& net, const TrainMode& mode, const ProjectionParams* proj, const Mat& x) {
  Mat y_hat = forward(net, x);
  if (!mode.projects()) return y_hat;
  if (!proj) throw ConfigError(mode.tag() + " predictions need projection parameters");
  return apply_projection(*proj, x, y_hat);
}

Metrics evaluate_predictions(const Mat& predictions, const Partition& part,
                             const ConstraintSpec& spec) {
  if (part.empty()) throw DataError("evaluate: empty partition");
  if (predictions.rows() != part.y.rows() || predictions.cols() != part.y.cols()) {
    throw ShapeError("evaluate: predictions do not match the partition");
  }
  const std::vector<bool> constrained = spec.constrained_outputs();
  double sse_all = 0.0, sse_con = 0.0, sse_unc = 0.0;
  std::size_t n_con = 0, n_unc = 0;
  for (std::size_t j = 0; j < constrained.size(); ++j) (constrained[j] ? n_con : n_unc) += 1;

  Metrics m;
  double viol_sum = 0.0;
  for (std::size_t i = 0; i < part.size(); ++i) {
    auto p = predictions.row(i);
    auto t = part.y.row(i);
    for (std::size_t j = 0; j < p.size(); ++j) {
      const double d = (p[j] - t[j]) * (p[j] - t[j]);
      sse_all += d;
      (constrained[j] ? sse_con : sse_unc) += d;
    }
    const double v = violation(spec, part.x.row(i), p);
    viol_sum += v;
    m.max_violation = std::max(m.max_violation, v);
  }
  const double rows = static_cast<double>(part.size());
  m.rmse_overall = std::sqrt(sse_all / (rows * static_cast<double>(constrained.size())));
  if (n_con > 0) m.rmse_constrained = std::sqrt(sse_con / (rows * static_cast<double>(n_con)));
  if (n_unc > 0) m.rmse_unconstrained = std::sqrt(sse_unc / (rows * static_cast<double>(n_unc)));
  m.mean_violation = viol_sum / rows;
  return m;
}

Metrics evaluate(const Mlp& net, const TrainMode& mode, const Partition& part,
                 const ConstraintSpec& spec) {
  if (part.empty()) throw DataError("evaluate: empty partition");
  std::optional<ProjectionParams> proj;
  if (mode.projects()) proj = build_projection(spec);
  return evaluate_predictions(predict(net, mode, proj ? &*proj : nullptr, part.x), part, spec);
}

TrainResult train(Mlp net, const TrainMode& mode, const Split& split, const ConstraintSpec& spec,
                  const TrainConfig& config, const SoftPenalty& penalty) {
  config.validate();
  if (split.train.empty()) throw DataError("train: empty training partition");
  if (split.validation.empty()) throw DataError("train: empty validation partition");
  if (spec.num_inputs() != net.input_dim() || spec.num_outputs() != net.output_dim()) {
    throw ShapeError("train: constraint dimensions do not match the network");
  }

  const ProjectionParams proj = build_projection(spec);
  AdamState adam(net, AdamState::Options{config.learning_rate});

  RunReport report;
  report.mode = mode.tag();
  report.lambda = mode.kind == ModeKind::pinn ? std::optional<double>(mode.lambda) : std::nullopt;
  report.seed = config.seed;
  report.config = config;
  report.initial_train_rmse = evaluate_predictions(predict(net, mode, &proj, split.train.x),
                                                   split.train, spec)
                                  .rmse_overall;

  std::vector<std::size_t> order(split.train.size());
  std::iota(order.begin(), order.end(), 0);
  Mat bx, by;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::mt19937_64 rng(mix_seed(config.seed, epoch + 1));
    std::shuffle(order.begin(), order.end(), rng);
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size, ++batch_index) {
      const std::size_t len = std::min(config.batch_size, order.size() - start);
      gather(split.train, std::span(order).subspan(start, len), bx, by);
      const std::string where =
          " at epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch_index);
      try {
        const LossResult loss = mode_loss(net, mode, &spec, &proj, bx, by, penalty);
        if (!std::isfinite(loss.value)) throw TrainingError("non-finite loss");
        adam.step(net, loss.gradients);
      } catch (const TrainingError& e) {
        throw TrainingError(std::string(e.what()) + where);
      }
    }

    const Metrics tr = evaluate_predictions(predict(net, mode, &proj, split.train.x), split.train, spec);
    const Metrics va =
        evaluate_predictions(predict(net, mode, &proj, split.validation.x), split.validation, spec);
    double worst = std::max(tr.max_violation, va.max_violation);
    if (!split.test.empty()) {
      const Metrics te = evaluate_predictions(predict(net, mode, &proj, split.test.x), split.test, spec);
      worst = std::max(worst, te.max_violation);
    }
    report.train_rmse.push_back(tr.rmse_overall);
    report.val_rmse.push_back(va.rmse_overall);
    report.mean_violation.push_back(va.mean_violation);
    report.max_violation.push_back(worst);
  }

  if (!split.test.empty()) report.test = evaluate(net, mode, split.test, spec);
  return TrainResult{std::move(net), std::move(report)};
}

nlohmann::ordered_json metrics_to_json(const Metrics& m) {
  nlohmann::ordered_json j;
  j["rmse_overall"] = m.rmse_overall;
  j["rmse_constrained"] = m.rmse_constrained ? nlohmann::ordered_json(*m.rmse_constrained) : nullptr;
  j["rmse_unconstrained"] =
      m.rmse_unconstrained ? nlohmann::ordered_json(*m.rmse_unconstrained) : nullptr;
  j["mean_violation"] = m.mean_violation;
  j["max_violation"] = m.max_violation;
  return j;
}

nlohmann::ordered_json report_summary_json(const RunReport& r) {
  nlohmann::ordered_json j;
  j["mode"] = r.mode;
  j["seed"] = r.seed;
  j["config"] = {{"epochs", r.config.epochs},
                 {"batch_size", r.config.batch_size},
                 {"learning_rate", r.config.learning_rate},
                 {"seed", r.config.seed},
                 {"validation_fraction", r.config.validation_fraction}};
  if (r.lambda) j["lambda"] = *r.lambda;
  j["initial_train_rmse"] = r.initial_train_rmse;
  if (!r.train_rmse.empty()) {
    j["final_train_rmse"] = r.train_rmse.back();
    j["final_val_rmse"] = r.val_rmse.back();
    j["final_val_mean_violation"] = r.mean_violation.back();
    j["max_violation_all_epochs"] = *std::ranges::max_element(r.max_violation);
  }
  j["test"] = r.test ? metrics_to_json(*r.test) : nullptr;
  return j;
}

void write_report_csv(const std::filesystem::path& path, const RunReport& r) {
  std::ofstream out(path);
  if (!out) throw PathError("cannot write " + path.string());
  out << "epoch,train_rmse,val_rmse,mean_violation\n";
  char buf[128];
  for (std::size_t e = 0; e < r.train_rmse.size(); ++e) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g\n", e + 1, r.train_rmse[e],
                  r.val_rmse[e], r.mean_violation[e]);
    out << buf;
  }
  if (!out) throw PathError("failed writing " + path.string());
}

}  // namespace kkthpinn
