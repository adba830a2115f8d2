#include "kkthpinn/data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include <json.hpp>

#include "kkthpinn/error.hpp"

namespace kkthpinn {

namespace {

// CSTR kinetics. Conversion kτ/(1+kτ) spans roughly 0.48 to 0.90 over the
// temperature range.
constexpr double kPreExponential = 5e4;
constexpr double kActivationTemp = 6000.0;
constexpr double kResidenceTime = 1.0;

// Seeds of the fixed nonlinear response surfaces. They are part of the task
// definition and independent of the sampling seed.
constexpr std::uint64_t kPlantSurfaceSeed = 0x9e3779b97f4a7c15ull;
constexpr std::uint64_t kDistillationSurfaceSeed = 0xd1b54a32d192ed03ull;

constexpr std::size_t kSmoothTerms = 4;

/// Bounded smooth function on [0,1]^d: mix of sinusoids and tanh ridges of
/// affine input combinations, |value| <= 1.
class SmoothSurface {
 public:
  SmoothSurface(std::size_t dim, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> freq(-2.5, 2.5);
    std::uniform_real_distribution<double> phase(0.0, 6.283185307179586);
    std::uniform_real_distribution<double> amp(0.2, 1.0);
    double total = 0.0;
    for (std::size_t k = 0; k < 2 * kSmoothTerms; ++k) {
      Vec w(dim);
      for (double& v : w) v = freq(rng);
      dirs_.push_back(std::move(w));
      phases_.push_back(phase(rng));
      amps_.push_back(amp(rng));
      total += amps_.back();
    }
    for (double& a : amps_) a /= total;
  }

  double operator()(std::span<const double> u) const {
    double s = 0.0;
    for (std::size_t k = 0; k < dirs_.size(); ++k) {
      double t = phases_[k];
      for (std::size_t i = 0; i < u.size(); ++i) t += dirs_[k][i] * u[i];
      s += amps_[k] * (k < kSmoothTerms ? std::sin(t) : std::tanh(t - 3.0));
    }
    return s;
  }

 private:
  std::vector<Vec> dirs_;
  Vec phases_;
  Vec amps_;
};

std::vector<SmoothSurface> make_surfaces(std::size_t count, std::size_t dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<SmoothSurface> out;
  for (std::size_t i = 0; i < count; ++i) out.emplace_back(dim, rng);
  return out;
}

double sigmoid(double t) { return 1.0 / (1.0 + std::exp(-t)); }

TaskDef make_cstr() {
  // x = (T, F_B, F_E), y = (F_EB, F_B,out, F_E,out)
  //   x2 − x3 − y2 + y3 = 0   reactant consumption
  //   x2 − y1 − y2 = 0        product formation
  ConstraintSpec spec(Mat{{0, 1, -1}, {0, 1, 0}}, Mat{{0, -1, 1}, {-1, -1, 0}}, Vec{0, 0});
  return TaskDef{Task::cstr,
                 3,
                 3,
                 std::move(spec),
                 {{550.0, 700.0}, {0.5, 3.0}, {0.5, 3.0}},
                 1e-8,
                 1500,
                 12,
                 2,
                 {"reactor temperature", "benzene feed", "ethylene feed"},
                 {"ethylbenzene out", "benzene out", "ethylene out"}};
}

TaskDef make_plant() {
  // x1 + x2 + x3 − x4 − y1 − y3 − y5 = 0
  ConstraintSpec spec(Mat{{1, 1, 1, -1}}, Mat{{-1, 0, -1, 0, -1}}, Vec{0});
  return TaskDef{Task::plant,
                 4,
                 5,
                 std::move(spec),
                 {{80.0, 160.0}, {40.0, 120.0}, {10.0, 60.0}, {1.0, 15.0}},
                 1e-6,
                 1200,
                 32,
                 2,
                 {"methanol feed", "ethanol feed", "water feed", "purge total"},
                 {"DME stream total", "DME in DME stream", "DEE stream total", "DEE in DEE stream",
                  "water stream total"}};
}

TaskDef make_distillation() {
  //   x3 − y1 − y7 − y8 = 0
  //   x5 − y2 − y9 − y10 = 0
  Mat b(2, 10);
  for (std::size_t j : {0, 6, 7}) b(0, j) = -1.0;
  for (std::size_t j : {1, 8, 9}) b(1, j) = -1.0;
  ConstraintSpec spec(Mat{{0, 0, 1, 0, 0}, {0, 0, 0, 0, 1}}, std::move(b), Vec{0, 0});
  return TaskDef{Task::distillation,
                 5,
                 10,
                 std::move(spec),
                 {{150.0, 350.0}, {1.5, 6.0}, {45.0, 55.0}, {0.8, 4.0}, {45.0, 55.0}},
                 1e-8,
                 5000,
                 32,
                 2,
                 {"solvent flow", "column 1 reflux ratio", "column 1 distillate",
                  "column 2 reflux ratio", "column 2 distillate"},
                 {"heptane in C7", "toluene in TOLUENE", "column 1 condenser duty",
                  "column 1 reboiler duty", "column 2 condenser duty", "column 2 reboiler duty",
                  "toluene in C7", "phenol in C7", "heptane in TOLUENE", "phenol in TOLUENE"}};
}

Vec sample_inputs(const TaskDef& def, std::mt19937_64& rng) {
  Vec x(def.n_inputs);
  for (std::size_t i = 0; i < def.n_inputs; ++i) {
    std::uniform_real_distribution<double> d(def.input_ranges[i].first, def.input_ranges[i].second);
    x[i] = d(rng);
  }
  return x;
}

Vec normalized(const TaskDef& def, std::span<const double> x) {
  Vec u(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const auto [lo, hi] = def.input_ranges[i];
    u[i] = (x[i] - lo) / (hi - lo);
  }
  return u;
}

// Adds noise_std·B*·g (g standard normal) so that B·y is unchanged.
void add_nullspace_noise(Mat& y, const ConstraintSpec& spec, double noise_std,
                         std::mt19937_64& rng) {
  if (noise_std <= 0.0) return;
  const ProjectionParams p = build_projection(spec);
  std::normal_distribution<double> normal(0.0, 1.0);
  Vec g(y.cols());
  for (std::size_t n = 0; n < y.rows(); ++n) {
    for (double& v : g) v = normal(rng);
    const Vec d = matvec(p.b_star, g);
    auto row = y.row(n);
    for (std::size_t j = 0; j < row.size(); ++j) row[j] += noise_std * d[j];
  }
}

Dataset assemble(const TaskDef& def, Mat x, Mat y, std::uint64_t seed, double noise_std) {
  Dataset ds{std::string(to_string(def.task)),
             std::move(x),
             std::move(y),
             def.spec,
             Vec(def.n_inputs, 1.0),
             Vec(def.n_outputs, 1.0),
             default_names('x', def.n_inputs),
             default_names('y', def.n_outputs),
             def.tolerance,
             seed,
             noise_std};
  return filter_feasible(ds, def.tolerance).data;
}

void check_count(std::size_t n, std::string_view who) {
  if (n < 1) throw ConfigError(std::string(who) + ": need at least one sample");
}

std::string fmt17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::string_view to_string(Task t) {
  switch (t) {
    case Task::cstr: return "cstr";
    case Task::plant: return "plant";
    case Task::distillation: return "distillation";
    case Task::custom: return "custom";
  }
  return "unknown";
}

Task parse_task(std::string_view name) {
  if (name == "cstr") return Task::cstr;
  if (name == "plant") return Task::plant;
  if (name == "distillation") return Task::distillation;
  if (name == "custom") return Task::custom;
  throw ConfigError("unknown task '" + std::string(name) +
                    "' (expected cstr, plant, distillation or custom)");
}

const TaskDef& task_definition(Task task) {
  static const TaskDef cstr = make_cstr();
  static const TaskDef plant = make_plant();
  static const TaskDef distillation = make_distillation();
  switch (task) {
    case Task::cstr: return cstr;
    case Task::plant: return plant;
    case Task::distillation: return distillation;
    case Task::custom: break;
  }
  throw ConfigError("custom tasks have no built-in definition; load them from a dataset");
}

ConstraintSpec Dataset::working_spec() const {
  return rescale_constraints(spec, scale_x, scale_y);
}

std::vector<std::string> default_names(char prefix, std::size_t n) {
  std::vector<std::string> names;
  for (std::size_t i = 1; i <= n; ++i) names.push_back(prefix + std::to_string(i));
  return names;
}

Vec split_by_shares(double total, std::span<const double> shares) {
  double sum = 0.0;
  for (double s : shares) {
    if (!(s >= 0.0)) throw DataError("split_by_shares: shares must be nonnegative");
    sum += s;
  }
  if (!(sum > 0.0)) throw DataError("split_by_shares: shares sum to zero");
  Vec parts(shares.size());
  // The last part absorbs rounding so the parts add back to `total`.
  double used = 0.0;
  for (std::size_t i = 0; i + 1 < shares.size(); ++i) {
    parts[i] = total * (shares[i] / sum);
    used += parts[i];
  }
  if (!shares.empty()) parts.back() = shares.back() == 0.0 ? 0.0 : total - used;
  return parts;
}

Vec cstr_outputs_for_extent(std::span<const double> x, double extent) {
  return Vec{extent, x[1] - extent, x[2] - extent};
}

Vec cstr_outputs(std::span<const double> x) {
  if (x.size() != 3) throw ShapeError("cstr_outputs: expected (T, F_B, F_E)");
  const double k = kPreExponential * std::exp(-kActivationTemp / x[0]);
  const double conversion = k * kResidenceTime / (1.0 + k * kResidenceTime);
  const double limiting = std::min(x[1], x[2]);
  return cstr_outputs_for_extent(x, limiting * conversion);
}

Dataset cstr_generate(std::size_t n, std::uint64_t seed, double noise_std) {
  check_count(n, "cstr_generate");
  const TaskDef& def = task_definition(Task::cstr);
  std::mt19937_64 rng(seed);
  Mat x(n, def.n_inputs), y(n, def.n_outputs);
  for (std::size_t i = 0; i < n; ++i) {
    const Vec xi = sample_inputs(def, rng);
    const Vec yi = cstr_outputs(xi);
    std::copy(xi.begin(), xi.end(), x.row(i).begin());
    std::copy(yi.begin(), yi.end(), y.row(i).begin());
  }
  add_nullspace_noise(y, def.spec, noise_std, rng);
  return assemble(def, std::move(x), std::move(y), seed, noise_std);
}

Dataset plant_generate(std::size_t n, std::uint64_t seed, double noise_std) {
  check_count(n, "plant_generate");
  const TaskDef& def = task_definition(Task::plant);
  static const std::vector<SmoothSurface> surf = make_surfaces(5, 4, kPlantSurfaceSeed);
  const ProjectionParams balance = build_projection(def.spec);

  std::mt19937_64 rng(seed);
  Mat x(n, def.n_inputs), y(n, def.n_outputs);
  for (std::size_t i = 0; i < n;) {
    const Vec xi = sample_inputs(def, rng);
    const double net_feed = xi[0] + xi[1] + xi[2] - xi[3];
    if (!(net_feed > 0.0)) continue;
    const Vec u = normalized(def, xi);

    // Stream totals: dominant-feed affinities modulated by smooth surfaces,
    // rescaled to the net feed.
    const double dme = (0.55 * xi[0] + 0.10 * xi[1]) * (1.0 + 0.3 * surf[0](u));
    const double dee = (0.60 * xi[1] + 0.05 * xi[0]) * (1.0 + 0.3 * surf[2](u));
    const double water = (xi[2] + 0.35 * xi[0] + 0.30 * xi[1]) * (1.0 + 0.3 * surf[4](u));
    const Vec totals = split_by_shares(net_feed, std::array{dme, dee, water});

    Vec raw{totals[0], 0.0, totals[1], 0.0, totals[2]};
    Vec yi = apply_projection(balance, xi, raw);
    yi[1] = yi[0] * (0.85 + 0.14 * sigmoid(3.0 * surf[1](u)));
    yi[3] = yi[2] * (0.80 + 0.19 * sigmoid(3.0 * surf[3](u)));

    std::copy(xi.begin(), xi.end(), x.row(i).begin());
    std::copy(yi.begin(), yi.end(), y.row(i).begin());
    ++i;
  }
  add_nullspace_noise(y, def.spec, noise_std, rng);
  return assemble(def, std::move(x), std::move(y), seed, noise_std);
}

Dataset distillation_generate(std::size_t n, std::uint64_t seed, double noise_std) {
  check_count(n, "distillation_generate");
  const TaskDef& def = task_definition(Task::distillation);
  static const std::vector<SmoothSurface> surf = make_surfaces(10, 5, kDistillationSurfaceSeed);

  std::mt19937_64 rng(seed);
  Mat x(n, def.n_inputs), y(n, def.n_outputs);
  for (std::size_t i = 0; i < n; ++i) {
    const Vec xi = sample_inputs(def, rng);
    const Vec u = normalized(def, xi);

    // Column 1 distillate: mostly heptane, purity rising with reflux and solvent.
    const double purity1 = 2.0 + 1.5 * u[1] + 0.8 * u[0] + 0.6 * surf[0](u);
    const Vec c7 = split_by_shares(
        xi[2], std::array{std::exp(purity1), std::exp(0.5 * surf[1](u)),
                          std::exp(-1.5 + 0.7 * surf[2](u))});
    // Column 2 distillate: mostly toluene.
    const double purity2 = 1.8 + 1.6 * u[3] - 0.5 * u[2] + 0.6 * surf[3](u);
    const Vec tol = split_by_shares(
        xi[4], std::array{std::exp(purity2), std::exp(-0.3 + 0.5 * surf[4](u)),
                          std::exp(-1.2 + 0.7 * surf[5](u))});

    const double vapor1 = xi[2] * (1.0 + xi[1]);
    const double vapor2 = xi[4] * (1.0 + xi[3]);
    Vec yi(def.n_outputs);
    yi[0] = c7[0];
    yi[6] = c7[1];
    yi[7] = c7[2];
    yi[1] = tol[0];
    yi[8] = tol[1];
    yi[9] = tol[2];
    yi[2] = -vapor1 * (0.90 + 0.08 * surf[6](u));
    yi[3] = vapor1 * (1.05 + 0.08 * surf[7](u)) + 0.04 * xi[0];
    yi[4] = -vapor2 * (0.95 + 0.08 * surf[8](u));
    yi[5] = vapor2 * (1.10 + 0.08 * surf[9](u)) + 0.06 * xi[0] * (0.5 + u[3]);

    std::copy(xi.begin(), xi.end(), x.row(i).begin());
    std::copy(yi.begin(), yi.end(), y.row(i).begin());
  }
  add_nullspace_noise(y, def.spec, noise_std, rng);
  return assemble(def, std::move(x), std::move(y), seed, noise_std);
}

Dataset generate(Task task, std::size_t n, std::uint64_t seed, double noise_std) {
  switch (task) {
    case Task::cstr: return cstr_generate(n, seed, noise_std);
    case Task::plant: return plant_generate(n, seed, noise_std);
    case Task::distillation: return distillation_generate(n, seed, noise_std);
    case Task::custom: break;
  }
  throw ConfigError("generate: custom tasks cannot be synthesized");
}

Dataset fit_maxabs(const Dataset& ds) {
  Dataset out = ds;
  auto fit = [](Mat& m, Vec& scale, const std::vector<std::string>& names) {
    for (std::size_t j = 0; j < m.cols(); ++j) {
      double s = 0.0;
      for (std::size_t i = 0; i < m.rows(); ++i) s = std::max(s, std::abs(m(i, j)));
      if (!(s > 0.0)) {
        const std::string name = j < names.size() ? names[j] : std::to_string(j);
        throw ScaleError("fit_maxabs: column '" + name + "' is identically zero");
      }
      for (std::size_t i = 0; i < m.rows(); ++i) m(i, j) /= s;
      scale[j] *= s;
    }
  };
  fit(out.x, out.scale_x, out.x_names);
  fit(out.y, out.scale_y, out.y_names);
  return out;
}

Dataset unscale(const Dataset& ds) {
  Dataset out = ds;
  for (std::size_t i = 0; i < out.x.rows(); ++i) {
    for (std::size_t j = 0; j < out.x.cols(); ++j) out.x(i, j) *= ds.scale_x[j];
    for (std::size_t j = 0; j < out.y.cols(); ++j) out.y(i, j) *= ds.scale_y[j];
  }
  std::fill(out.scale_x.begin(), out.scale_x.end(), 1.0);
  std::fill(out.scale_y.begin(), out.scale_y.end(), 1.0);
  return out;
}

Dataset with_scales(const Dataset& ds, std::span<const double> scale_x,
                    std::span<const double> scale_y) {
  if (scale_x.size() != ds.x.cols() || scale_y.size() != ds.y.cols()) {
    throw ShapeError("with_scales: scale vectors do not match the dataset");
  }
  for (double s : scale_x)
    if (!(s > 0.0)) throw ScaleError("with_scales: scales must be positive");
  for (double s : scale_y)
    if (!(s > 0.0)) throw ScaleError("with_scales: scales must be positive");
  Dataset out = unscale(ds);
  for (std::size_t i = 0; i < out.x.rows(); ++i) {
    for (std::size_t j = 0; j < out.x.cols(); ++j) out.x(i, j) /= scale_x[j];
    for (std::size_t j = 0; j < out.y.cols(); ++j) out.y(i, j) /= scale_y[j];
  }
  out.scale_x.assign(scale_x.begin(), scale_x.end());
  out.scale_y.assign(scale_y.begin(), scale_y.end());
  return out;
}

FilterResult filter_feasible(const Dataset& ds, double tol) {
  if (!(tol > 0.0)) throw ConfigError("filter_feasible: tolerance must be positive");
  const ConstraintSpec spec = ds.working_spec();
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (violation(spec, ds.x.row(i), ds.y.row(i)) <= tol) keep.push_back(i);
  }
  if (keep.empty()) {
    throw DataError("filter_feasible: all " + std::to_string(ds.size()) +
                    " rows violate the tolerance " + fmt17(tol));
  }
  FilterResult r{ds, keep.size(), ds.size() - keep.size()};
  if (r.dropped == 0) return r;
  r.data.x = Mat(keep.size(), ds.x.cols());
  r.data.y = Mat(keep.size(), ds.y.cols());
  for (std::size_t k = 0; k < keep.size(); ++k) {
    std::ranges::copy(ds.x.row(keep[k]), r.data.x.row(k).begin());
    std::ranges::copy(ds.y.row(keep[k]), r.data.y.row(k).begin());
  }
  return r;
}

std::filesystem::path manifest_path_for(const std::filesystem::path& csv) {
  std::filesystem::path p = csv;
  p.replace_extension(".manifest.json");
  return p;
}

void write_csv(const std::filesystem::path& csv, const Dataset& ds) {
  {
    std::ofstream out(csv);
    if (!out) throw PathError("cannot write " + csv.string());
    bool first = true;
    for (const auto* names : {&ds.x_names, &ds.y_names}) {
      for (const auto& n : *names) {
        out << (first ? "" : ",") << n;
        first = false;
      }
    }
    out << '\n';
    for (std::size_t i = 0; i < ds.size(); ++i) {
      first = true;
      for (const Mat* m : {&ds.x, &ds.y}) {
        for (double v : m->row(i)) {
          out << (first ? "" : ",") << fmt17(v);
          first = false;
        }
      }
      out << '\n';
    }
    if (!out) throw PathError("failed writing " + csv.string());
  }

  nlohmann::ordered_json j;
  j["format"] = "kkthpinn-dataset";
  j["version"] = 1;
  j["task"] = ds.task;
  j["samples"] = ds.size();
  j["x_names"] = ds.x_names;
  j["y_names"] = ds.y_names;
  j["scale_x"] = ds.scale_x;
  j["scale_y"] = ds.scale_y;
  j["tolerance"] = ds.tolerance;
  j["seed"] = ds.seed;
  j["noise_std"] = ds.noise_std;
  j["constraints"] = format_spec(ds.spec);
  const auto mpath = manifest_path_for(csv);
  std::ofstream mout(mpath);
  if (!mout) throw PathError("cannot write " + mpath.string());
  mout << j.dump(2) << '\n';
}

Dataset read_csv(const std::filesystem::path& csv) {
  const auto mpath = manifest_path_for(csv);
  std::ifstream min(mpath);
  if (!min) throw PathError("missing manifest " + mpath.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(min);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("manifest " + mpath.string() + ": " + e.what());
  }

  auto need = [&](const char* key) -> const nlohmann::json& {
    if (!j.contains(key)) throw SchemaError("manifest " + mpath.string() + ": missing '" + key + "'");
    return j.at(key);
  };
  Dataset ds{need("task").get<std::string>(),
             Mat(),
             Mat(),
             parse_spec(need("constraints").get<std::string>()),
             need("scale_x").get<Vec>(),
             need("scale_y").get<Vec>(),
             need("x_names").get<std::vector<std::string>>(),
             need("y_names").get<std::vector<std::string>>(),
             need("tolerance").get<double>(),
             need("seed").get<std::uint64_t>(),
             need("noise_std").get<double>()};
  const std::size_t n0 = ds.x_names.size();
  const std::size_t nl = ds.y_names.size();
  if (n0 != ds.spec.num_inputs() || nl != ds.spec.num_outputs() || ds.scale_x.size() != n0 ||
      ds.scale_y.size() != nl) {
    throw SchemaError("manifest " + mpath.string() + ": names, scales and constraints disagree");
  }

  std::ifstream in(csv);
  if (!in) throw PathError("cannot open " + csv.string());
  std::string line;
  if (!std::getline(in, line)) throw ParseError(csv.string() + ": empty file");
  auto split = [](const std::string& s) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ss(s);
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!s.empty() && s.back() == ',') cells.emplace_back();
    return cells;
  };

  std::vector<std::string> expected = ds.x_names;
  expected.insert(expected.end(), ds.y_names.begin(), ds.y_names.end());
  const std::vector<std::string> header = split(line);
  for (const auto& name : expected) {
    if (std::find(header.begin(), header.end(), name) == header.end()) {
      throw SchemaError(csv.string() + ": missing column '" + name + "'");
    }
  }
  if (header != expected) {
    throw SchemaError(csv.string() + ": header does not match manifest column order");
  }

  std::vector<double> xs, ys;
  std::size_t rows = 0;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cells = split(line);
    if (cells.size() != n0 + nl) {
      throw ParseError(csv.string() + " line " + std::to_string(line_no) + ": expected " +
                       std::to_string(n0 + nl) + " fields, found " + std::to_string(cells.size()));
    }
    for (std::size_t c = 0; c < cells.size(); ++c) {
      char* end = nullptr;
      const double v = std::strtod(cells[c].c_str(), &end);
      if (cells[c].empty() || *end != '\0' || !std::isfinite(v)) {
        throw ParseError(csv.string() + " line " + std::to_string(line_no) + ": bad value '" +
                         cells[c] + "' in column '" + expected[c] + "'");
      }
      (c < n0 ? xs : ys).push_back(v);
    }
    ++rows;
  }
  if (j.contains("samples") && j["samples"].get<std::size_t>() != rows) {
    throw SchemaError(csv.string() + ": manifest lists " +
                      std::to_string(j["samples"].get<std::size_t>()) + " samples, file has " +
                      std::to_string(rows));
  }
  ds.x = Mat(rows, n0, std::move(xs));
  ds.y = Mat(rows, nl, std::move(ys));
  return ds;
}

}  // namespace kkthpinn
