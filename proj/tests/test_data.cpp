#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "kkthpinn/data.hpp"
#include "kkthpinn/error.hpp"
#include "kkthpinn/projection.hpp"

using namespace kkthpinn;
namespace fs = std::filesystem;

namespace {

double max_violation(const Dataset& d) {
  const ConstraintSpec s = d.working_spec();
  double m = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) m = std::max(m, violation(s, d.x.row(i), d.y.row(i)));
  return m;
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("task definitions") {
  CHECK(parse_task("cstr") == Task::cstr);
  CHECK(parse_task("distillation") == Task::distillation);
  CHECK_THROWS_AS(parse_task("reactor"), ConfigError);
  const TaskDef& c = task_definition(Task::cstr);
  CHECK(c.n_inputs == 3);
  CHECK(c.n_outputs == 3);
  CHECK(c.hidden_width == 12);
  CHECK(task_definition(Task::plant).hidden_width == 32);
  CHECK(task_definition(Task::plant).spec.constrained_outputs() ==
        std::vector<bool>{true, false, true, false, true});
  CHECK(task_definition(Task::distillation).n_outputs == 10);
  CHECK_THROWS_AS(task_definition(Task::custom), ConfigError);
}

TEST_CASE("CSTR generator") {
  const ConstraintSpec s = task_definition(Task::cstr).spec;
  SUBCASE("zero extent") {
    const Vec y = cstr_outputs_for_extent(Vec{600, 2.5, 1.2}, 0.0);
    CHECK(y == Vec{0, 2.5, 1.2});
    CHECK(violation(s, Vec{600, 2.5, 1.2}, y) == 0.0);
  }
  SUBCASE("hand substitution") {
    CHECK(cstr_outputs_for_extent(Vec{640, 2, 1}, 0.5) == Vec{0.5, 1.5, 0.5});
  }
  SUBCASE("extent formula") {
    const Vec x{650, 1.5, 2.5};
    const double k = 5e4 * std::exp(-6000.0 / 650.0);
    const double xi = 1.5 * k / (1.0 + k);
    const Vec y = cstr_outputs(x);
    CHECK(y[0] == doctest::Approx(xi).epsilon(1e-14));
    CHECK(y[1] == doctest::Approx(1.5 - xi).epsilon(1e-14));
    CHECK(y[2] == doctest::Approx(2.5 - xi).epsilon(1e-14));
  }
  SUBCASE("rows feasible, inputs in range") {
    for (double noise : {0.0, 0.05}) {
      const Dataset d = cstr_generate(500, 13, noise);
      CHECK(d.size() == 500);
      CHECK(max_violation(d) <= 1e-12);
      for (std::size_t i = 0; i < d.size(); ++i) {
        CHECK(d.x(i, 0) >= 550.0);
        CHECK(d.x(i, 0) <= 700.0);
        CHECK(d.x(i, 1) >= 0.5);
        CHECK(d.x(i, 2) <= 3.0);
      }
    }
  }
  SUBCASE("noise moves outputs") {
    CHECK(cstr_generate(50, 13, 0.05).y != cstr_generate(50, 13, 0.0).y);
    CHECK(cstr_generate(50, 13, 0.05).x == cstr_generate(50, 13, 0.0).x);
  }
  CHECK_THROWS_AS(cstr_generate(0, 1), ConfigError);
}

TEST_CASE("plant generator") {
  SUBCASE("toy projection of totals") {
    const ConstraintSpec s = task_definition(Task::plant).spec;
    const ProjectionParams p = build_projection(s);
    const Vec x{1, 1, 1, 1};
    const Vec y = apply_projection(p, x, Vec{1, 0.5, 0.5, 0.2, 0.5});
    CHECK(std::abs((x[0] + x[1] + x[2] - x[3]) - (y[0] + y[2] + y[4])) <= 1e-14);
  }
  SUBCASE("rows feasible and ordered") {
    for (double noise : {0.0, 0.5}) {
      const Dataset d = plant_generate(400, 21, noise);
      CHECK(d.size() == 400);
      CHECK(max_violation(d) <= 1e-12 * 400.0);
      for (std::size_t i = 0; i < d.size(); ++i) {
        CHECK(d.y(i, 1) <= d.y(i, 0));
        CHECK(d.y(i, 3) <= d.y(i, 2));
      }
    }
  }
}

TEST_CASE("distillation generator") {
  SUBCASE("boundary share") {
    const Vec parts = split_by_shares(4.5, Vec{1, 0, 0});
    CHECK(parts == Vec{4.5, 0, 0});
    // y1 = x3, y7 = y8 = 0 satisfies the first balance row.
    const ConstraintSpec s = task_definition(Task::distillation).spec;
    const Vec x{200, 3, 4.5, 2, 50};
    Vec y(10, 0.0);
    y[0] = parts[0];
    y[6] = parts[1];
    y[7] = parts[2];
    CHECK(s.residual(x, y)[0] == 0.0);
  }
  SUBCASE("shares sum back to the total") {
    const Vec parts = split_by_shares(10.0, Vec{0.3, 0.3, 0.4});
    CHECK(parts[0] + parts[1] + parts[2] == 10.0);
    CHECK_THROWS_AS(split_by_shares(1.0, Vec{0, 0}), DataError);
    CHECK_THROWS_AS(split_by_shares(1.0, Vec{1, -1}), DataError);
  }
  SUBCASE("direct substitution into both rows") {
    const Dataset d = distillation_generate(300, 5);
    CHECK(d.size() == 300);
    for (std::size_t i = 0; i < d.size(); ++i) {
      const auto x = d.x.row(i);
      const auto y = d.y.row(i);
      CHECK(std::abs(x[2] - y[0] - y[6] - y[7]) <= 1e-12);
      CHECK(std::abs(x[4] - y[1] - y[8] - y[9]) <= 1e-12 * 50);
    }
  }
  CHECK_THROWS_AS(distillation_generate(0, 1), ConfigError);
}

TEST_CASE("generator determinism and default tolerances") {
  for (Task t : {Task::cstr, Task::plant, Task::distillation}) {
    const Dataset a = generate(t, 200, 3, 0.01), b = generate(t, 200, 3, 0.01);
    CHECK(a.x == b.x);
    CHECK(a.y == b.y);
    CHECK(generate(t, 200, 4).x != a.x);
  }
  CHECK(task_definition(Task::cstr).tolerance == 1e-8);
  CHECK(task_definition(Task::plant).tolerance == 1e-6);
  CHECK(task_definition(Task::distillation).tolerance == 1e-8);
  CHECK(task_definition(Task::cstr).default_samples == 1500);
  CHECK(task_definition(Task::plant).default_samples == 1200);
  CHECK(task_definition(Task::distillation).default_samples == 5000);
}

TEST_CASE("max-abs scaling") {
  SUBCASE("definition") {
    Dataset d = cstr_generate(3, 1);
    d.y = Mat{{2, 1, 1}, {-4, 1, 1}, {1, 1, 1}};
    const Dataset s = fit_maxabs(d);
    CHECK(s.scale_y[0] == 4.0);
    CHECK(s.y(0, 0) == 0.5);
    CHECK(s.y(1, 0) == -1.0);
    CHECK(s.y(2, 0) == 0.25);
  }
  SUBCASE("refit is the identity") {
    const Dataset s = fit_maxabs(plant_generate(100, 2));
    const Dataset again = fit_maxabs(s);
    for (std::size_t j = 0; j < s.scale_x.size(); ++j)
      CHECK(std::abs(again.scale_x[j] - s.scale_x[j]) <= 1e-15 * s.scale_x[j]);
    CHECK(again.x == s.x);
  }
  SUBCASE("round trip") {
    const Dataset d = distillation_generate(100, 2);
    const Dataset back = unscale(fit_maxabs(d));
    CHECK(max_abs(back.x - d.x) <= 1e-14 * max_abs(d.x));
    CHECK(max_abs(back.y - d.y) <= 1e-14 * max_abs(d.y));
    for (double s : back.scale_y) CHECK(s == 1.0);
  }
  SUBCASE("feasibility survives scaling") {
    for (Task t : {Task::cstr, Task::plant, Task::distillation}) {
      const Dataset d = generate(t, 200, 8);
      CHECK(max_violation(fit_maxabs(d)) <= 1e-12 * 200.0);
    }
  }
  SUBCASE("applying foreign scales") {
    const Dataset a = fit_maxabs(cstr_generate(100, 1));
    const Dataset b = with_scales(cstr_generate(50, 2), a.scale_x, a.scale_y);
    CHECK(b.scale_y == a.scale_y);
    CHECK(max_violation(b) <= 1e-12);
    CHECK_THROWS_AS(with_scales(b, Vec{1, 1}, a.scale_y), ShapeError);
  }
  SUBCASE("all-zero column") {
    Dataset d = cstr_generate(5, 1);
    for (std::size_t i = 0; i < 5; ++i) d.y(i, 2) = 0.0;
    try {
      fit_maxabs(d);
      FAIL("expected ScaleError");
    } catch (const ScaleError& e) {
      CHECK(std::string(e.what()).find("y3") != std::string::npos);
    }
  }
}

TEST_CASE("filter_feasible") {
  const Dataset d = cstr_generate(50, 4);
  const double tol = 1e-8;
  CHECK(filter_feasible(d, tol).retained == 50);

  Dataset bad = d;
  const ConstraintSpec s = d.working_spec();
  const double norm = std::sqrt(2.0);
  for (std::size_t j = 0; j < 3; ++j) bad.y(17, j) += 10 * tol * s.b()(0, j) / norm;
  const FilterResult r = filter_feasible(bad, tol);
  CHECK(r.retained == 49);
  CHECK(r.dropped == 1);
  CHECK(r.data.x.row(17)[0] == d.x.row(18)[0]);

  CHECK(filter_feasible(bad, 1e300).retained == 50);
  CHECK_THROWS_AS(filter_feasible(bad, 0.0), ConfigError);
  for (std::size_t i = 0; i < bad.size(); ++i) bad.y(i, 0) += 1.0;
  CHECK_THROWS_AS(filter_feasible(bad, tol), DataError);
}

TEST_CASE("CSV files") {
  TempDir dir("kkthpinn_test_data");
  const fs::path csv = dir.path / "cstr.csv";
  const Dataset d = fit_maxabs(cstr_generate(100, 9, 0.01));

  SUBCASE("round trip") {
    write_csv(csv, d);
    CHECK(fs::exists(manifest_path_for(csv)));
    CHECK(manifest_path_for(csv).filename() == "cstr.manifest.json");
    const Dataset back = read_csv(csv);
    CHECK(max_abs(back.x - d.x) <= 1e-15);
    CHECK(max_abs(back.y - d.y) <= 1e-15);
    CHECK(back.scale_x == d.scale_x);
    CHECK(back.scale_y == d.scale_y);
    CHECK(back.spec == d.spec);
    CHECK(back.task == "cstr");
    CHECK(back.seed == 9);
  }
  SUBCASE("manifest constraints rebuild the projection") {
    write_csv(csv, d);
    const ConstraintSpec s = read_csv(csv).working_spec();
    const ProjectionParams p = build_projection(s);
    CHECK(max_abs(matmul(s.b(), p.b_star)) <= 1e-12);
    CHECK(max_abs(matmul(s.b(), p.a_star) + s.a()) <= 1e-12);
    CHECK(max_abs(matmul(p.b_star, p.b_star) - p.b_star) <= 1e-12);
  }
  SUBCASE("missing column") {
    write_csv(csv, d);
    std::string text = slurp(csv);
    text.replace(text.find("y2"), 2, "zz");
    std::ofstream(csv) << text;
    try {
      read_csv(csv);
      FAIL("expected SchemaError");
    } catch (const SchemaError& e) {
      CHECK(std::string(e.what()).find("'y2'") != std::string::npos);
    }
  }
  SUBCASE("malformed row") {
    write_csv(csv, d);
    std::string text = slurp(csv);
    std::size_t pos = 0;
    for (int line = 0; line < 4; ++line) pos = text.find('\n', pos) + 1;  // start of line 5
    text.insert(pos, "abc");
    std::ofstream(csv) << text;
    try {
      read_csv(csv);
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(std::string(e.what()).find("line 5") != std::string::npos);
    }
  }
  SUBCASE("missing manifest") {
    write_csv(csv, d);
    fs::remove(manifest_path_for(csv));
    CHECK_THROWS_AS(read_csv(csv), PathError);
  }
}
