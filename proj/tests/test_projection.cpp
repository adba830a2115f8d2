#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "kkthpinn/data.hpp"
#include "kkthpinn/error.hpp"
#include "kkthpinn/projection.hpp"
#include "oracles.hpp"

using namespace kkthpinn;

namespace {

ConstraintSpec cstr_spec() { return task_definition(Task::cstr).spec; }

struct Instance {
  ConstraintSpec spec;
  Vec x;
  Vec y_hat;
};

Instance random_instance(std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> pm(1, 3), pnl(3, 8), pn0(0, 4);
  const std::size_t m = pm(rng), nl = pnl(rng), n0 = pn0(rng);
  ConstraintSpec s(oracle::random_mat(m, n0, rng), oracle::random_mat(m, nl, rng),
                   oracle::random_vec(m, rng));
  return {std::move(s), oracle::random_vec(n0, rng), oracle::random_vec(nl, rng, 3.0)};
}

double max_diff(const Vec& a, const Vec& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

}  // namespace

TEST_CASE("ConstraintSpec validation") {
  CHECK_THROWS_AS(ConstraintSpec(Mat(0, 2), Mat(0, 3), Vec{}), ConfigError);
  CHECK_THROWS_AS(ConstraintSpec(Mat(2, 2), Mat(1, 3), Vec{0}), ShapeError);
  CHECK_THROWS_AS(ConstraintSpec(Mat(3, 1), Mat(3, 2), Vec{0, 0, 0}), ConfigError);
  try {
    ConstraintSpec(Mat(2, 0), Mat{{1, 1, 0}, {-2, -2, 0}}, Vec{0, 0});
    FAIL("expected SingularityError");
  } catch (const SingularityError& e) {
    CHECK(std::string(e.what()).find("dependent") != std::string::npos);
  }
  // Output-only constraints are legal.
  CHECK_NOTHROW(ConstraintSpec(Mat(1, 0), Mat{{1, 1}}, Vec{1}));
}

TEST_CASE("build_projection") {
  SUBCASE("single balance over two outputs") {
    // Hand-solved KKT system: B* = I − ½·11ᵀ, b* = ½·1.
    const ProjectionParams p = build_projection(ConstraintSpec(Mat(1, 0), Mat{{1, 1}}, Vec{1}));
    CHECK(max_abs(p.b_star - Mat{{0.5, -0.5}, {-0.5, 0.5}}) <= 1e-15);
    CHECK(p.bias_star[0] == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(p.bias_star[1] == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(p.a_star.cols() == 0);
  }
  SUBCASE("B = I pins every output") {
    const Mat a{{1, 2}, {3, -4}, {0.5, 0}};
    const ProjectionParams p = build_projection(ConstraintSpec(a, Mat::identity(3), Vec{1, 2, 3}));
    CHECK(max_abs(p.b_star) <= 1e-15);
    CHECK(max_diff(p.bias_star, Vec{1, 2, 3}) <= 1e-15);
    CHECK(max_abs(p.a_star + a) <= 1e-15);
  }
  SUBCASE("CSTR identities") {
    const ConstraintSpec s = cstr_spec();
    const ProjectionParams p = build_projection(s);
    CHECK(max_abs(matmul(s.b(), p.b_star)) <= 1e-12);
    CHECK(max_abs(matmul(s.b(), p.a_star) + s.a()) <= 1e-12);
    CHECK(max_diff(matvec(s.b(), p.bias_star), s.rhs()) <= 1e-12);
    CHECK(max_abs(matmul(p.b_star, p.b_star) - p.b_star) <= 1e-12);
    CHECK(max_abs(p.b_star - transpose(p.b_star)) == 0.0);
  }
}

TEST_CASE("apply_projection") {
  SUBCASE("feasible CSTR point is a fixed point") {
    const ProjectionParams p = build_projection(cstr_spec());
    const Vec y{0.5, 1.5, 0.5};
    CHECK(max_diff(apply_projection(p, Vec{600, 2, 1}, y), y) <= 1e-12);
  }
  SUBCASE("deficit split symmetrically") {
    const ProjectionParams p = build_projection(ConstraintSpec(Mat(1, 0), Mat{{1, 1}}, Vec{1}));
    const Vec y = apply_projection(p, Vec{}, Vec{0.3, 0.3});
    CHECK(max_diff(y, Vec{0.5, 0.5}) <= 1e-15);
  }
  SUBCASE("matches the KKT-system oracle") {
    std::mt19937_64 rng(99);
    for (int t = 0; t < 300; ++t) {
      const Instance in = random_instance(rng);
      const Vec ref = oracle::kkt_projection(in.spec.a(), in.spec.b(), in.spec.rhs(), in.x, in.y_hat);
      CHECK(max_diff(apply_projection(build_projection(in.spec), in.x, in.y_hat), ref) <= 1e-10);
    }
  }
  SUBCASE("batch form agrees with the per-sample form") {
    std::mt19937_64 rng(4);
    const ProjectionParams p = build_projection(cstr_spec());
    const Mat x = oracle::random_mat(6, 3, rng), y = oracle::random_mat(6, 3, rng);
    const Mat out = apply_projection(p, x, y);
    for (std::size_t i = 0; i < 6; ++i) {
      const Vec r = apply_projection(p, x.row(i), y.row(i));
      CHECK(max_diff(Vec(out.row(i).begin(), out.row(i).end()), r) == 0.0);
    }
  }
  SUBCASE("shape errors") {
    const ProjectionParams p = build_projection(cstr_spec());
    CHECK_THROWS_AS(apply_projection(p, Vec{1, 2}, Vec{1, 2, 3}), ShapeError);
    CHECK_THROWS_AS(apply_projection(p, Vec{1, 2, 3}, Vec{1, 2}), ShapeError);
  }
}

TEST_CASE("projection_backward") {
  SUBCASE("row space of B is annihilated") {
    const ConstraintSpec s = cstr_spec();
    const ProjectionParams p = build_projection(s);
    const Vec g = matvec(transpose(s.b()), Vec{0.7, -1.3});
    CHECK(max_abs(projection_backward(p, g)) <= 1e-10);
  }
  SUBCASE("B = I gives zero") {
    const ProjectionParams p = build_projection(ConstraintSpec(Mat(2, 1), Mat::identity(2), Vec{0, 0}));
    CHECK(max_abs(projection_backward(p, Vec{3.0, -8.0})) == 0.0);
  }
  SUBCASE("matches central-difference Jacobian-vector products") {
    std::mt19937_64 rng(17);
    constexpr double h = 1e-6;
    for (int t = 0; t < 50; ++t) {
      const Instance in = random_instance(rng);
      const ProjectionParams p = build_projection(in.spec);
      const Vec g = oracle::random_vec(in.y_hat.size(), rng);
      const Vec analytic = projection_backward(p, g);
      // d/dŷ_j of gᵀ·proj(ŷ)
      for (std::size_t j = 0; j < in.y_hat.size(); ++j) {
        Vec up = in.y_hat, down = in.y_hat;
        up[j] += h;
        down[j] -= h;
        const Vec pu = apply_projection(p, in.x, up), pd = apply_projection(p, in.x, down);
        double fd = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) fd += g[i] * (pu[i] - pd[i]) / (2 * h);
        CHECK(oracle::rel_error(analytic[j], fd, 1e-2) <= 1e-6);
      }
    }
  }
  SUBCASE("shape error") {
    CHECK_THROWS_AS(projection_backward(build_projection(cstr_spec()), Vec{1.0}), ShapeError);
  }
}

TEST_CASE("violation") {
  const ConstraintSpec s = cstr_spec();
  CHECK(violation(s, Vec{640, 2, 1}, Vec{0.5, 1.5, 0.5}) == 0.0);
  // Only the consumption balance is off, by 0.1.
  CHECK(violation(s, Vec{640, 2, 1}, Vec{0.5, 1.5, 0.6}) == doctest::Approx(0.1).epsilon(1e-12));
  const ProjectionParams p = build_projection(s);
  CHECK(violation(s, Vec{640, 2, 1}, apply_projection(p, Vec{640, 2, 1}, Vec{3, -1, 9})) <= 1e-10);
  CHECK_THROWS_AS(violation(s, Vec{1, 2}, Vec{1, 2, 3}), ShapeError);
}

TEST_CASE("rescale_constraints") {
  const ConstraintSpec s = cstr_spec();
  SUBCASE("unit scales are the identity") {
    CHECK(rescale_constraints(s, Vec{1, 1, 1}, Vec{1, 1, 1}) == s);
  }
  SUBCASE("doubling output scales doubles B, violation invariant") {
    const ConstraintSpec r = rescale_constraints(s, Vec{1, 1, 1}, Vec{2, 2, 2});
    CHECK(r.b() == 2.0 * s.b());
    const Vec x{650, 2, 1}, y{0.4, 1.5, 0.9};
    const Vec y_scaled{0.2, 0.75, 0.45};
    CHECK(violation(r, x, y_scaled) == doctest::Approx(violation(s, x, y)).epsilon(1e-14));
  }
  SUBCASE("projection in scaled units is feasible after unscaling") {
    const Dataset raw = cstr_generate(200, 3);
    const Dataset scaled = fit_maxabs(raw);
    const ProjectionParams p = build_projection(scaled.working_spec());
    std::mt19937_64 rng(8);
    for (std::size_t i = 0; i < scaled.size(); ++i) {
      Vec noisy(scaled.y.row(i).begin(), scaled.y.row(i).end());
      for (double& v : noisy) v += 0.1 * oracle::random_vec(1, rng)[0];
      const Vec yt = apply_projection(p, scaled.x.row(i), noisy);
      Vec y(3);
      for (std::size_t j = 0; j < 3; ++j) y[j] = yt[j] * scaled.scale_y[j];
      CHECK(violation(s, raw.x.row(i), y) <= 1e-10);
    }
  }
  SUBCASE("non-positive scales rejected") {
    CHECK_THROWS_AS(rescale_constraints(s, Vec{1, 0, 1}, Vec{1, 1, 1}), ScaleError);
    CHECK_THROWS_AS(rescale_constraints(s, Vec{1, 1, 1}, Vec{1, -2, 1}), ScaleError);
  }
}

TEST_CASE("projection properties on random instances") {
  std::mt19937_64 rng(314);
  for (int t = 0; t < 200; ++t) {
    const Instance in = random_instance(rng);
    const ProjectionParams p = build_projection(in.spec);
    const Vec y = apply_projection(p, in.x, in.y_hat);

    CHECK(max_diff(apply_projection(p, in.x, y), y) <= 1e-10);
    CHECK(violation(in.spec, in.x, y) <= 1e-10 * (1.0 + max_abs(in.spec.rhs())));
    CHECK(max_abs(p.b_star - transpose(p.b_star)) <= 1e-10);
    CHECK(max_abs(matmul(p.b_star, p.b_star) - p.b_star) <= 1e-10);
  }

  // Distance minimality against feasible points produced by the oracle.
  const Instance in = random_instance(rng);
  const ProjectionParams p = build_projection(in.spec);
  const Vec y = apply_projection(p, in.x, in.y_hat);
  double best = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) best += (y[i] - in.y_hat[i]) * (y[i] - in.y_hat[i]);
  best = std::sqrt(best);
  for (int k = 0; k < 200; ++k) {
    const Vec yf = oracle::kkt_projection(in.spec.a(), in.spec.b(), in.spec.rhs(), in.x,
                                          oracle::random_vec(y.size(), rng, 5.0));
    double d = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) d += (yf[i] - in.y_hat[i]) * (yf[i] - in.y_hat[i]);
    CHECK(best <= std::sqrt(d) + 1e-9);
  }
}

TEST_CASE("constraint text block") {
  const ConstraintSpec s = task_definition(Task::distillation).spec;
  CHECK(parse_spec(format_spec(s)) == s);

  std::mt19937_64 rng(1);
  const ConstraintSpec r(oracle::random_mat(2, 3, rng), oracle::random_mat(2, 4, rng),
                         oracle::random_vec(2, rng));
  CHECK(parse_spec(format_spec(r)) == r);

  CHECK_THROWS_AS(parse_spec("m 1 1 2\nA 1\nB 1 x\nb 0\n"), ParseError);
  CHECK_THROWS_AS(parse_spec("m 1 1 2\nA 1\nb 0\n"), ParseError);
}
