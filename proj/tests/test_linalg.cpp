#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "kkthpinn/error.hpp"
#include "kkthpinn/linalg.hpp"
#include "oracles.hpp"

using namespace kkthpinn;

TEST_CASE("matmul") {
  SUBCASE("identity is neutral") {
    const Mat m{{1.5, -2.0}, {0.25, 7.0}};
    CHECK(matmul(Mat::identity(2), m) == m);
    CHECK(matmul(m, Mat::identity(2)) == m);
  }
  SUBCASE("hand example") {
    CHECK(matmul(Mat{{1, 2}, {3, 4}}, Mat{{0}, {1}}) == Mat{{2}, {4}});
  }
  SUBCASE("matches naive triple loop") {
    std::mt19937_64 rng(11);
    const Mat a = oracle::random_mat(5, 3, rng);
    const Mat b = oracle::random_mat(3, 4, rng);
    CHECK(max_abs(matmul(a, b) - oracle::naive_matmul(a, b)) <= 1e-14);
  }
  SUBCASE("dimension mismatch") {
    CHECK_THROWS_AS(matmul(Mat(2, 3), Mat(2, 3)), ShapeError);
  }
}

TEST_CASE("transpose") {
  std::mt19937_64 rng(3);
  const Mat m = oracle::random_mat(4, 6, rng);
  CHECK(transpose(transpose(m)) == m);
  const Mat t = transpose(Mat{{1, 2, 3}});
  CHECK(t.rows() == 3);
  CHECK(t.cols() == 1);
  CHECK(t == Mat{{1}, {2}, {3}});
  const Mat s = m.empty() ? m : matmul(m, transpose(m));
  CHECK(transpose(s) == s);
}

TEST_CASE("spd_solve") {
  SUBCASE("identity system") {
    const Mat rhs{{1, 2}, {3, 4}, {5, 6}};
    CHECK(spd_solve(Mat::identity(3), rhs) == rhs);
  }
  SUBCASE("scalar") { CHECK(spd_solve(Mat{{2}}, Mat{{4}})(0, 0) == doctest::Approx(2.0).epsilon(1e-15)); }
  SUBCASE("recovers a known solution for B·Bᵀ") {
    std::mt19937_64 rng(5);
    for (int t = 0; t < 20; ++t) {
      const Mat b = oracle::random_mat(3, 7, rng);
      const Mat s = matmul(b, transpose(b));
      const Mat x0 = oracle::random_mat(3, 2, rng);
      CHECK(max_abs(spd_solve(s, matmul(s, x0)) - x0) <= 1e-9);
    }
  }
  SUBCASE("rank deficiency names the failing pivot") {
    const Mat b{{1, 2, 3}, {2, 4, 6}};
    try {
      spd_solve(matmul(b, transpose(b)), Mat::identity(2));
      FAIL("expected SingularityError");
    } catch (const SingularityError& e) {
      CHECK(e.pivot() == 1);
      CHECK(std::string(e.what()).find("index 1") != std::string::npos);
    }
  }
  SUBCASE("shape errors") {
    CHECK_THROWS_AS(spd_solve(Mat(2, 3), Mat(2, 1)), ShapeError);
    CHECK_THROWS_AS(spd_solve(Mat::identity(2), Mat(3, 1)), ShapeError);
  }
}

TEST_CASE("algebraic properties on random inputs") {
  std::mt19937_64 rng(2024);
  for (int t = 0; t < 50; ++t) {
    const Mat a = oracle::random_mat(4, 5, rng);
    const Mat b = oracle::random_mat(5, 3, rng);
    const Mat c = oracle::random_mat(3, 6, rng);
    const Mat left = matmul(matmul(a, b), c);
    const Mat right = matmul(a, matmul(b, c));
    CHECK(max_abs(left - right) <= 1e-10 * std::max(1.0, max_abs(left)));
    CHECK(max_abs(transpose(matmul(a, b)) - matmul(transpose(b), transpose(a))) <= 1e-14);
  }
  for (std::size_t n = 1; n <= 20; ++n) {
    const Mat g = oracle::random_mat(n, n + 3, rng);
    const Mat s = matmul(g, transpose(g));
    const Mat rhs = oracle::random_mat(n, 2, rng);
    const Mat back = matmul(s, spd_solve(s, rhs));
    CHECK(max_abs(back - rhs) <= 1e-10 * max_abs(rhs));
  }
}
