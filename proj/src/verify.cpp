#include "kkthpinn/verify.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>

#include "kkthpinn/error.hpp"
#include "kkthpinn/network.hpp"
#include "kkthpinn/projection.hpp"
#include "kkthpinn/training.hpp"

namespace kkthpinn {

namespace {

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", v);
  return buf;
}

Mat random_mat(std::size_t r, std::size_t c, std::mt19937_64& rng) {
  std::normal_distribution<double> d(0.0, 1.0);
  Mat m(r, c);
  for (double& v : m.data()) v = d(rng);
  return m;
}

Vec random_vec(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> d(0.0, 1.0);
  Vec v(n);
  for (double& x : v) x = d(rng);
  return v;
}

ConstraintSpec random_spec(std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> pick_m(1, 3), pick_nl(3, 8), pick_n0(0, 5);
  const std::size_t m = pick_m(rng), nl = pick_nl(rng), n0 = pick_n0(rng);
  return ConstraintSpec(random_mat(m, n0, rng), random_mat(m, nl, rng), random_vec(m, rng));
}

// Gaussian elimination with partial pivoting on [[I, Bᵀ], [B, 0]]·[y; λ] = [ŷ; b − A·x].
Vec kkt_system_solve(const ConstraintSpec& s, std::span<const double> x,
                     std::span<const double> y_hat) {
  const std::size_t nl = s.num_outputs(), m = s.num_constraints(), n = nl + m;
  Mat k(n, n + 1);
  for (std::size_t i = 0; i < nl; ++i) {
    k(i, i) = 1.0;
    k(i, n) = y_hat[i];
  }
  const Vec ax = s.num_inputs() ? matvec(s.a(), x) : Vec(m, 0.0);
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t j = 0; j < nl; ++j) {
      k(nl + r, j) = s.b()(r, j);
      k(j, nl + r) = s.b()(r, j);
    }
    k(nl + r, n) = s.rhs()[r] - ax[r];
  }
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < n; ++r)
      if (std::abs(k(r, c)) > std::abs(k(piv, c))) piv = r;
    if (piv != c)
      for (std::size_t j = 0; j <= n; ++j) std::swap(k(c, j), k(piv, j));
    for (std::size_t r = c + 1; r < n; ++r) {
      const double f = k(r, c) / k(c, c);
      for (std::size_t j = c; j <= n; ++j) k(r, j) -= f * k(c, j);
    }
  }
  Vec sol(n);
  for (std::size_t i = n; i-- > 0;) {
    double v = k(i, n);
    for (std::size_t j = i + 1; j < n; ++j) v -= k(i, j) * sol[j];
    sol[i] = v / k(i, i);
  }
  sol.resize(nl);
  return sol;
}

double identity_error(const ConstraintSpec& s, const ProjectionParams& p) {
  const Mat& b = s.b();
  double err = max_abs(matmul(b, p.b_star));
  if (s.num_inputs()) err = std::max(err, max_abs(matmul(b, p.a_star) + s.a()));
  const Vec bb = matvec(b, p.bias_star);
  for (std::size_t i = 0; i < bb.size(); ++i) err = std::max(err, std::abs(bb[i] - s.rhs()[i]));
  err = std::max(err, max_abs(p.b_star - transpose(p.b_star)));
  err = std::max(err, max_abs(matmul(p.b_star, p.b_star) - p.b_star));
  return err;
}

// Largest relative error between analytic and central-difference gradients
// over `samples` random coordinates.
double gradient_error(const Mlp& net0, std::size_t samples, std::mt19937_64& rng,
                      const std::function<LossResult(const Mlp&)>& loss) {
  constexpr double h = 1e-6;
  const LossResult base = loss(net0);
  Mlp net = net0;
  std::uniform_int_distribution<std::size_t> layer_pick(0, net.num_layers() - 1);
  double worst = 0.0;
  for (std::size_t s = 0; s < samples; ++s) {
    const std::size_t l = layer_pick(rng);
    const bool bias = std::uniform_int_distribution<int>(0, 3)(rng) == 0;
    std::span<double> params = bias ? std::span<double>(net.biases[l]) : std::span<double>(net.weights[l].data());
    const std::size_t i = std::uniform_int_distribution<std::size_t>(0, params.size() - 1)(rng);
    const double analytic =
        bias ? base.gradients.biases[l][i] : base.gradients.weights[l].data()[i];
    const double keep = params[i];
    params[i] = keep + h;
    const double up = loss(net).value;
    params[i] = keep - h;
    const double down = loss(net).value;
    params[i] = keep;
    const double fd = (up - down) / (2 * h);
    const double scale = std::max({std::abs(analytic), std::abs(fd), 1e-3});
    worst = std::max(worst, std::abs(analytic - fd) / scale);
  }
  return worst;
}

}  // namespace

std::vector<CheckResult> run_verification(std::uint64_t seed) {
  std::vector<CheckResult> out;
  std::mt19937_64 rng(seed);

  {
    double worst = 0.0;
    for (int t = 0; t < 500; ++t) {
      const ConstraintSpec s = random_spec(rng);
      worst = std::max(worst, identity_error(s, build_projection(s)));
    }
    out.push_back({"projection identities (500 random constraint sets)", worst <= 1e-10,
                   "max error " + sci(worst)});
  }
  {
    double worst_qp = 0.0, worst_feas = 0.0, worst_idem = 0.0;
    for (int t = 0; t < 500; ++t) {
      const ConstraintSpec s = random_spec(rng);
      const ProjectionParams p = build_projection(s);
      const Vec x = random_vec(s.num_inputs(), rng);
      const Vec y_hat = random_vec(s.num_outputs(), rng);
      const Vec y = apply_projection(p, x, y_hat);
      const Vec ref = kkt_system_solve(s, x, y_hat);
      for (std::size_t i = 0; i < y.size(); ++i) worst_qp = std::max(worst_qp, std::abs(y[i] - ref[i]));
      worst_feas = std::max(worst_feas, violation(s, x, y) / (1.0 + max_abs(s.rhs())));
      const Vec again = apply_projection(p, x, y);
      for (std::size_t i = 0; i < y.size(); ++i)
        worst_idem = std::max(worst_idem, std::abs(again[i] - y[i]));
    }
    out.push_back({"projection equals KKT-system solve (500 instances)", worst_qp <= 1e-10,
                   "max error " + sci(worst_qp)});
    out.push_back({"projected points are feasible", worst_feas <= 1e-10,
                   "max scaled violation " + sci(worst_feas)});
    out.push_back({"projection is idempotent", worst_idem <= 1e-10, "max change " + sci(worst_idem)});
  }
  {
    const ConstraintSpec s(random_mat(2, 3, rng), random_mat(2, 4, rng), random_vec(2, rng));
    const ProjectionParams p = build_projection(s);
    const Mlp net = init_mlp({3, 6, 6, 4}, Activation::tanh, seed);
    const Mat x = random_mat(8, 3, rng);
    const Mat y = random_mat(8, 4, rng);
    const double e_nn = gradient_error(net, 100, rng, [&](const Mlp& n) { return loss_nn(n, x, y); });
    const double e_pinn =
        gradient_error(net, 100, rng, [&](const Mlp& n) { return loss_pinn(n, x, y, s, 1.0); });
    const double e_kkt = gradient_error(net, 100, rng, [&](const Mlp& n) { return loss_kkt(n, p, x, y); });
    out.push_back({"nn loss gradient vs central differences", e_nn <= 1e-6, "max rel error " + sci(e_nn)});
    out.push_back({"pinn loss gradient vs central differences", e_pinn <= 1e-6,
                   "max rel error " + sci(e_pinn)});
    out.push_back({"kkt loss gradient vs central differences", e_kkt <= 1e-6,
                   "max rel error " + sci(e_kkt)});
  }
  {
    bool rejected = false;
    try {
      ConstraintSpec(Mat{{1, 0}, {2, 0}}, Mat{{1, 1, 0}, {2, 2, 0}}, Vec{0, 0});
    } catch (const SingularityError&) {
      rejected = true;
    }
    out.push_back({"rank-deficient B is rejected", rejected, rejected ? "" : "accepted"});
  }
  return out;
}

}  // namespace kkthpinn
