#include "kkthpinn/projection.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "kkthpinn/error.hpp"

namespace kkthpinn {

namespace {

Mat gram(const Mat& b) { return matmul(b, transpose(b)); }

std::string fmt17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

ConstraintSpec::ConstraintSpec(Mat a, Mat b, Vec rhs)
    : a_(std::move(a)), b_(std::move(b)), rhs_(std::move(rhs)) {
  const std::size_t m = b_.rows();
  if (m == 0) throw ConfigError("ConstraintSpec: at least one constraint is required");
  if (a_.rows() != m || rhs_.size() != m) {
    throw ShapeError("ConstraintSpec: A has " + std::to_string(a_.rows()) + " rows, B has " +
                     std::to_string(m) + ", b has " + std::to_string(rhs_.size()));
  }
  if (m > b_.cols()) {
    throw ConfigError("ConstraintSpec: " + std::to_string(m) +
                      " constraints exceed the number of outputs " + std::to_string(b_.cols()));
  }
  if (!a_.all_finite() || !b_.all_finite() ||
      !Mat(m, 1, rhs_).all_finite()) {
    throw DataError("ConstraintSpec: non-finite coefficient");
  }
  try {
    (void)spd_solve(gram(b_), Mat::identity(m));
  } catch (const SingularityError& e) {
    throw SingularityError(
        "ConstraintSpec: B is rank deficient (pivot " + std::to_string(e.pivot()) +
            "); the constraints must be linearly independent in y, remove dependent rows",
        e.pivot());
  }
}

Vec ConstraintSpec::residual(std::span<const double> x, std::span<const double> y) const {
  if (x.size() != num_inputs() || y.size() != num_outputs()) {
    throw ShapeError("residual: expected x of length " + std::to_string(num_inputs()) +
                     " and y of length " + std::to_string(num_outputs()));
  }
  Vec r = matvec(b_, y);
  if (num_inputs() > 0) {
    Vec ax = matvec(a_, x);
    for (std::size_t i = 0; i < r.size(); ++i) r[i] += ax[i];
  }
  for (std::size_t i = 0; i < r.size(); ++i) r[i] -= rhs_[i];
  return r;
}

std::vector<bool> ConstraintSpec::constrained_outputs() const {
  std::vector<bool> mask(num_outputs(), false);
  for (std::size_t i = 0; i < b_.rows(); ++i)
    for (std::size_t j = 0; j < b_.cols(); ++j)
      if (b_(i, j) != 0.0) mask[j] = true;
  return mask;
}

ProjectionParams build_projection(const ConstraintSpec& spec) {
  const std::size_t m = spec.num_constraints();
  const std::size_t n0 = spec.num_inputs();
  const std::size_t nl = spec.num_outputs();
  const Mat& a = spec.a();
  const Mat& b = spec.b();

  // One factorization of B·Bᵀ serves all three right-hand sides [B | A | b].
  Mat rhs(m, nl + n0 + 1);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < nl; ++j) rhs(i, j) = b(i, j);
    for (std::size_t j = 0; j < n0; ++j) rhs(i, nl + j) = a(i, j);
    rhs(i, nl + n0) = spec.rhs()[i];
  }
  const Mat s = gram(b);
  const Mat bt = transpose(b);
  Mat bt_solved = matmul(bt, spd_solve(s, rhs));  // NL x (NL+N0+1)
  // Refinement against B itself; the Gram matrix squares the conditioning.
  for (int pass = 0; pass < 2; ++pass) {
    const Mat resid = rhs - matmul(b, bt_solved);
    bt_solved = bt_solved + matmul(bt, spd_solve(s, resid));
  }

  ProjectionParams p{Mat(nl, n0), Mat(nl, nl), Vec(nl)};
  for (std::size_t i = 0; i < nl; ++i) {
    for (std::size_t j = 0; j < nl; ++j) {
      p.b_star(i, j) = (i == j ? 1.0 : 0.0) - bt_solved(i, j);
    }
    for (std::size_t j = 0; j < n0; ++j) p.a_star(i, j) = -bt_solved(i, nl + j);
    p.bias_star[i] = bt_solved(i, nl + n0);
  }
  for (std::size_t i = 0; i < nl; ++i) {
    for (std::size_t j = i + 1; j < nl; ++j) {
      const double s = 0.5 * (p.b_star(i, j) + p.b_star(j, i));
      p.b_star(i, j) = s;
      p.b_star(j, i) = s;
    }
  }
  return p;
}

Vec apply_projection(const ProjectionParams& p, std::span<const double> x,
                     std::span<const double> y_hat) {
  const std::size_t nl = p.b_star.rows();
  if (x.size() != p.a_star.cols() || y_hat.size() != nl) {
    throw ShapeError("apply_projection: expected x of length " + std::to_string(p.a_star.cols()) +
                     " and y_hat of length " + std::to_string(nl));
  }
  Vec out = matvec(p.b_star, y_hat);
  for (std::size_t i = 0; i < nl; ++i) {
    double s = p.bias_star[i];
    auto ai = p.a_star.row(i);
    for (std::size_t j = 0; j < x.size(); ++j) s += ai[j] * x[j];
    out[i] += s;
  }
  return out;
}

Mat apply_projection(const ProjectionParams& p, const Mat& x, const Mat& y_hat) {
  if (x.rows() != y_hat.rows()) {
    throw ShapeError("apply_projection: batch sizes differ (" + std::to_string(x.rows()) +
                     " vs " + std::to_string(y_hat.rows()) + ")");
  }
  Mat out(y_hat.rows(), y_hat.cols());
  for (std::size_t n = 0; n < x.rows(); ++n) {
    const Vec r = apply_projection(p, x.row(n), y_hat.row(n));
    std::copy(r.begin(), r.end(), out.row(n).begin());
  }
  return out;
}

Vec projection_backward(const ProjectionParams& p, std::span<const double> grad_out) {
  if (grad_out.size() != p.b_star.rows()) {
    throw ShapeError("projection_backward: gradient length " + std::to_string(grad_out.size()) +
                     ", expected " + std::to_string(p.b_star.rows()));
  }
  const std::size_t nl = p.b_star.rows();
  Vec g(nl, 0.0);
  for (std::size_t i = 0; i < nl; ++i) {
    auto bi = p.b_star.row(i);
    for (std::size_t j = 0; j < nl; ++j) g[j] += bi[j] * grad_out[i];
  }
  return g;
}

Mat projection_backward(const ProjectionParams& p, const Mat& grad_out) {
  Mat out(grad_out.rows(), grad_out.cols());
  for (std::size_t n = 0; n < grad_out.rows(); ++n) {
    const Vec r = projection_backward(p, grad_out.row(n));
    std::copy(r.begin(), r.end(), out.row(n).begin());
  }
  return out;
}

double violation(const ConstraintSpec& spec, std::span<const double> x,
                 std::span<const double> y) {
  return norm2(spec.residual(x, y));
}

ConstraintSpec rescale_constraints(const ConstraintSpec& spec, std::span<const double> scale_x,
                                   std::span<const double> scale_y) {
  if (scale_x.size() != spec.num_inputs() || scale_y.size() != spec.num_outputs()) {
    throw ShapeError("rescale_constraints: scale vectors do not match constraint dimensions");
  }
  for (double s : scale_x)
    if (!(s > 0.0) || !std::isfinite(s)) throw ScaleError("rescale_constraints: input scale must be positive");
  for (double s : scale_y)
    if (!(s > 0.0) || !std::isfinite(s)) throw ScaleError("rescale_constraints: output scale must be positive");

  Mat a = spec.a();
  Mat b = spec.b();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) a(i, j) *= scale_x[j];
    for (std::size_t j = 0; j < b.cols(); ++j) b(i, j) *= scale_y[j];
  }
  return ConstraintSpec(std::move(a), std::move(b), spec.rhs());
}

std::string format_spec(const ConstraintSpec& spec) {
  std::ostringstream os;
  os << "m " << spec.num_constraints() << ' ' << spec.num_inputs() << ' ' << spec.num_outputs()
     << '\n';
  auto put_row = [&os](char tag, std::span<const double> row) {
    os << tag;
    for (double v : row) os << ' ' << fmt17(v);
    os << '\n';
  };
  for (std::size_t i = 0; i < spec.num_constraints(); ++i) put_row('A', spec.a().row(i));
  for (std::size_t i = 0; i < spec.num_constraints(); ++i) put_row('B', spec.b().row(i));
  put_row('b', spec.rhs());
  return os.str();
}

ConstraintSpec parse_spec(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t m = 0, n0 = 0, nl = 0;
  bool have_header = false;
  std::vector<Vec> a_rows, b_rows;
  Vec rhs;
  bool have_rhs = false;
  int line_no = 0;

  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag)) continue;
    auto where = [&] { return "constraint block line " + std::to_string(line_no); };
    if (tag == "m") {
      if (!(ls >> m >> n0 >> nl)) throw ParseError(where() + ": malformed header");
      have_header = true;
      continue;
    }
    if (!have_header) throw ParseError(where() + ": rows before 'm' header");
    Vec row;
    std::string tok;
    while (ls >> tok) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(tok, &used));
        if (used != tok.size()) throw std::invalid_argument(tok);
      } catch (const std::exception&) {
        throw ParseError(where() + ": bad number '" + tok + "'");
      }
    }
    if (tag == "A") {
      if (row.size() != n0) throw ParseError(where() + ": A row has wrong length");
      a_rows.push_back(std::move(row));
    } else if (tag == "B") {
      if (row.size() != nl) throw ParseError(where() + ": B row has wrong length");
      b_rows.push_back(std::move(row));
    } else if (tag == "b") {
      if (row.size() != m) throw ParseError(where() + ": b has wrong length");
      rhs = std::move(row);
      have_rhs = true;
    } else {
      throw ParseError(where() + ": unknown tag '" + tag + "'");
    }
  }
  if (!have_header || !have_rhs || a_rows.size() != m || b_rows.size() != m) {
    throw ParseError("constraint block: incomplete (need header, " + std::to_string(m) +
                     " A rows, " + std::to_string(m) + " B rows and b)");
  }
  Mat a(m, n0), b(m, nl);
  for (std::size_t i = 0; i < m; ++i) {
    std::copy(a_rows[i].begin(), a_rows[i].end(), a.row(i).begin());
    std::copy(b_rows[i].begin(), b_rows[i].end(), b.row(i).begin());
  }
  return ConstraintSpec(std::move(a), std::move(b), std::move(rhs));
}

}  // namespace kkthpinn
