#include "kkthpinn/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "kkthpinn/error.hpp"

namespace kkthpinn {

namespace {

std::string dims(const Mat& m) {
  std::ostringstream os;
  os << m.rows() << "x" << m.cols();
  return os.str();
}

}  // namespace

Mat::Mat(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw ShapeError("Mat: data length does not equal rows*cols");
  }
}

Mat::Mat(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ == 0 ? 0 : rows.begin()->size();
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw ShapeError("Mat: ragged initializer");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

Mat Mat::identity(std::size_t n) {
  Mat m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Mat Mat::column(std::span<const double> v) {
  return Mat(v.size(), 1, std::vector<double>(v.begin(), v.end()));
}

Vec Mat::col(std::size_t j) const {
  Vec out(rows_);
  for (std::size_t i = 0; i < rows_; ++i) out[i] = (*this)(i, j);
  return out;
}

bool Mat::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Mat matmul(const Mat& a, const Mat& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: " + dims(a) + " times " + dims(b));
  }
  Mat c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto ci = c.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      auto bk = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) ci[j] += aik * bk[j];
    }
  }
  return c;
}

Mat transpose(const Mat& a) {
  Mat t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

Vec matvec(const Mat& a, std::span<const double> x) {
  if (a.cols() != x.size()) {
    throw ShapeError("matvec: " + dims(a) + " times vector of length " + std::to_string(x.size()));
  }
  Vec y(a.rows(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto ai = a.row(i);
    double s = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) s += ai[j] * x[j];
    y[i] = s;
  }
  return y;
}

Mat spd_solve(const Mat& s, const Mat& rhs) {
  const std::size_t n = s.rows();
  if (s.cols() != n) throw ShapeError("spd_solve: matrix is " + dims(s) + ", not square");
  if (rhs.rows() != n) {
    throw ShapeError("spd_solve: rhs is " + dims(rhs) + " for a " + dims(s) + " system");
  }

  double max_diag = 0.0;
  for (std::size_t i = 0; i < n; ++i) max_diag = std::max(max_diag, std::abs(s(i, i)));
  const double threshold = 1e-12 * max_diag;

  // Lower factor L with s = L·Lᵀ.
  Mat l(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    double d = s(j, j);
    for (std::size_t k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
    if (!(d > threshold)) {
      throw SingularityError("spd_solve: non-positive pivot at index " + std::to_string(j) +
                                 " (matrix is singular or not positive definite)",
                             j);
    }
    const double ljj = std::sqrt(d);
    l(j, j) = ljj;
    for (std::size_t i = j + 1; i < n; ++i) {
      double v = s(i, j);
      for (std::size_t k = 0; k < j; ++k) v -= l(i, k) * l(j, k);
      l(i, j) = v / ljj;
    }
  }

  Mat x = rhs;
  for (std::size_t c = 0; c < x.cols(); ++c) {
    for (std::size_t i = 0; i < n; ++i) {
      double v = x(i, c);
      for (std::size_t k = 0; k < i; ++k) v -= l(i, k) * x(k, c);
      x(i, c) = v / l(i, i);
    }
    for (std::size_t i = n; i-- > 0;) {
      double v = x(i, c);
      for (std::size_t k = i + 1; k < n; ++k) v -= l(k, i) * x(k, c);
      x(i, c) = v / l(i, i);
    }
  }
  return x;
}

Mat operator+(const Mat& a, const Mat& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError("operator+: " + dims(a) + " vs " + dims(b));
  }
  Mat c = a;
  for (std::size_t i = 0; i < c.size(); ++i) c.data()[i] += b.data()[i];
  return c;
}

Mat operator-(const Mat& a, const Mat& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError("operator-: " + dims(a) + " vs " + dims(b));
  }
  Mat c = a;
  for (std::size_t i = 0; i < c.size(); ++i) c.data()[i] -= b.data()[i];
  return c;
}

Mat operator*(double k, const Mat& a) {
  Mat c = a;
  for (double& v : c.data()) v *= k;
  return c;
}

double max_abs(const Mat& a) noexcept { return max_abs(std::span<const double>(a.data())); }

double max_abs(std::span<const double> v) noexcept {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

double norm2(std::span<const double> v) noexcept {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace kkthpinn
