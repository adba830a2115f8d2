#pragma once

#include <span>
#include <string>
#include <vector>

#include "kkthpinn/linalg.hpp"

namespace kkthpinn {

/// Linear equality constraints A·x + B·y = b tying network inputs x to outputs y.
///
/// Construction validates shapes (1 <= m <= NL) and that B has full row rank;
/// A may have zero columns when the constraints involve outputs only.
class ConstraintSpec {
 public:
  ConstraintSpec(Mat a, Mat b, Vec rhs);

  std::size_t num_constraints() const noexcept { return b_.rows(); }
  std::size_t num_inputs() const noexcept { return a_.cols(); }
  std::size_t num_outputs() const noexcept { return b_.cols(); }

  const Mat& a() const noexcept { return a_; }
  const Mat& b() const noexcept { return b_; }
  const Vec& rhs() const noexcept { return rhs_; }

  /// Residual A·x + B·y − b.
  Vec residual(std::span<const double> x, std::span<const double> y) const;

  /// True for output coordinates whose column in B has a nonzero entry.
  std::vector<bool> constrained_outputs() const;

  friend bool operator==(const ConstraintSpec&, const ConstraintSpec&) = default;

 private:
  Mat a_;
  Mat b_;
  Vec rhs_;
};

/// Fixed parameters of the two projection layers: ỹ = A*·x + B*·ŷ + b*.
struct ProjectionParams {
  Mat a_star;   // NL x N0
  Mat b_star;   // NL x NL, orthogonal projector onto null(B)
  Vec bias_star;
};

ProjectionParams build_projection(const ConstraintSpec& spec);

/// Euclidean-nearest point to y_hat on {y : A·x + B·y = b}.
Vec apply_projection(const ProjectionParams& p, std::span<const double> x,
                     std::span<const double> y_hat);

/// Row-wise projection of a batch (rows are samples).
Mat apply_projection(const ProjectionParams& p, const Mat& x, const Mat& y_hat);

/// Vector-Jacobian product of the projection w.r.t. ŷ: B*ᵀ·grad_out.
Vec projection_backward(const ProjectionParams& p, std::span<const double> grad_out);
Mat projection_backward(const ProjectionParams& p, const Mat& grad_out);

/// ‖A·x + B·y − b‖₂.
double violation(const ConstraintSpec& spec, std::span<const double> x,
                 std::span<const double> y);

/// Expresses the constraints in per-column scaled units x' = x/scale_x, y' = y/scale_y.
ConstraintSpec rescale_constraints(const ConstraintSpec& spec, std::span<const double> scale_x,
                                   std::span<const double> scale_y);

/// Line-oriented text form: "m <m> <N0> <NL>", then "A ...", "B ...", "b ..." rows,
/// numbers printed with 17 significant digits.
std::string format_spec(const ConstraintSpec& spec);
ConstraintSpec parse_spec(const std::string& text);

}  // namespace kkthpinn
