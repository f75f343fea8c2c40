#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <optional>

#include "cabm/errors.hpp"
#include "cabm/network.hpp"

namespace cabm {

/// Above this size the balanced Jacobian is solved iteratively.
inline constexpr Index kDenseSolveLimit = 2000;

/// Jacobi-preconditioned conjugate gradients for an SPD operator given as a
/// matrix-vector product.
template <class MatVec>
Vector preconditioned_cg(MatVec&& apply, const Vector& inv_diag, const Vector& b,
                         double rtol = 1e-14) {
  const Index n = b.size();
  Vector x = inv_diag.cwiseProduct(b);
  Vector r = b - apply(x);
  Vector z = inv_diag.cwiseProduct(r);
  Vector d = z;
  double rz = r.dot(z);
  const double bnorm = std::max(b.norm(), 1e-300);
  for (Index it = 0; it < 10 * n + 10 && r.norm() > rtol * bnorm; ++it) {
    const Vector Ad = apply(d);
    const double denom = d.dot(Ad);
    if (!(denom > 0.0)) throw Error(ErrorCode::singular_jacobian, "operator is not positive definite");
    const double alpha = rz / denom;
    x += alpha * d;
    r -= alpha * Ad;
    z = inv_diag.cwiseProduct(r);
    const double rz_next = r.dot(z);
    d = z + (rz_next / rz) * d;
    rz = rz_next;
  }
  if (!(r.norm() <= std::max(1e3 * rtol, 1e-10) * bnorm)) {
    throw Error(ErrorCode::singular_jacobian, "conjugate gradients did not converge");
  }
  return x;
}

/// Solver for symmetric positive definite systems V x = b, where V is the
/// diagonally balanced degree Jacobian. Dense Cholesky up to
/// kDenseSolveLimit, Jacobi-preconditioned conjugate gradients beyond.
class SpdSolver {
 public:
  explicit SpdSolver(const Matrix& V, Index dense_limit = kDenseSolveLimit) : V_(&V) {
    if (V.rows() <= dense_limit) {
      llt_.emplace(V);
      if (llt_->info() != Eigen::Success) {
        throw Error(ErrorCode::singular_jacobian, "Cholesky factorization of V failed");
      }
    } else {
      inv_diag_ = V.diagonal().cwiseInverse();
      if (!inv_diag_.allFinite()) throw Error(ErrorCode::singular_jacobian, "zero diagonal in V");
    }
  }

  Vector solve(const Vector& b) const {
    if (llt_) return llt_->solve(b);
    return iterative(b);
  }

  Matrix solve(const Matrix& B) const {
    if (llt_) return llt_->solve(B);
    Matrix X(B.rows(), B.cols());
    for (Index c = 0; c < B.cols(); ++c) X.col(c) = iterative(B.col(c));
    return X;
  }

  bool dense() const noexcept { return llt_.has_value(); }

 private:
  Vector iterative(const Vector& b) const {
    return preconditioned_cg([this](const Vector& x) -> Vector { return *V_ * x; }, inv_diag_, b);
  }

  const Matrix* V_;
  std::optional<Eigen::LLT<Matrix>> llt_;
  Vector inv_diag_;
};

}  // namespace cabm
