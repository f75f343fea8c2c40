#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>

#include "cabm/errors.hpp"
#include "cabm/family.hpp"
#include "cabm/linalg.hpp"
#include "cabm/network.hpp"

namespace cabm {

/// Jacobian of the degree residual with respect to beta: positive
/// off-diagonal entries and each diagonal equal to its row's off-diagonal sum.
struct BalancedJacobian {
  Matrix V;

  Index size() const noexcept { return V.rows(); }
  Vector diagonal() const { return V.diagonal(); }

  /// Largest |v_ii - sum_{j!=i} v_ij| / v_ii.
  double balance_error() const {
    double worst = 0.0;
    for (Index i = 0; i < V.rows(); ++i) {
      const double off = V.row(i).sum() - V(i, i);
      worst = std::max(worst, std::abs(V(i, i) - off) / V(i, i));
    }
    return worst;
  }
};

struct DiagnosticsReport {
  double b0 = 0.0;  // min |mu'|
  double b1 = 0.0;  // max |mu'|
  double b2 = 0.0;  // max |mu''|
  double b3 = 0.0;  // max |mu'''|
  double kappa_hat = 0.0;  // ||n^2 H^{-1}||_inf, +inf when H is singular
  bool h_singular = false;
  double density = 0.0;  // mean of mu(pi_ij) over pairs
  double pi_min = 0.0;
  double pi_max = 0.0;
  double z_star = 0.0;
};

/// pi_ij = beta_i + beta_j + z_ij' gamma; the diagonal is left at zero.
inline Matrix linear_predictor(const Params& params, const CovariateTensor& Z) {
  check_shapes(params, Z);
  const Index n = Z.nodes();
  Matrix pi = Matrix::Zero(n, n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = i + 1; j < n; ++j) {
      double v = params.beta[i] + params.beta[j];
      if (Z.dim() > 0) v += Z.z(i, j).dot(params.gamma);
      pi(i, j) = v;
      pi(j, i) = v;
    }
  }
  return pi;
}

/// Symmetric matrix of mu(pi_ij) with zero diagonal.
inline Matrix mean_matrix(const Params& params, const CovariateTensor& Z, EdgeFamily fam) {
  Matrix m = linear_predictor(params, Z);
  const Index n = m.rows();
  for (Index i = 0; i < n; ++i) {
    m(i, i) = 0.0;
    for (Index j = i + 1; j < n; ++j) {
      m(i, j) = mu(fam, m(i, j));
      m(j, i) = m(i, j);
    }
  }
  return m;
}

/// F_i = sum_{j!=i} mu(pi_ij) - d_i.
inline Vector residual_F(const Network& net, const Params& params, const CovariateTensor& Z,
                         EdgeFamily fam) {
  check_shapes(net, Z);
  const Matrix m = mean_matrix(params, Z, fam);
  return m.rowwise().sum() - net.degrees();
}

/// Q = sum_{i<j} z_ij (mu(pi_ij) - a_ij).
inline Vector residual_Q(const Network& net, const Params& params, const CovariateTensor& Z,
                         EdgeFamily fam) {
  check_shapes(net, Z);
  check_shapes(params, Z);
  const Index n = net.size();
  Vector q = Vector::Zero(Z.dim());
  if (Z.dim() == 0) return q;
  for (Index i = 0; i < n; ++i) {
    for (Index j = i + 1; j < n; ++j) {
      const auto z = Z.z(i, j);
      const double pi = params.beta[i] + params.beta[j] + z.dot(params.gamma);
      q.noalias() += (mu(fam, pi) - net.weight(i, j)) * z;
    }
  }
  return q;
}

/// The three derivative blocks of the moment system at (beta, gamma):
/// V = dF/dbeta', D = dF/dgamma' (n x p) and A = dQ/dgamma' (p x p).
/// dQ/dbeta' is D'.
struct MomentJacobian {
  BalancedJacobian V;
  Matrix D;
  Matrix A;
};

inline MomentJacobian moment_jacobian(const Params& params, const CovariateTensor& Z, EdgeFamily fam) {
  check_shapes(params, Z);
  const Index n = Z.nodes();
  const Index p = Z.dim();
  MomentJacobian J{{Matrix::Zero(n, n)}, Matrix::Zero(n, p), Matrix::Zero(p, p)};
  Matrix& V = J.V.V;
  for (Index i = 0; i < n; ++i) {
    for (Index j = i + 1; j < n; ++j) {
      const auto z = Z.z(i, j);
      double pi = params.beta[i] + params.beta[j];
      if (p > 0) pi += z.dot(params.gamma);
      const double d1 = mu_derivative(fam, pi, 1);
      if (!(d1 > 0.0)) {
        throw Error(ErrorCode::non_positive_derivative,
                    "mu'(pi) <= 0 on pair (" + std::to_string(i + 1) + "," + std::to_string(j + 1) + ")");
      }
      V(i, j) = d1;
      V(j, i) = d1;
      if (p > 0) {
        J.D.row(i).noalias() += d1 * z.transpose();
        J.D.row(j).noalias() += d1 * z.transpose();
        J.A.noalias() += d1 * z * z.transpose();
      }
    }
  }
  for (Index i = 0; i < n; ++i) V(i, i) = V.row(i).sum();
  return J;
}

inline BalancedJacobian jacobian_V(const Params& params, const CovariateTensor& Z, EdgeFamily fam) {
  check_shapes(params, Z);
  const Index n = Z.nodes();
  BalancedJacobian J{Matrix::Zero(n, n)};
  for (Index i = 0; i < n; ++i) {
    for (Index j = i + 1; j < n; ++j) {
      double pi = params.beta[i] + params.beta[j];
      if (Z.dim() > 0) pi += Z.z(i, j).dot(params.gamma);
      const double d1 = mu_derivative(fam, pi, 1);
      if (!(d1 > 0.0)) {
        throw Error(ErrorCode::non_positive_derivative,
                    "mu'(pi) <= 0 on pair (" + std::to_string(i + 1) + "," + std::to_string(j + 1) + ")");
      }
      J.V(i, j) = d1;
      J.V(j, i) = d1;
    }
  }
  for (Index i = 0; i < n; ++i) J.V(i, i) = J.V.row(i).sum();
  return J;
}

/// Diagonal approximate inverse S = diag(1/v_11, ..., 1/v_nn).
inline Eigen::DiagonalMatrix<double, Eigen::Dynamic> s_approx(const BalancedJacobian& V) {
  return Eigen::DiagonalMatrix<double, Eigen::Dynamic>(V.V.diagonal().cwiseInverse());
}

/// H = A - D' V^{-1} D from the derivative blocks, using exact solves.
inline Matrix profile_H(const MomentJacobian& J) {
  if (J.A.rows() == 0) return J.A;
  const SpdSolver solver(J.V.V);
  const Matrix VinvD = solver.solve(J.D);
  Matrix H = J.A - J.D.transpose() * VinvD;
  return 0.5 * (H + H.transpose());
}

/// Jacobian of the profiled covariate equation gamma -> Q(beta_gamma, gamma).
inline Matrix profile_H(const Params& params, const CovariateTensor& Z, EdgeFamily fam) {
  return profile_H(moment_jacobian(params, Z, fam));
}

namespace detail {

/// Infinity norm of H^{-1}; +inf if H is numerically singular.
inline double inverse_inf_norm(const Matrix& H) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(H);
  const double scale = eig.eigenvalues().cwiseAbs().maxCoeff();
  if (!(scale > 0.0) || eig.eigenvalues().cwiseAbs().minCoeff() <= 1e-13 * scale) {
    return std::numeric_limits<double>::infinity();
  }
  const Matrix Hinv = H.ldlt().solve(Matrix::Identity(H.rows(), H.cols()));
  return Hinv.cwiseAbs().rowwise().sum().maxCoeff();
}

}  // namespace detail

inline DiagnosticsReport condition_diagnostics(const Params& params, const CovariateTensor& Z,
                                               EdgeFamily fam) {
  check_shapes(params, Z);
  const Index n = Z.nodes();
  DiagnosticsReport r;
  r.b0 = std::numeric_limits<double>::infinity();
  r.pi_min = std::numeric_limits<double>::infinity();
  r.pi_max = -std::numeric_limits<double>::infinity();
  double mean_sum = 0.0;
  for (Index i = 0; i < n; ++i) {
    for (Index j = i + 1; j < n; ++j) {
      double pi = params.beta[i] + params.beta[j];
      if (Z.dim() > 0) pi += Z.z(i, j).dot(params.gamma);
      const double d1 = std::abs(mu_derivative(fam, pi, 1));
      r.b0 = std::min(r.b0, d1);
      r.b1 = std::max(r.b1, d1);
      r.b2 = std::max(r.b2, std::abs(mu_derivative(fam, pi, 2)));
      r.b3 = std::max(r.b3, std::abs(mu_derivative(fam, pi, 3)));
      r.pi_min = std::min(r.pi_min, pi);
      r.pi_max = std::max(r.pi_max, pi);
      mean_sum += mu(fam, pi);
    }
  }
  r.density = mean_sum / static_cast<double>(pair_count(n));
  r.z_star = Z.z_star();
  if (Z.dim() > 0) {
    const Matrix H = profile_H(params, Z, fam);
    const double norm = detail::inverse_inf_norm(H);
    r.h_singular = !std::isfinite(norm);
    r.kappa_hat = static_cast<double>(n) * static_cast<double>(n) * norm;
  }
  return r;
}

}  // namespace cabm
