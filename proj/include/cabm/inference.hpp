#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <optional>
#include <string>
#include <tuple>
#include <utility>

#include "cabm/errors.hpp"
#include "cabm/estimator.hpp"
#include "cabm/family.hpp"
#include "cabm/linalg.hpp"
#include "cabm/model.hpp"
#include "cabm/network.hpp"
#include "cabm/normal.hpp"

namespace cabm {

struct IntervalEstimate {
  double point = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  double level = 0.95;

  double length() const noexcept { return upper - lower; }
  bool contains(double value) const noexcept { return lower <= value && value <= upper; }
};

struct HomogeneityTest {
  double statistic = 0.0;
  double p_value = 1.0;
};

enum class BiasFormula {
  /// Both second-order terms of the profiled covariate equation: the
  /// curvature of Q in beta, and the curvature of F propagated through
  /// beta_gamma. For the Poisson family the two cancel exactly.
  full,
  /// Only the curvature-of-Q term, 1/(2 sqrt(N)) sum_k [sum_j z_kj mu''_kj] / v_kk.
  leading_term,
};

struct InferenceOptions {
  BiasFormula bias_formula = BiasFormula::full;
  /// Overrides the sign of B_hat. By default B_hat = -(bias of Q_c)/sqrt(N)
  /// for the full formula, so that gamma_bc = gamma_hat - N^{-1/2} (H/N)^{-1} B_hat
  /// removes the bias, and +(leading term)/sqrt(N) for the leading-term formula.
  std::optional<double> bias_sign;
};

struct InferenceResult {
  Vector v_diag;     // v_ii = sum_j mu'(pi_ij)
  Vector u_diag;     // u_ii = sum_j Var(a_ij)
  Matrix H_hat;      // profiled Jacobian at the estimate
  Matrix Sigma_hat;  // sum_{i<j} lambda_ij z~_ij z~_ij'
  Vector B_hat;
  Matrix gamma_cov;  // H^{-1} Sigma H^{-1}
  Vector gamma_hat;
  Vector gamma_bc;
  double N = 0.0;  // n(n-1)/2

  Vector gamma_se() const { return gamma_cov.diagonal().cwiseSqrt(); }
  Vector beta_se() const { return u_diag.cwiseSqrt().cwiseQuotient(v_diag); }
};

namespace detail {

inline void require_converged(const FitResult& fit) {
  if (!fit.converged) throw Error(ErrorCode::not_converged, "inference requires a converged fit");
}

inline void require_pair(const FitResult& fit, Index i, Index j) {
  const Index n = fit.nodes();
  if (i < 0 || j < 0 || i >= n || j >= n) {
    throw Error(ErrorCode::index, "node index out of range [1, " + std::to_string(n) + "]");
  }
  if (i == j) throw Error(ErrorCode::index, "a beta difference needs two distinct nodes");
}

inline double critical_value(double level) {
  if (!(level > 0.0 && level < 1.0)) throw Error(ErrorCode::domain, "confidence level must lie in (0,1)");
  return normal::quantile(0.5 * (1.0 + level));
}

}  // namespace detail

/// (v_ii, u_ii) at the fitted parameters; the standard error of beta_i is
/// sqrt(u_ii) / v_ii.
inline std::pair<Vector, Vector> beta_variances(const FitResult& fit, const Network& net, const CovariateTensor& Z,
                                                EdgeFamily fam) {
  detail::require_converged(fit);
  check_shapes(net, Z);
  const Index n = net.size();
  Vector v = Vector::Zero(n);
  Vector u = Vector::Zero(n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = i + 1; j < n; ++j) {
      double pi = fit.beta_hat[i] + fit.beta_hat[j];
      if (Z.dim() > 0) pi += Z.z(i, j).dot(fit.gamma_hat);
      const double d1 = mu_derivative(fam, pi, 1);
      const double var = edge_variance(fam, pi);
      v[i] += d1;
      v[j] += d1;
      u[i] += var;
      u[j] += var;
    }
  }
  return {v, u};
}

/// Normal interval for beta_i - beta_j with scale (1/v_ii + 1/v_jj)^{1/2}.
/// Indices are 0-based.
inline IntervalEstimate beta_diff_interval(const FitResult& fit, Index i, Index j, double level = 0.95) {
  detail::require_converged(fit);
  detail::require_pair(fit, i, j);
  const double zc = detail::critical_value(level);
  const double scale = std::sqrt(1.0 / fit.v_diag[i] + 1.0 / fit.v_diag[j]);
  const double point = fit.beta_hat[i] - fit.beta_hat[j];
  return {point, point - zc * scale, point + zc * scale, level};
}

/// Test of beta_i = beta_j. Indices are 0-based.
inline HomogeneityTest homogeneity_test(const FitResult& fit, Index i, Index j) {
  detail::require_converged(fit);
  detail::require_pair(fit, i, j);
  const double scale = std::sqrt(1.0 / fit.v_diag[i] + 1.0 / fit.v_diag[j]);
  const double stat = std::abs(fit.beta_hat[i] - fit.beta_hat[j]) / scale;
  return {stat, normal::two_sided_p(stat)};
}

/// Sandwich covariance, plug-in bias and bias-corrected estimate of gamma.
inline InferenceResult gamma_inference(const FitResult& fit, const Network& net, const CovariateTensor& Z,
                                       EdgeFamily fam, const InferenceOptions& opts = {}) {
  detail::require_converged(fit);
  check_shapes(net, Z);
  const Index n = net.size();
  const Index p = Z.dim();
  const Params params{fit.beta_hat, fit.gamma_hat};

  InferenceResult r;
  std::tie(r.v_diag, r.u_diag) = beta_variances(fit, net, Z, fam);
  r.N = static_cast<double>(pair_count(n));
  r.gamma_hat = fit.gamma_hat;
  if (p == 0) {
    r.H_hat = r.Sigma_hat = r.gamma_cov = Matrix(0, 0);
    r.B_hat = r.gamma_bc = Vector(0);
    return r;
  }

  const MomentJacobian J = moment_jacobian(params, Z, fam);
  r.H_hat = profile_H(J);

  // z~_ij = z_ij - D' V^{-1} T_ij; row i of V^{-1} D gives the i-th contribution.
  const Matrix VinvD = SpdSolver(J.V.V).solve(J.D);
  r.Sigma_hat = Matrix::Zero(p, p);
  Vector zt(p);
  for (Index i = 0; i < n; ++i) {
    for (Index j = i + 1; j < n; ++j) {
      const auto z = Z.z(i, j);
      const double pi = params.beta[i] + params.beta[j] + z.dot(params.gamma);
      zt = z - VinvD.row(i).transpose() - VinvD.row(j).transpose();
      r.Sigma_hat.noalias() += edge_variance(fam, pi) * zt * zt.transpose();
    }
  }
  r.Sigma_hat = 0.5 * (r.Sigma_hat + r.Sigma_hat.transpose());

  // Second-order bias of Q_c(gamma*). With c_k = u_kk / v_kk^2 approximating
  // Var(beta_hat_k):
  //   curvature of Q:  1/2 sum_{i<j} z_ij mu''_ij (c_i + c_j)
  //   through beta:    1/2 D' V^{-1} w,  w_i = sum_{j!=i} mu''_ij (c_i + c_j)
  const Vector c = r.u_diag.cwiseQuotient(r.v_diag.cwiseProduct(r.v_diag));
  Vector q_curv = Vector::Zero(p);
  Vector w = Vector::Zero(n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = i + 1; j < n; ++j) {
      const auto z = Z.z(i, j);
      const double m2 = mu_derivative(fam, params.beta[i] + params.beta[j] + z.dot(params.gamma), 2);
      q_curv.noalias() += (0.5 * m2 * (c[i] + c[j])) * z;
      w[i] += m2 * (c[i] + c[j]);
      w[j] += m2 * (c[i] + c[j]);
    }
  }
  Vector q_bias = q_curv;
  if (opts.bias_formula == BiasFormula::full) q_bias -= 0.5 * (VinvD.transpose() * w);
  const double sign = opts.bias_sign.value_or(opts.bias_formula == BiasFormula::full ? -1.0 : 1.0);
  r.B_hat = (sign / std::sqrt(r.N)) * q_bias;

  const Matrix Hinv = detail::solve_small(r.H_hat, Matrix::Identity(p, p));
  r.gamma_cov = Hinv * r.Sigma_hat * Hinv.transpose();
  r.gamma_cov = 0.5 * (r.gamma_cov + r.gamma_cov.transpose());

  // gamma_bc = gamma - N^{-1/2} (H/N)^{-1} B.
  r.gamma_bc = fit.gamma_hat - std::sqrt(r.N) * (Hinv * r.B_hat);
  return r;
}

/// Normal interval for gamma_k (0-based), optionally centred at the
/// bias-corrected estimate.
inline IntervalEstimate gamma_interval(const InferenceResult& inf, Index k, double level = 0.95,
                                       bool bias_corrected = false) {
  if (k < 0 || k >= inf.gamma_hat.size()) throw Error(ErrorCode::index, "coefficient index out of range");
  const double zc = detail::critical_value(level);
  const double se = std::sqrt(inf.gamma_cov(k, k));
  const double point = bias_corrected ? inf.gamma_bc[k] : inf.gamma_hat[k];
  return {point, point - zc * se, point + zc * se, level};
}

}  // namespace cabm
