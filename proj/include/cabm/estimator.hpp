#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "cabm/errors.hpp"
#include "cabm/family.hpp"
#include "cabm/linalg.hpp"
#include "cabm/model.hpp"
#include "cabm/network.hpp"

namespace cabm {

enum class BetaInit { zeros, log_degree };

struct FitOptions {
  double inner_tol = 1e-10;  // on ||F||_inf / max(1, ||d||_inf)
  double outer_tol = 1e-10;  // on ||Q_c||_inf / max(1, sum_{i<j} ||z_ij||_inf a_ij)
  int max_inner_iters = 200;
  int max_outer_iters = 100;  // 0 means: solve for beta at the initial gamma and stop
  BetaInit beta_init = BetaInit::log_degree;
  int damping = 30;  // maximum step halvings per Newton step

  void validate() const {
    if (!(inner_tol > 0.0) || !(outer_tol > 0.0)) throw Error(ErrorCode::config, "tolerances must be positive");
    if (max_inner_iters < 1) throw Error(ErrorCode::config, "max_inner_iters must be >= 1");
    if (max_outer_iters < 0) throw Error(ErrorCode::config, "max_outer_iters must be >= 0");
    if (damping < 0) throw Error(ErrorCode::config, "damping must be >= 0");
  }
};

struct TracePoint {
  Vector gamma;
  double q_norm = 0.0;  // ||Q_c(gamma)||_inf
};

struct FitResult {
  EdgeFamily family;
  Vector beta_hat;
  Vector gamma_hat;
  Vector v_diag;  // v_ii at the returned estimate
  int inner_iters = 0;
  int outer_iters = 0;
  bool converged = false;
  double final_F_norm = 0.0;
  double final_Q_norm = 0.0;
  double F_scale = 1.0;
  double Q_scale = 1.0;
  std::vector<TracePoint> trace;

  Index nodes() const noexcept { return beta_hat.size(); }
  Index dim() const noexcept { return gamma_hat.size(); }
};

/// Rejects inputs for which the moment estimator cannot exist: nonbinary
/// weights for a binary family, isolated nodes, and (binary families) nodes
/// connected to every other node.
inline void validate_for_fit(const Network& net, EdgeFamily fam) {
  const Index n = net.size();
  if (fam.binary() && !net.is_binary()) {
    throw Error(ErrorCode::binary_family_nonbinary_weights,
                std::string(fam.name()) + " requires edge weights in {0,1}");
  }
  for (Index i = 0; i < n; ++i) {
    const double d = net.degrees()[i];
    if (!(d > 0.0)) {
      throw Error(ErrorCode::degenerate_degree, "node " + std::to_string(i + 1) + " has zero degree");
    }
    if (fam.binary() && d >= static_cast<double>(n - 1)) {
      throw Error(ErrorCode::degenerate_degree,
                  "node " + std::to_string(i + 1) + " is connected to every other node");
    }
  }
}

namespace detail {

/// o_ij = z_ij' gamma as a symmetric matrix with zero diagonal.
inline Matrix covariate_offsets(const CovariateTensor& Z, const Vector& gamma) {
  if (gamma.size() != Z.dim()) throw Error(ErrorCode::shape, "gamma length does not match covariate dimension");
  const Index n = Z.nodes();
  Matrix o = Matrix::Zero(n, n);
  if (Z.dim() == 0) return o;
  for (Index i = 0; i < n; ++i) {
    for (Index j = i + 1; j < n; ++j) {
      o(i, j) = Z.z(i, j).dot(gamma);
      o(j, i) = o(i, j);
    }
  }
  return o;
}

inline Vector degree_residual(const Network& net, const Matrix& offsets, const Vector& beta,
                              EdgeFamily fam) {
  const Index n = net.size();
  Vector F = -net.degrees();
  for (Index i = 0; i < n; ++i) {
    for (Index j = i + 1; j < n; ++j) {
      const double m = mu(fam, beta[i] + beta[j] + offsets(i, j));
      F[i] += m;
      F[j] += m;
    }
  }
  return F;
}

inline Matrix degree_jacobian(const Matrix& offsets, const Vector& beta, EdgeFamily fam) {
  const Index n = beta.size();
  Matrix V = Matrix::Zero(n, n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = i + 1; j < n; ++j) {
      const double d1 = mu_derivative(fam, beta[i] + beta[j] + offsets(i, j), 1);
      if (!(d1 > 0.0)) throw Error(ErrorCode::non_positive_derivative, "mu'(pi) <= 0");
      V(i, j) = d1;
      V(j, i) = d1;
    }
  }
  for (Index i = 0; i < n; ++i) V(i, i) = V.row(i).sum();
  return V;
}

inline Vector initial_beta(const Network& net, EdgeFamily fam, BetaInit init) {
  const Index n = net.size();
  Vector beta = Vector::Zero(n);
  if (init == BetaInit::zeros) return beta;
  const Vector& d = net.degrees();
  if (fam.binary()) {
    const double lo = 1.0 / (2.0 * static_cast<double>(n));
    for (Index i = 0; i < n; ++i) {
      const double r = std::clamp(d[i] / static_cast<double>(n - 1), lo, 1.0 - lo);
      beta[i] = 0.5 * std::log(r / (1.0 - r));
    }
  } else {
    // exp(beta_i + beta_j) = d_i d_j / sum(d) reproduces the degrees to first order.
    const double total = std::max(d.sum(), 0.5);
    for (Index i = 0; i < n; ++i) beta[i] = std::log(std::max(d[i], 0.5)) - 0.5 * std::log(total);
  }
  return beta;
}

struct BetaSolve {
  Vector beta;
  Vector F;
  int iters = 0;
};

/// Damped Newton on F_gamma(beta) = 0 for fixed offsets.
inline BetaSolve newton_beta(const Network& net, const Matrix& offsets, EdgeFamily fam, Vector beta,
                             const FitOptions& opts) {
  const double tol = opts.inner_tol * std::max(1.0, net.degrees().lpNorm<Eigen::Infinity>());
  BetaSolve out{std::move(beta), Vector(), 0};
  out.F = degree_residual(net, offsets, out.beta, fam);
  double norm2 = out.F.norm();
  while (out.F.lpNorm<Eigen::Infinity>() > tol) {
    if (out.iters >= opts.max_inner_iters) {
      throw Error(ErrorCode::max_iterations, "beta solve did not converge in " +
                                                 std::to_string(opts.max_inner_iters) + " iterations");
    }
    ++out.iters;
    const Matrix V = degree_jacobian(offsets, out.beta, fam);
    const Vector step = SpdSolver(V).solve(out.F);
    double t = 1.0;
    bool accepted = false;
    for (int h = 0; h <= opts.damping; ++h, t *= 0.5) {
      Vector candidate = out.beta - t * step;
      Vector F = degree_residual(net, offsets, candidate, fam);
      const double cand2 = F.norm();
      if (cand2 < norm2) {
        out.beta = std::move(candidate);
        out.F = std::move(F);
        norm2 = cand2;
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      throw Error(ErrorCode::max_iterations, "beta line search stalled at ||F||_inf = " +
                                                 std::to_string(out.F.lpNorm<Eigen::Infinity>()));
    }
  }
  return out;
}

inline double covariate_scale(const Network& net, const CovariateTensor& Z) {
  double s = 0.0;
  if (Z.dim() == 0) return 1.0;
  for (Index i = 0; i < net.size(); ++i)
    for (Index j = i + 1; j < net.size(); ++j) s += Z.z(i, j).lpNorm<Eigen::Infinity>() * net.weight(i, j);
  return std::max(1.0, s);
}

/// Q_c at (beta_gamma, gamma) using the precomputed offsets.
inline Vector covariate_residual(const Network& net, const CovariateTensor& Z, const Matrix& offsets,
                                 const Vector& beta, EdgeFamily fam) {
  Vector q = Vector::Zero(Z.dim());
  for (Index i = 0; i < net.size(); ++i)
    for (Index j = i + 1; j < net.size(); ++j)
      q.noalias() += (mu(fam, beta[i] + beta[j] + offsets(i, j)) - net.weight(i, j)) * Z.z(i, j);
  return q;
}

/// gamma is identifiable only if no covariate direction is a node-sum pattern
/// c_i + c_j. Checks the Gram matrix of the covariates residualised on the
/// beta design, i.e. H with unit weights, where V0 = (n-2) I + 1 1' has the
/// closed-form inverse (I - 1 1' / (2n-2)) / (n-2).
inline void check_design(const CovariateTensor& Z) {
  const Index p = Z.dim();
  if (p == 0) return;
  const Index n = Z.nodes();
  const Matrix G = Z.gram();
  Matrix D = Matrix::Zero(n, p);
  for (Index i = 0; i < n; ++i) {
    for (Index j = i + 1; j < n; ++j) {
      D.row(i) += Z.z(i, j).transpose();
      D.row(j) += Z.z(i, j).transpose();
    }
  }
  const double m = static_cast<double>(n);
  const Vector colsum = D.colwise().sum().transpose();
  Matrix H0 = G - (D.transpose() * D - colsum * colsum.transpose() / (2.0 * m - 2.0)) / (m - 2.0);
  H0 = 0.5 * (H0 + H0.transpose());
  const double top = Eigen::SelfAdjointEigenSolver<Matrix>(G).eigenvalues().cwiseAbs().maxCoeff();
  if (!(top > 0.0)) {
    throw Error(ErrorCode::degenerate_design, "covariate Gram matrix is singular; gamma is not identifiable");
  }
  if (Eigen::SelfAdjointEigenSolver<Matrix>(H0).eigenvalues().minCoeff() <= 1e-10 * top) {
    throw Error(ErrorCode::degenerate_design,
                "covariates are collinear with node effects (or with each other); gamma is not identifiable");
  }
}

/// Binary degree sequences on the boundary of the degree polytope (and the
/// analogous covariate conditions) have no finite root; the iterates then run
/// off to infinity while the residual keeps shrinking like exp(-|pi|).
/// |pi| >= 18 means edge probabilities within 1e-8 of 0 or 1.
inline constexpr double kBinaryPiLimit = 18.0;

inline void require_finite_estimate(const Vector& beta, const CovariateTensor& Z, const Vector& gamma,
                                    EdgeFamily fam) {
  if (!fam.binary()) return;
  const Index n = beta.size();
  double worst = 0.0;
  for (Index i = 0; i < n; ++i)
    for (Index j = i + 1; j < n; ++j) {
      double pi = beta[i] + beta[j];
      if (Z.dim() > 0) pi += Z.z(i, j).dot(gamma);
      worst = std::max(worst, std::abs(pi));
    }
  if (!(worst < kBinaryPiLimit)) {
    throw Error(ErrorCode::max_iterations,
                "estimates diverge (|pi| reached " + std::to_string(worst) + "); no finite solution exists");
  }
}

template <class Rhs>
Matrix solve_small(const Matrix& H, const Rhs& rhs) {
  Eigen::FullPivLU<Matrix> lu(H);
  lu.setThreshold(1e-13);
  if (!lu.isInvertible()) throw Error(ErrorCode::singular_jacobian, "profiled Jacobian H is singular");
  return lu.solve(rhs);
}

}  // namespace detail

/// beta_gamma: the solution of F_gamma(beta) = 0 for a fixed gamma.
inline Vector solve_beta_given_gamma(const Network& net, const Vector& gamma, const CovariateTensor& Z,
                                     EdgeFamily fam, const FitOptions& opts = {}) {
  opts.validate();
  check_shapes(net, Z);
  validate_for_fit(net, fam);
  const Matrix offsets = detail::covariate_offsets(Z, gamma);
  return detail::newton_beta(net, offsets, fam, detail::initial_beta(net, fam, opts.beta_init), opts).beta;
}

/// Two-stage moment estimator: an inner Newton solve for beta_gamma nested in
/// an outer Newton iteration gamma <- gamma - H^{-1} Q_c(gamma) on the
/// profiled covariate equation. Both stages halve steps that fail to reduce
/// the residual. Reaching max_outer_iters returns converged = false; a failed
/// inner solve throws max_iterations.
inline FitResult fit(const Network& net, const CovariateTensor& Z, EdgeFamily fam, const FitOptions& opts = {}) {
  opts.validate();
  check_shapes(net, Z);
  validate_for_fit(net, fam);
  detail::check_design(Z);

  const Index p = Z.dim();
  FitResult r;
  r.family = fam;
  r.F_scale = std::max(1.0, net.degrees().lpNorm<Eigen::Infinity>());
  r.Q_scale = detail::covariate_scale(net, Z);
  const double q_tol = opts.outer_tol * r.Q_scale;

  Vector gamma = Vector::Zero(p);
  Matrix offsets = detail::covariate_offsets(Z, gamma);
  auto inner = detail::newton_beta(net, offsets, fam, detail::initial_beta(net, fam, opts.beta_init), opts);
  r.inner_iters += inner.iters;
  Vector q = detail::covariate_residual(net, Z, offsets, inner.beta, fam);

  if (opts.max_outer_iters > 0 || p == 0) {
    for (;;) {
      const double q_inf = p > 0 ? q.lpNorm<Eigen::Infinity>() : 0.0;
      r.trace.push_back({gamma, q_inf});
      if (q_inf <= q_tol) {
        r.converged = true;
        break;
      }
      if (r.outer_iters >= opts.max_outer_iters) break;
      ++r.outer_iters;

      const Matrix H = profile_H(Params{inner.beta, gamma}, Z, fam);
      const Vector step = detail::solve_small(H, q);
      const double q2 = q.norm();
      double t = 1.0;
      bool accepted = false;
      for (int h = 0; h <= opts.damping; ++h, t *= 0.5) {
        Vector candidate = gamma - t * step;
        Matrix cand_offsets = detail::covariate_offsets(Z, candidate);
        auto cand_inner = detail::newton_beta(net, cand_offsets, fam, inner.beta, opts);
        r.inner_iters += cand_inner.iters;
        Vector cand_q = detail::covariate_residual(net, Z, cand_offsets, cand_inner.beta, fam);
        if (cand_q.norm() < q2) {
          gamma = std::move(candidate);
          offsets = std::move(cand_offsets);
          inner = std::move(cand_inner);
          q = std::move(cand_q);
          accepted = true;
          break;
        }
      }
      if (!accepted) break;
    }
  }

  detail::require_finite_estimate(inner.beta, Z, gamma, fam);
  r.beta_hat = inner.beta;
  r.gamma_hat = gamma;
  r.final_F_norm = inner.F.lpNorm<Eigen::Infinity>();
  r.final_Q_norm = p > 0 ? q.lpNorm<Eigen::Infinity>() : 0.0;
  r.v_diag = detail::degree_jacobian(offsets, inner.beta, fam).diagonal();
  return r;
}

/// Block-alternating variant that never forms an n x n matrix: Gauss-Seidel
/// sweeps of exact one-dimensional solves for the beta_i, alternated with a
/// single Newton step in gamma whose profiled Jacobian is applied through
/// matrix-free conjugate gradients. Converges to the same root as fit().
inline FitResult alternating_fit(const Network& net, const CovariateTensor& Z, EdgeFamily fam,
                                 const FitOptions& opts = {}) {
  opts.validate();
  check_shapes(net, Z);
  validate_for_fit(net, fam);
  detail::check_design(Z);

  const Index n = net.size();
  const Index p = Z.dim();
  const Vector& d = net.degrees();
  FitResult r;
  r.family = fam;
  r.F_scale = std::max(1.0, d.lpNorm<Eigen::Infinity>());
  r.Q_scale = detail::covariate_scale(net, Z);
  const double f_tol = opts.inner_tol * r.F_scale;
  const double q_tol = opts.outer_tol * r.Q_scale;

  Vector gamma = Vector::Zero(p);
  Vector beta = detail::initial_beta(net, fam, opts.beta_init);

  auto offset = [&](Index i, Index j, const Vector& g) { return p > 0 ? Z.z(i, j).dot(g) : 0.0; };

  auto residual = [&](const Vector& b, const Vector& g) {
    Vector F = -d;
    for (Index i = 0; i < n; ++i)
      for (Index j = i + 1; j < n; ++j) {
        const double m = mu(fam, b[i] + b[j] + offset(i, j, g));
        F[i] += m;
        F[j] += m;
      }
    return F;
  };

  // Solves sum_j mu(b + beta_j + o_ij) = d_i in b by safeguarded Newton.
  auto solve_coordinate = [&](Index i, const Vector& g) {
    double b = beta[i];
    auto eval = [&](double x, double& slope) {
      double s = -d[i];
      slope = 0.0;
      for (Index j = 0; j < n; ++j) {
        if (j == i) continue;
        const double pi = x + beta[j] + offset(i, j, g);
        s += mu(fam, pi);
        slope += mu_derivative(fam, pi, 1);
      }
      return s;
    };
    double slope = 0.0;
    double g_val = eval(b, slope);
    for (int it = 0; it < 100 && std::abs(g_val) > 0.01 * f_tol; ++it) {
      const double step = g_val / slope;
      double t = 1.0;
      bool moved = false;
      for (int h = 0; h <= opts.damping; ++h, t *= 0.5) {
        double cand_slope = 0.0;
        const double cand = eval(b - t * step, cand_slope);
        if (std::abs(cand) < std::abs(g_val)) {
          b -= t * step;
          g_val = cand;
          slope = cand_slope;
          moved = true;
          break;
        }
      }
      if (!moved) break;
    }
    beta[i] = b;
  };

  auto sweep_to_tolerance = [&](const Vector& g) {
    Vector F = residual(beta, g);
    int sweeps = 0;
    while (F.lpNorm<Eigen::Infinity>() > f_tol) {
      if (sweeps >= opts.max_inner_iters) {
        throw Error(ErrorCode::max_iterations, "Gauss-Seidel sweeps did not converge");
      }
      for (Index i = 0; i < n; ++i) solve_coordinate(i, g);
      ++sweeps;
      F = residual(beta, g);
    }
    r.inner_iters += sweeps;
    return F;
  };

  auto covariate_residual = [&](const Vector& b, const Vector& g) {
    Vector q = Vector::Zero(p);
    for (Index i = 0; i < n; ++i)
      for (Index j = i + 1; j < n; ++j)
        q.noalias() += (mu(fam, b[i] + b[j] + offset(i, j, g)) - net.weight(i, j)) * Z.z(i, j);
    return q;
  };

  Vector F = sweep_to_tolerance(gamma);
  Vector q = covariate_residual(beta, gamma);

  if (opts.max_outer_iters > 0 || p == 0) {
    for (;;) {
      const double q_inf = p > 0 ? q.lpNorm<Eigen::Infinity>() : 0.0;
      r.trace.push_back({gamma, q_inf});
      if (q_inf <= q_tol) {
        r.converged = true;
        break;
      }
      if (r.outer_iters >= opts.max_outer_iters) break;
      ++r.outer_iters;

      // Derivative blocks without storing V: its diagonal, D and A.
      Vector vdiag = Vector::Zero(n);
      Matrix D = Matrix::Zero(n, p);
      Matrix A = Matrix::Zero(p, p);
      for (Index i = 0; i < n; ++i)
        for (Index j = i + 1; j < n; ++j) {
          const auto z = Z.z(i, j);
          const double d1 = mu_derivative(fam, beta[i] + beta[j] + z.dot(gamma), 1);
          vdiag[i] += d1;
          vdiag[j] += d1;
          D.row(i).noalias() += d1 * z.transpose();
          D.row(j).noalias() += d1 * z.transpose();
          A.noalias() += d1 * z * z.transpose();
        }
      auto apply_V = [&](const Vector& x) -> Vector {
        Vector y = vdiag.cwiseProduct(x);
        for (Index i = 0; i < n; ++i)
          for (Index j = i + 1; j < n; ++j) {
            const double d1 = mu_derivative(fam, beta[i] + beta[j] + Z.z(i, j).dot(gamma), 1);
            y[i] += d1 * x[j];
            y[j] += d1 * x[i];
          }
        return y;
      };
      const Vector inv_diag = vdiag.cwiseInverse();
      Matrix VinvD(n, p);
      for (Index k = 0; k < p; ++k) VinvD.col(k) = preconditioned_cg(apply_V, inv_diag, D.col(k), 1e-13);
      Matrix H = A - D.transpose() * VinvD;
      H = 0.5 * (H + H.transpose());

      const Vector step = detail::solve_small(H, q);
      const double q2 = q.norm();
      const Vector beta_prev = beta;
      double t = 1.0;
      bool accepted = false;
      for (int h = 0; h <= opts.damping; ++h, t *= 0.5) {
        Vector candidate = gamma - t * step;
        // First-order prediction of beta_gamma along the step.
        beta = beta_prev + t * (VinvD * step);
        Vector cand_F = sweep_to_tolerance(candidate);
        Vector cand_q = covariate_residual(beta, candidate);
        if (cand_q.norm() < q2) {
          gamma = std::move(candidate);
          F = std::move(cand_F);
          q = std::move(cand_q);
          accepted = true;
          break;
        }
      }
      if (!accepted) {
        beta = beta_prev;
        break;
      }
    }
  }

  detail::require_finite_estimate(beta, Z, gamma, fam);
  r.beta_hat = beta;
  r.gamma_hat = gamma;
  r.final_F_norm = F.lpNorm<Eigen::Infinity>();
  r.final_Q_norm = p > 0 ? q.lpNorm<Eigen::Infinity>() : 0.0;
  r.v_diag = Vector::Zero(n);
  for (Index i = 0; i < n; ++i)
    for (Index j = i + 1; j < n; ++j) {
      const double d1 = mu_derivative(fam, beta[i] + beta[j] + offset(i, j, gamma), 1);
      r.v_diag[i] += d1;
      r.v_diag[j] += d1;
    }
  return r;
}

}  // namespace cabm
