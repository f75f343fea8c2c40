#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "cabm/errors.hpp"

namespace cabm {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

/// Number of unordered pairs i<j among n nodes.
constexpr Index pair_count(Index n) noexcept { return n * (n - 1) / 2; }

/// Position of pair (i,j), i<j, in row-major upper-triangle order.
constexpr Index pair_index(Index n, Index i, Index j) noexcept {
  return i * (2 * n - i - 1) / 2 + (j - i - 1);
}

/// Weighted undirected network without self-loops.
class Network {
 public:
  Network() = default;

  /// Validates symmetry, zero diagonal, nonnegativity and n >= 3.
  explicit Network(Matrix weights) : weights_(std::move(weights)) {
    const Index n = weights_.rows();
    if (weights_.cols() != n) throw Error(ErrorCode::shape, "weight matrix must be square");
    if (n < 3) throw Error(ErrorCode::shape, "a network needs at least 3 nodes");
    for (Index i = 0; i < n; ++i) {
      if (weights_(i, i) != 0.0) throw Error(ErrorCode::shape, "self-loops are not allowed");
      for (Index j = i + 1; j < n; ++j) {
        const double a = weights_(i, j);
        if (!std::isfinite(a)) throw Error(ErrorCode::domain, "non-finite edge weight");
        if (a != weights_(j, i)) throw Error(ErrorCode::shape, "weight matrix must be symmetric");
        if (a < 0.0) {
          throw Error(ErrorCode::negative_weight, "negative weight on pair (" +
                                                      std::to_string(i + 1) + "," +
                                                      std::to_string(j + 1) + ")");
        }
      }
    }
    degrees_ = weights_.rowwise().sum();
  }

  Index size() const noexcept { return weights_.rows(); }
  double weight(Index i, Index j) const { return weights_(i, j); }
  const Matrix& weights() const noexcept { return weights_; }
  const Vector& degrees() const noexcept { return degrees_; }

  bool is_binary() const {
    return (weights_.array() == 0.0 || weights_.array() == 1.0).all();
  }

  friend bool operator==(const Network& a, const Network& b) {
    return a.weights_.rows() == b.weights_.rows() && a.weights_ == b.weights_;
  }

 private:
  Matrix weights_;
  Vector degrees_;
};

/// Edge covariates z_ij for i<j, stored densely in pair order; z_ji = z_ij.
class CovariateTensor {
 public:
  CovariateTensor() = default;
  CovariateTensor(Index n, Index p) : n_(n), p_(p), data_(static_cast<std::size_t>(pair_count(n) * p), 0.0) {
    if (n < 0 || p < 0) throw Error(ErrorCode::shape, "negative covariate dimensions");
  }

  Index nodes() const noexcept { return n_; }
  Index dim() const noexcept { return p_; }

  Eigen::Map<const Vector> z(Index i, Index j) const {
    return Eigen::Map<const Vector>(data_.data() + offset(i, j), p_);
  }
  Eigen::Map<Vector> z(Index i, Index j) {
    return Eigen::Map<Vector>(data_.data() + offset(i, j), p_);
  }
  double operator()(Index i, Index j, Index k) const { return data_[static_cast<std::size_t>(offset(i, j) + k)]; }

  void set(Index i, Index j, const Vector& value) {
    if (value.size() != p_) throw Error(ErrorCode::shape, "covariate vector has wrong length");
    z(i, j) = value;
  }

  /// Largest absolute covariate entry over all pairs.
  double z_star() const {
    double m = 0.0;
    for (double v : data_) m = std::max(m, std::abs(v));
    return m;
  }

  /// Gram matrix sum_{i<j} z_ij z_ij^T.
  Matrix gram() const {
    Matrix g = Matrix::Zero(p_, p_);
    for (Index i = 0; i < n_; ++i)
      for (Index j = i + 1; j < n_; ++j) g.noalias() += z(i, j) * z(i, j).transpose();
    return g;
  }

  /// Returns a copy with every covariate multiplied by factor.
  CovariateTensor scaled(double factor) const {
    CovariateTensor out = *this;
    for (double& v : out.data_) v *= factor;
    return out;
  }

  const std::vector<double>& raw() const noexcept { return data_; }

  friend bool operator==(const CovariateTensor&, const CovariateTensor&) = default;

 private:
  Index offset(Index i, Index j) const {
    if (i > j) std::swap(i, j);
    return pair_index(n_, i, j) * p_;
  }

  Index n_ = 0;
  Index p_ = 0;
  std::vector<double> data_;
};

struct Params {
  Vector beta;
  Vector gamma;
};

inline void check_shapes(const Network& net, const CovariateTensor& Z) {
  if (Z.nodes() != net.size()) {
    throw Error(ErrorCode::shape, "covariates cover " + std::to_string(Z.nodes()) +
                                      " nodes but the network has " + std::to_string(net.size()));
  }
}

inline void check_shapes(const Params& params, const CovariateTensor& Z) {
  if (params.beta.size() != Z.nodes()) throw Error(ErrorCode::shape, "beta length does not match node count");
  if (params.gamma.size() != Z.dim()) throw Error(ErrorCode::shape, "gamma length does not match covariate dimension");
  if (!params.beta.allFinite() || !params.gamma.allFinite()) {
    throw Error(ErrorCode::domain, "non-finite parameter value");
  }
}

}  // namespace cabm
