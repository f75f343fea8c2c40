#pragma once

#include <algorithm>
#include <functional>
#include <random>
#include <vector>

#include "cabm.hpp"
#include "support/oracles.hpp"

namespace fixtures {

using cabm::CovariateTensor;
using cabm::EdgeFamily;
using cabm::Index;
using cabm::Matrix;
using cabm::Network;
using cabm::Vector;

inline CovariateTensor random_covariates(Index n, Index p, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  CovariateTensor Z(n, p);
  for (Index i = 0; i < n; ++i)
    for (Index j = i + 1; j < n; ++j)
      for (Index k = 0; k < p; ++k) Z.z(i, j)[k] = g(rng);
  return Z;
}

/// Strict Erdos-Gallai inequalities: the degree sequence lies in the interior
/// of the degree polytope, which a finite binary beta-model estimate needs.
inline bool interior_degrees(const Network& net) {
  std::vector<double> d(net.degrees().data(), net.degrees().data() + net.size());
  std::sort(d.begin(), d.end(), std::greater<>());
  const auto n = d.size();
  double head = 0.0;
  for (std::size_t k = 1; k <= n; ++k) {
    head += d[k - 1];
    double rhs = static_cast<double>(k * (k - 1));
    for (std::size_t m = k; m < n; ++m) rhs += std::min(static_cast<double>(k), d[m]);
    if (!(head < rhs)) return false;
  }
  return true;
}

struct Instance {
  Network net;
  CovariateTensor Z;
  Vector beta_star;
  Vector gamma_star;
};

/// Random instance whose degrees admit a moment estimate (resampled until they do).
inline Instance random_instance(Index n, Index p, EdgeFamily fam, std::uint64_t seed, double beta_spread = 0.5) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-beta_spread, beta_spread);
  Instance inst;
  inst.Z = random_covariates(n, p, rng);
  inst.beta_star = Vector::NullaryExpr(n, [&] { return u(rng); });
  inst.gamma_star = Vector::NullaryExpr(p, [&] { return 0.5 * u(rng); });
  for (std::uint64_t attempt = 0;; ++attempt) {
    Network net = cabm::sample_network(inst.beta_star, inst.gamma_star, inst.Z, fam, seed * 7919 + attempt);
    try {
      cabm::validate_for_fit(net, fam);
      if (fam.binary() && !interior_degrees(net)) continue;
      inst.net = std::move(net);
      return inst;
    } catch (const cabm::Error&) {
    }
  }
}

inline oracle::Edges to_oracle(const CovariateTensor& Z) {
  oracle::Edges e;
  e.n = static_cast<int>(Z.nodes());
  e.p = static_cast<int>(Z.dim());
  e.z.assign(static_cast<std::size_t>(e.n * e.n), oracle::Vec::Zero(e.p));
  for (int i = 0; i < e.n; ++i)
    for (int j = 0; j < e.n; ++j)
      if (i != j) e.z[static_cast<std::size_t>(i * e.n + j)] = Z.z(std::min(i, j), std::max(i, j));
  return e;
}

inline Network constant_network(Index n, double a) {
  Matrix A = Matrix::Constant(n, n, a);
  A.diagonal().setZero();
  return Network(A);
}

}  // namespace fixtures
