#pragma once

#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "cabm/errors.hpp"
#include "cabm/estimator.hpp"
#include "cabm/family.hpp"
#include "cabm/inference.hpp"
#include "cabm/network.hpp"
#include "cabm/normal.hpp"

namespace cabm {

/// SplitMix64 finalizer; used to derive independent per-replication seeds.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seed for stream `stream` of replication `rep`; independent of the order in
/// which replications are run.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t rep, std::uint64_t stream = 0) noexcept {
  return mix64(mix64(mix64(master) ^ rep) + stream);
}

/// Resolves the beta-grid scale from "0" | "loglog" | "sqrtlog" | "log" | a number.
inline double resolve_L(const std::string& spec, Index n) {
  const double ln = std::log(static_cast<double>(n));
  if (spec == "0") return 0.0;
  if (spec == "loglog") return std::log(ln);
  if (spec == "sqrtlog") return std::sqrt(ln);
  if (spec == "log") return ln;
  try {
    std::size_t used = 0;
    const double v = std::stod(spec, &used);
    if (used == spec.size() && std::isfinite(v) && v >= 0.0) return v;
  } catch (const std::exception&) {
  }
  throw Error(ErrorCode::config, "invalid L_spec '" + spec + "'");
}

struct SimDesign {
  Index n = 100;
  std::string L_spec = "0";
  EdgeFamily family = EdgeFamily::poisson();
  Vector gamma_star = (Vector(2) << 0.5, 1.0).finished();
  int reps = 1000;
  std::uint64_t master_seed = 1;
  std::vector<std::pair<Index, Index>> tracked_pairs;  // 1-based node labels
  double level = 0.95;
  unsigned threads = 0;  // 0: hardware concurrency

  double L() const { return resolve_L(L_spec, n); }

  void validate() const {
    if (n < 3) throw Error(ErrorCode::config, "n must be at least 3");
    if (reps < 1) throw Error(ErrorCode::config, "reps must be at least 1");
    if (gamma_star.size() != 2) throw Error(ErrorCode::config, "gamma_star must have two entries");
    if (!(level > 0.0 && level < 1.0)) throw Error(ErrorCode::config, "level must lie in (0,1)");
    (void)L();
    for (const auto& [i, j] : tracked_pairs) {
      if (i < 1 || j < 1 || i > n || j > n || i == j) {
        throw Error(ErrorCode::config, "tracked pair (" + std::to_string(i) + "," + std::to_string(j) +
                                           ") is not a pair of distinct nodes in 1..n");
      }
    }
  }
};

/// Edge covariates z_ij = (x_i1 x_j1, |x_i2 - x_j2|) from two nodal covariates.
inline CovariateTensor homophily_covariates(const Vector& x1, const Vector& x2) {
  if (x1.size() != x2.size()) throw Error(ErrorCode::shape, "nodal covariates differ in length");
  const Index n = x1.size();
  CovariateTensor Z(n, 2);
  for (Index i = 0; i < n; ++i) {
    for (Index j = i + 1; j < n; ++j) {
      auto z = Z.z(i, j);
      z[0] = x1[i] * x1[j];
      z[1] = std::abs(x2[i] - x2[j]);
    }
  }
  return Z;
}

struct Design {
  Vector beta_star;
  CovariateTensor Z;
};

/// beta*_i = (i-1) L / (n-1); x_i1 uniform on {-1,+1}, x_i2 ~ Beta(2,2).
inline Design generate_design(Index n, double L, std::uint64_t seed) {
  if (n < 3) throw Error(ErrorCode::shape, "n must be at least 3");
  if (!(L >= 0.0)) throw Error(ErrorCode::domain, "L must be nonnegative");
  Vector beta = Vector::LinSpaced(n, 0.0, L);
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution coin(0.5);
  std::gamma_distribution<double> shape2(2.0, 1.0);
  Vector x1(n), x2(n);
  for (Index i = 0; i < n; ++i) {
    x1[i] = coin(rng) ? 1.0 : -1.0;
    const double a = shape2(rng);
    const double b = shape2(rng);
    x2[i] = a / (a + b);
  }
  return {std::move(beta), homophily_covariates(x1, x2)};
}

/// Independent draws a_ij ~ family at pi*_ij, in pair order.
inline Network sample_network(const Vector& beta_star, const Vector& gamma_star, const CovariateTensor& Z,
                              EdgeFamily fam, std::uint64_t seed) {
  const Params truth{beta_star, gamma_star};
  check_shapes(truth, Z);
  const Index n = beta_star.size();
  std::mt19937_64 rng(seed);
  Matrix A = Matrix::Zero(n, n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = i + 1; j < n; ++j) {
      double pi = beta_star[i] + beta_star[j];
      if (Z.dim() > 0) pi += Z.z(i, j).dot(gamma_star);
      A(i, j) = sample_edge(fam, pi, rng);
      A(j, i) = A(i, j);
    }
  }
  return Network(std::move(A));
}

struct QQPoint {
  double theoretical = 0.0;
  double empirical = 0.0;
};

/// Sorted sample against normal quantiles at plotting positions (k - 0.5)/m.
inline std::vector<QQPoint> normal_qq(std::vector<double> sample) {
  std::sort(sample.begin(), sample.end());
  const double m = static_cast<double>(sample.size());
  std::vector<QQPoint> out;
  out.reserve(sample.size());
  for (std::size_t k = 0; k < sample.size(); ++k) {
    out.push_back({normal::quantile((static_cast<double>(k) + 0.5) / m), sample[k]});
  }
  return out;
}

/// Pearson correlation of the two QQ coordinates.
inline double qq_correlation(const std::vector<QQPoint>& qq) {
  const double m = static_cast<double>(qq.size());
  double mx = 0.0, my = 0.0;
  for (const auto& q : qq) {
    mx += q.theoretical;
    my += q.empirical;
  }
  mx /= m;
  my /= m;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (const auto& q : qq) {
    sxy += (q.theoretical - mx) * (q.empirical - my);
    sxx += (q.theoretical - mx) * (q.theoretical - mx);
    syy += (q.empirical - my) * (q.empirical - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

struct PairCoverage {
  Index i = 0, j = 0;  // 1-based
  double coverage = 0.0;
  double mean_length = 0.0;
  std::vector<double> xi;  // standardized differences, replication order
  std::vector<QQPoint> qq;
};

struct CoefficientCoverage {
  Index k = 0;  // 1-based
  double coverage = 0.0;
  double coverage_bc = 0.0;
  double mean_length = 0.0;
  double mean_estimate = 0.0;
  double mean_estimate_bc = 0.0;
  double mean_abs_correction = 0.0;  // mean |gamma_bc - gamma_hat|
};

struct MonteCarloReport {
  int reps = 0;
  int successes = 0;
  int failures = 0;
  std::vector<PairCoverage> pairs;
  std::vector<CoefficientCoverage> coefficients;
  std::vector<double> beta_sup_errors;  // ||beta_hat - beta*||_inf per successful replication
  std::vector<double> gamma_sup_errors;
};

namespace detail {

struct Replication {
  bool ok = false;
  std::vector<IntervalEstimate> pair_ci;
  std::vector<double> xi;
  std::vector<IntervalEstimate> gamma_ci;
  std::vector<IntervalEstimate> gamma_bc_ci;
  double beta_err = 0.0;
  double gamma_err = 0.0;
};

inline Replication run_replication(const SimDesign& design, const FitOptions& opts, int rep) {
  Replication out;
  const std::uint64_t seed = derive_seed(design.master_seed, static_cast<std::uint64_t>(rep));
  const Design d = generate_design(design.n, design.L(), derive_seed(seed, 0, 1));
  for (int attempt = 0; attempt < 2; ++attempt) {
    const Network net = sample_network(d.beta_star, design.gamma_star, d.Z, design.family,
                                       derive_seed(seed, static_cast<std::uint64_t>(attempt), 2));
    try {
      const FitResult fr = fit(net, d.Z, design.family, opts);
      if (!fr.converged) return out;
      for (const auto& [i1, j1] : design.tracked_pairs) {
        const Index i = i1 - 1, j = j1 - 1;
        const auto ci = beta_diff_interval(fr, i, j, design.level);
        const double scale = std::sqrt(1.0 / fr.v_diag[i] + 1.0 / fr.v_diag[j]);
        out.pair_ci.push_back(ci);
        out.xi.push_back((ci.point - (d.beta_star[i] - d.beta_star[j])) / scale);
      }
      const InferenceResult inf = gamma_inference(fr, net, d.Z, design.family);
      for (Index k = 0; k < inf.gamma_hat.size(); ++k) {
        out.gamma_ci.push_back(gamma_interval(inf, k, design.level, false));
        out.gamma_bc_ci.push_back(gamma_interval(inf, k, design.level, true));
      }
      out.beta_err = (fr.beta_hat - d.beta_star).lpNorm<Eigen::Infinity>();
      out.gamma_err = (fr.gamma_hat - design.gamma_star).lpNorm<Eigen::Infinity>();
      out.ok = true;
      return out;
    } catch (const Error& e) {
      if (e.code() == ErrorCode::degenerate_degree && attempt == 0) continue;
      return out;
    }
  }
  return out;
}

}  // namespace detail

/// Runs the coverage study. Replications are independent (seeded by
/// replication index) and merged in index order, so the report does not depend
/// on the thread count.
inline MonteCarloReport run_monte_carlo(const SimDesign& design, const FitOptions& opts = {}) {
  design.validate();
  opts.validate();
  const int reps = design.reps;
  std::vector<detail::Replication> results(static_cast<std::size_t>(reps));

  unsigned threads = design.threads != 0 ? design.threads : std::max(1u, std::thread::hardware_concurrency());
  threads = std::min<unsigned>(threads, static_cast<unsigned>(reps));
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int rep = next++; rep < reps; rep = next++) {
      results[static_cast<std::size_t>(rep)] = detail::run_replication(design, opts, rep);
    }
  };
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
  }

  MonteCarloReport report;
  report.reps = reps;
  const std::size_t npairs = design.tracked_pairs.size();
  const auto p = static_cast<std::size_t>(design.gamma_star.size());
  report.pairs.resize(npairs);
  report.coefficients.resize(p);
  for (std::size_t t = 0; t < npairs; ++t) {
    report.pairs[t].i = design.tracked_pairs[t].first;
    report.pairs[t].j = design.tracked_pairs[t].second;
  }
  for (std::size_t k = 0; k < p; ++k) report.coefficients[k].k = static_cast<Index>(k + 1);

  for (const auto& r : results) {
    if (!r.ok) {
      ++report.failures;
      continue;
    }
    ++report.successes;
    for (std::size_t t = 0; t < npairs; ++t) {
      const Index i = design.tracked_pairs[t].first - 1;
      const Index j = design.tracked_pairs[t].second - 1;
      const double truth = (static_cast<double>(i) - static_cast<double>(j)) * design.L() /
                           static_cast<double>(design.n - 1);
      auto& pc = report.pairs[t];
      pc.coverage += r.pair_ci[t].contains(truth) ? 1.0 : 0.0;
      pc.mean_length += r.pair_ci[t].length();
      pc.xi.push_back(r.xi[t]);
    }
    for (std::size_t k = 0; k < p; ++k) {
      auto& cc = report.coefficients[k];
      const double truth = design.gamma_star[static_cast<Index>(k)];
      cc.coverage += r.gamma_ci[k].contains(truth) ? 1.0 : 0.0;
      cc.coverage_bc += r.gamma_bc_ci[k].contains(truth) ? 1.0 : 0.0;
      cc.mean_length += r.gamma_ci[k].length();
      cc.mean_estimate += r.gamma_ci[k].point;
      cc.mean_estimate_bc += r.gamma_bc_ci[k].point;
      cc.mean_abs_correction += std::abs(r.gamma_bc_ci[k].point - r.gamma_ci[k].point);
    }
    report.beta_sup_errors.push_back(r.beta_err);
    report.gamma_sup_errors.push_back(r.gamma_err);
  }

  if (report.failures > reps / 10) {
    throw Error(ErrorCode::too_many_failures, std::to_string(report.failures) + " of " + std::to_string(reps) +
                                                  " replications failed (limit 10%)");
  }
  if (report.successes > 0) {
    const double s = static_cast<double>(report.successes);
    for (auto& pc : report.pairs) {
      pc.coverage /= s;
      pc.mean_length /= s;
      pc.qq = normal_qq(pc.xi);
    }
    for (auto& cc : report.coefficients) {
      cc.coverage /= s;
      cc.coverage_bc /= s;
      cc.mean_length /= s;
      cc.mean_estimate /= s;
      cc.mean_estimate_bc /= s;
      cc.mean_abs_correction /= s;
    }
  }
  return report;
}

// JSON form of SimDesign. Pair labels are 1-based; L_spec may be a string or a number.

inline void to_json(nlohmann::json& j, const SimDesign& d) {
  j = nlohmann::json{{"n", d.n},
                     {"L_spec", d.L_spec},
                     {"family", std::string(d.family.name())},
                     {"gamma_star", std::vector<double>(d.gamma_star.data(), d.gamma_star.data() + d.gamma_star.size())},
                     {"reps", d.reps},
                     {"master_seed", d.master_seed},
                     {"level", d.level}};
  auto pairs = nlohmann::json::array();
  for (const auto& [a, b] : d.tracked_pairs) pairs.push_back({a, b});
  j["tracked_pairs"] = pairs;
}

inline void from_json(const nlohmann::json& j, SimDesign& d) {
  try {
    d = SimDesign{};
    d.n = j.at("n").get<Index>();
    const auto& L = j.at("L_spec");
    if (L.is_string()) {
      d.L_spec = L.get<std::string>();
    } else if (L.is_number()) {
      const double v = L.get<double>();
      d.L_spec = v == 0.0 ? "0" : nlohmann::json(v).dump();
    } else {
      throw Error(ErrorCode::config, "L_spec must be a string or a number");
    }
    d.family = family_from_string(j.at("family").get<std::string>());
    if (j.contains("gamma_star")) {
      const auto g = j.at("gamma_star").get<std::vector<double>>();
      d.gamma_star = Eigen::Map<const Vector>(g.data(), static_cast<Index>(g.size()));
    }
    d.reps = j.at("reps").get<int>();
    if (j.contains("master_seed")) {
      d.master_seed = j.at("master_seed").get<std::uint64_t>();
    } else if (j.contains("seed")) {
      d.master_seed = j.at("seed").get<std::uint64_t>();
    }
    if (j.contains("tracked_pairs")) {
      for (const auto& pr : j.at("tracked_pairs")) {
        if (!pr.is_array() || pr.size() != 2) throw Error(ErrorCode::config, "tracked_pairs entries must be [i, j]");
        d.tracked_pairs.emplace_back(pr[0].get<Index>(), pr[1].get<Index>());
      }
    }
    if (j.contains("level")) d.level = j.at("level").get<double>();
    if (j.contains("threads")) d.threads = j.at("threads").get<unsigned>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::config, e.what());
  }
  d.validate();
}

}  // namespace cabm
