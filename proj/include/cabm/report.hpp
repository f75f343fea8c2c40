#pragma once

#include <nlohmann/json.hpp>

#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cabm/estimator.hpp"
#include "cabm/inference.hpp"
#include "cabm/model.hpp"
#include "cabm/network.hpp"

namespace cabm {

inline constexpr const char* kVersion = "0.1.0";

// Top-level keys of a fit report (written in sorted order). Values that were not requested are null.
inline const std::vector<std::string>& fit_report_keys() {
  static const std::vector<std::string> keys{
      "version",    "family",     "n",          "p",         "covariate_names", "converged", "inner_iterations",
      "outer_iterations", "final_F_norm", "final_Q_norm", "level",   "beta_hat",  "beta_se",    "gamma_hat",
      "gamma_se",   "gamma_ci",   "gamma_bc",   "gamma_bc_ci", "homogeneity_tests", "diagnostics", "H_hat",
      "Sigma_hat",  "gamma_cov",  "B_hat"};
  return keys;
}

namespace detail {

inline nlohmann::json to_json_array(const Vector& v) {
  auto a = nlohmann::json::array();
  for (Index k = 0; k < v.size(); ++k) a.push_back(v[k]);
  return a;
}

inline nlohmann::json to_json_rows(const Matrix& m) {
  auto rows = nlohmann::json::array();
  for (Index r = 0; r < m.rows(); ++r) rows.push_back(to_json_array(m.row(r).transpose()));
  return rows;
}

// JSON has no infinity; non-finite values become null.
inline nlohmann::json finite_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(); }

}  // namespace detail

struct FitReportOptions {
  double level = 0.95;
  bool bias_correct = false;
  std::vector<std::pair<Index, Index>> pairs;  // 1-based
};

/// Builds the JSON fit report. `fit_result` must be converged.
inline nlohmann::json fit_report(const FitResult& fr, const Network& net, const CovariateTensor& Z,
                                 const std::vector<std::string>& names, const FitReportOptions& opts) {
  using nlohmann::json;
  const InferenceResult inf = gamma_inference(fr, net, Z, fr.family);
  const Index p = fr.dim();

  json r;
  r["version"] = kVersion;
  r["family"] = std::string(fr.family.name());
  r["n"] = fr.nodes();
  r["p"] = p;
  r["covariate_names"] = names;
  r["converged"] = fr.converged;
  r["inner_iterations"] = fr.inner_iters;
  r["outer_iterations"] = fr.outer_iters;
  r["final_F_norm"] = fr.final_F_norm;
  r["final_Q_norm"] = fr.final_Q_norm;
  r["level"] = opts.level;
  r["beta_hat"] = detail::to_json_array(fr.beta_hat);
  r["beta_se"] = detail::to_json_array(inf.beta_se());
  r["gamma_hat"] = detail::to_json_array(fr.gamma_hat);
  r["gamma_se"] = detail::to_json_array(inf.gamma_se());

  auto ci = json::array();
  auto ci_bc = json::array();
  for (Index k = 0; k < p; ++k) {
    const auto a = gamma_interval(inf, k, opts.level, false);
    ci.push_back({a.lower, a.upper});
    const auto b = gamma_interval(inf, k, opts.level, true);
    ci_bc.push_back({b.lower, b.upper});
  }
  r["gamma_ci"] = ci;
  r["gamma_bc"] = opts.bias_correct ? detail::to_json_array(inf.gamma_bc) : json();
  r["gamma_bc_ci"] = opts.bias_correct ? ci_bc : json();

  auto tests = json::array();
  for (const auto& [i1, j1] : opts.pairs) {
    const auto interval = beta_diff_interval(fr, i1 - 1, j1 - 1, opts.level);
    const auto t = homogeneity_test(fr, i1 - 1, j1 - 1);
    tests.push_back({{"i", i1},
                     {"j", j1},
                     {"difference", interval.point},
                     {"ci", {interval.lower, interval.upper}},
                     {"statistic", t.statistic},
                     {"p_value", t.p_value}});
  }
  r["homogeneity_tests"] = tests;

  const auto diag = condition_diagnostics(Params{fr.beta_hat, fr.gamma_hat}, Z, fr.family);
  r["diagnostics"] = {{"b0", diag.b0},
                      {"b1", diag.b1},
                      {"b2", diag.b2},
                      {"b3", diag.b3},
                      {"kappa_hat", detail::finite_or_null(diag.kappa_hat)},
                      {"h_singular", diag.h_singular},
                      {"density", diag.density},
                      {"pi_min", diag.pi_min},
                      {"pi_max", diag.pi_max},
                      {"z_star", diag.z_star}};
  r["H_hat"] = detail::to_json_rows(inf.H_hat);
  r["Sigma_hat"] = detail::to_json_rows(inf.Sigma_hat);
  r["gamma_cov"] = detail::to_json_rows(inf.gamma_cov);
  r["B_hat"] = detail::to_json_array(inf.B_hat);
  return r;
}

inline nlohmann::json error_report(const Error& e) {
  return {{"error", {{"code", std::string(code_name(e.code()))}, {"message", e.what()}}}};
}

}  // namespace cabm
