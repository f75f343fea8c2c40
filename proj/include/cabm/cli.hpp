#pragma once

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "cabm/errors.hpp"
#include "cabm/estimator.hpp"
#include "cabm/io.hpp"
#include "cabm/report.hpp"
#include "cabm/simulation.hpp"

namespace cabm {

// Exit codes of the command-line tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 1;       // I/O, parse, usage and config errors
inline constexpr int kExitEstimation = 2;  // named estimation errors, including non-convergence
inline constexpr int kExitSimulation = 3;  // Monte-Carlo failure budget exceeded

namespace detail {

/// Parses "i,j;k,l" into 1-based pairs.
inline std::vector<std::pair<Index, Index>> parse_pairs(const std::string& text) {
  std::vector<std::pair<Index, Index>> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ';')) {
    if (item.empty()) continue;
    const auto comma = item.find(',');
    if (comma == std::string::npos) throw Error(ErrorCode::parse, "pair '" + item + "' is not of the form i,j");
    try {
      std::size_t u1 = 0, u2 = 0;
      const std::string a = item.substr(0, comma), b = item.substr(comma + 1);
      const long long i = std::stoll(a, &u1);
      const long long j = std::stoll(b, &u2);
      if (u1 != a.size() || u2 != b.size()) throw std::invalid_argument("trailing");
      out.emplace_back(static_cast<Index>(i), static_cast<Index>(j));
    } catch (const std::logic_error&) {
      throw Error(ErrorCode::parse, "pair '" + item + "' is not of the form i,j");
    }
  }
  return out;
}

inline int exit_code_for(ErrorCode code) {
  if (code == ErrorCode::too_many_failures) return kExitSimulation;
  return is_estimation_error(code) ? kExitEstimation : kExitInput;
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::io, "cannot write '" + path + "'");
  f << text;
  if (!f) throw Error(ErrorCode::io, "write to '" + path + "' failed");
}

struct FitArgs {
  std::string edges, covariates, family, out, pairs;
  double level = 0.95;
  bool bias_correct = false;
};

inline int cmd_fit(const FitArgs& a, std::ostream& out) {
  const EdgeFamily fam = family_from_string(a.family);
  const Dataset ds = load_dataset(a.edges, a.covariates);
  FitReportOptions ropts;
  ropts.level = a.level;
  ropts.bias_correct = a.bias_correct;
  ropts.pairs = parse_pairs(a.pairs);

  const FitResult fr = fit(ds.network, ds.covariates, fam);
  if (!fr.converged) {
    throw Error(ErrorCode::max_iterations, "outer iteration limit reached with ||Q||_inf = " +
                                               format_real(fr.final_Q_norm));
  }
  const std::string text = fit_report(fr, ds.network, ds.covariates, ds.covariate_names, ropts).dump(2) + "\n";
  if (a.out.empty()) {
    out << text;
  } else {
    write_text(a.out, text);
  }
  return kExitOk;
}

struct SimulateArgs {
  std::string config;
  std::string out_dir = ".";
};

inline std::string coverage_csv(const MonteCarloReport& r) {
  std::string s = "target,coverage,mean_length\n";
  for (const auto& pc : r.pairs) {
    s += "beta_" + std::to_string(pc.i) + "-beta_" + std::to_string(pc.j) + "," + format_real(pc.coverage) + "," +
         format_real(pc.mean_length) + "\n";
  }
  for (const auto& cc : r.coefficients) {
    s += "gamma_" + std::to_string(cc.k) + "," + format_real(cc.coverage) + "," + format_real(cc.mean_length) + "\n";
  }
  for (const auto& cc : r.coefficients) {
    // The corrected interval keeps the same width.
    s += "gamma_bc_" + std::to_string(cc.k) + "," + format_real(cc.coverage_bc) + "," + format_real(cc.mean_length) +
         "\n";
  }
  return s;
}

inline std::string qq_csv(const MonteCarloReport& r) {
  std::string s = "target,theoretical_quantile,empirical_quantile\n";
  for (const auto& pc : r.pairs) {
    const std::string target = "beta_" + std::to_string(pc.i) + "-beta_" + std::to_string(pc.j);
    for (const auto& q : pc.qq) s += target + "," + format_real(q.theoretical) + "," + format_real(q.empirical) + "\n";
  }
  return s;
}

inline int cmd_simulate(const SimulateArgs& a, std::ostream& out) {
  std::ifstream in(a.config);
  if (!in) throw Error(ErrorCode::io, "cannot open '" + a.config + "'");
  nlohmann::json cfg;
  try {
    cfg = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::parse, a.config + ": " + e.what());
  }
  const SimDesign design = cfg.get<SimDesign>();

  std::error_code ec;
  std::filesystem::create_directories(a.out_dir, ec);
  if (ec) throw Error(ErrorCode::io, "cannot create '" + a.out_dir + "': " + ec.message());
  const std::filesystem::path dir(a.out_dir);

  const auto t0 = std::chrono::steady_clock::now();
  const MonteCarloReport report = run_monte_carlo(design);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  write_text((dir / "coverage.csv").string(), coverage_csv(report));
  write_text((dir / "qq_points.csv").string(), qq_csv(report));

  nlohmann::json meta;
  meta["version"] = kVersion;
  meta["seed"] = design.master_seed;
  meta["design"] = design;
  meta["L"] = design.L();
  meta["reps"] = report.reps;
  meta["successes"] = report.successes;
  meta["failures"] = report.failures;
  meta["elapsed_seconds"] = seconds;
  meta["versions"] = {{"cabm", kVersion},
                      {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) +
                                    "." + std::to_string(EIGEN_MINOR_VERSION)},
                      {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                            std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                            std::to_string(NLOHMANN_JSON_VERSION_PATCH)}};
  write_text((dir / "run_metadata.json").string(), meta.dump(2) + "\n");

  out << "replications: " << report.successes << " ok, " << report.failures << " failed\n";
  for (const auto& pc : report.pairs) {
    out << "beta_" << pc.i << "-beta_" << pc.j << ": coverage " << pc.coverage << ", mean length " << pc.mean_length
        << "\n";
  }
  for (const auto& cc : report.coefficients) {
    out << "gamma_" << cc.k << ": coverage " << cc.coverage << " (bias-corrected " << cc.coverage_bc
        << "), mean length " << cc.mean_length << "\n";
  }
  return kExitOk;
}

}  // namespace detail

/// Entry point of the `cabm` tool. Errors are reported as JSON on `err`.
inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Covariate-assisted beta-model: fitting, inference and coverage simulation", "cabm"};
  app.require_subcommand(1);

  detail::FitArgs fa;
  auto* fit_cmd = app.add_subcommand("fit", "Fit a network and report estimates, standard errors and intervals");
  fit_cmd->add_option("--edges", fa.edges, "Edge list TSV (i, j, weight; 1-based)")->required();
  fit_cmd->add_option("--covariates", fa.covariates, "Edge or nodal covariate TSV")->required();
  fit_cmd->add_option("--family", fa.family, "Edge family")
      ->required()
      ->check(CLI::IsMember({"logistic", "poisson", "probit"}));
  fit_cmd->add_option("--level", fa.level, "Confidence level")->check(CLI::Range(0.0, 1.0));
  fit_cmd->add_flag("--bias-correct", fa.bias_correct, "Report bias-corrected gamma and intervals");
  fit_cmd->add_option("--out", fa.out, "Write the JSON report here instead of stdout");
  fit_cmd->add_option("--pairs", fa.pairs, "Homogeneity tests, e.g. \"1,2;3,4\"");

  detail::SimulateArgs sa;
  auto* sim_cmd = app.add_subcommand("simulate", "Run a Monte-Carlo coverage study");
  sim_cmd->add_option("--config", sa.config, "Simulation design JSON")->required();
  sim_cmd->add_option("--out-dir", sa.out_dir, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << error_report(Error(ErrorCode::config, e.what())).dump() << "\n";
    return kExitInput;
  }

  try {
    if (fit_cmd->parsed()) return detail::cmd_fit(fa, out);
    return detail::cmd_simulate(sa, out);
  } catch (const Error& e) {
    const std::string text = error_report(e).dump();
    err << text << "\n";
    if (fit_cmd->parsed() && !fa.out.empty()) {
      try {
        detail::write_text(fa.out, text + "\n");
      } catch (const Error&) {
      }
    }
    return detail::exit_code_for(e.code());
  }
}

}  // namespace cabm
