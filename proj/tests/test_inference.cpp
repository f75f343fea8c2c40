#include <catch_amalgamated.hpp>

#include "cabm.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

using namespace cabm;
using Catch::Approx;

namespace {

const Vector kGammaStar = (Vector(2) << 0.5, 1.0).finished();

FitResult manual_fit(EdgeFamily fam, Vector beta, Vector gamma, const CovariateTensor& Z) {
  FitResult fr;
  fr.family = fam;
  fr.beta_hat = std::move(beta);
  fr.gamma_hat = std::move(gamma);
  fr.converged = true;
  fr.v_diag = jacobian_V({fr.beta_hat, fr.gamma_hat}, Z, fam).diagonal();
  return fr;
}

struct Simulated {
  Network net;
  Design design;
  FitResult fr;
};

Simulated simulated(Index n, double L, EdgeFamily fam, std::uint64_t seed) {
  Design d = generate_design(n, L, seed);
  Network net = sample_network(d.beta_star, kGammaStar, d.Z, fam, seed + 1);
  FitResult fr = fit(net, d.Z, fam);
  return {std::move(net), std::move(d), std::move(fr)};
}

bool is_psd(const Matrix& M, double slack) {
  return Eigen::SelfAdjointEigenSolver<Matrix>(M).eigenvalues().minCoeff() >= -slack * M.cwiseAbs().maxCoeff();
}

}  // namespace

TEST_CASE("degree variances on a constant network") {
  const Network net = fixtures::constant_network(3, 4.0);
  const CovariateTensor Z(3, 0);
  const FitResult fr = fit(net, Z, EdgeFamily::poisson());
  const auto [v, u] = beta_variances(fr, net, Z, EdgeFamily::poisson());
  for (Index i = 0; i < 3; ++i) {
    CHECK(v[i] == Approx(8.0).epsilon(1e-10));
    CHECK(u[i] == Approx(8.0).epsilon(1e-10));
  }
  const InferenceResult inf = gamma_inference(fr, net, Z, EdgeFamily::poisson());
  CHECK(inf.beta_se()[0] == Approx(std::sqrt(8.0) / 8.0).epsilon(1e-10));
  CHECK(inf.N == 3.0);
}

TEST_CASE("degree variances at zero for the logistic family") {
  const CovariateTensor Z(3, 0);
  const FitResult fr = manual_fit(EdgeFamily::logistic(), Vector::Zero(3), Vector(0), Z);
  const auto [v, u] = beta_variances(fr, fixtures::constant_network(3, 1.0), Z, EdgeFamily::logistic());
  CHECK(v == Vector::Constant(3, 0.5));
  CHECK(u == Vector::Constant(3, 0.5));
}

TEST_CASE("probit degree variances match direct loops") {
  const auto inst = fixtures::random_instance(7, 1, EdgeFamily::probit(), 301);
  const FitResult fr = fit(inst.net, inst.Z, EdgeFamily::probit());
  const auto [v, u] = beta_variances(fr, inst.net, inst.Z, EdgeFamily::probit());
  const auto E = fixtures::to_oracle(inst.Z);
  Vector vo = Vector::Zero(7), uo = Vector::Zero(7);
  for (int i = 0; i < 7; ++i)
    for (int j = 0; j < 7; ++j) {
      if (i == j) continue;
      const double x = oracle::predictor(fr.beta_hat, fr.gamma_hat, E, i, j);
      vo[i] += std::exp(-0.5 * x * x) / std::sqrt(2.0 * 3.14159265358979323846);
      uo[i] += oracle::variance("probit", x);
    }
  CHECK((v - vo).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK((u - uo).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK((u - v).cwiseAbs().maxCoeff() > 1e-3);
}

TEST_CASE("exponential families have equal degree variances") {
  for (const auto fam : {EdgeFamily::poisson(), EdgeFamily::logistic()}) {
    const auto inst = fixtures::random_instance(10, 2, fam, 302);
    const FitResult fr = fit(inst.net, inst.Z, fam);
    const auto [v, u] = beta_variances(fr, inst.net, inst.Z, fam);
    CHECK((u - v).cwiseQuotient(v).cwiseAbs().maxCoeff() <= 1e-10);
    CHECK(v.minCoeff() > 0.0);
  }
}

TEST_CASE("beta difference intervals") {
  const Network net = fixtures::constant_network(3, 4.0);
  const FitResult fr = fit(net, CovariateTensor(3, 0), EdgeFamily::poisson());
  const auto ci = beta_diff_interval(fr, 0, 1, 0.95);
  CHECK(std::abs(ci.point) <= 1e-12);
  CHECK(0.5 * ci.length() == Approx(1.959963984540054 * std::sqrt(2.0 / 8.0)).epsilon(1e-9));
  CHECK(0.5 * ci.length() == Approx(0.98).margin(5e-4));
  CHECK(beta_diff_interval(fr, 1, 2).contains(0.0));

  const auto t = homogeneity_test(fr, 0, 2);
  CHECK(std::abs(t.statistic) <= 1e-10);
  CHECK(t.p_value == Approx(1.0).margin(1e-10));

  CHECK_THROWS_AS(beta_diff_interval(fr, 0, 3), Error);
  CHECK_THROWS_AS(beta_diff_interval(fr, 1, 1), Error);
  CHECK_THROWS_AS(beta_diff_interval(fr, 0, 1, 1.5), Error);

  FitResult pending = fr;
  pending.converged = false;
  try {
    homogeneity_test(pending, 0, 1);
    FAIL("expected not_converged");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::not_converged);
  }
}

TEST_CASE("homogeneity statistic of unequal estimates") {
  const CovariateTensor Z(4, 0);
  const FitResult fr = manual_fit(EdgeFamily::poisson(), (Vector(4) << 0.0, 0.5, 0.1, 0.2).finished(), Vector(0), Z);
  const auto t = homogeneity_test(fr, 0, 1);
  const double scale = std::sqrt(1.0 / fr.v_diag[0] + 1.0 / fr.v_diag[1]);
  CHECK(t.statistic == Approx(0.5 / scale).epsilon(1e-14));
  CHECK(t.p_value == Approx(std::erfc(t.statistic / std::sqrt(2.0))).epsilon(1e-12));
}

TEST_CASE("covariate covariance equals the profiled information") {
  for (const auto fam : {EdgeFamily::poisson(), EdgeFamily::logistic()}) {
    const auto s = simulated(40, 1.0, fam, 310);
    REQUIRE(s.fr.converged);
    const InferenceResult inf = gamma_inference(s.fr, s.net, s.design.Z, fam);
    // For exponential families lambda = mu', so the z~ sum reduces to A - D'V^{-1}D.
    CHECK((inf.Sigma_hat - inf.H_hat).cwiseAbs().maxCoeff() <= 1e-6 * inf.H_hat.cwiseAbs().maxCoeff());
    CHECK(is_psd(inf.Sigma_hat, 0.0));
    CHECK((inf.gamma_cov - inf.gamma_cov.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * inf.gamma_cov.norm());
    CHECK(is_psd(inf.gamma_cov, 1e-10));
    // and the sandwich collapses to H^{-1}.
    const Matrix Hinv = inf.H_hat.inverse();
    CHECK((inf.gamma_cov - Hinv).cwiseAbs().maxCoeff() <= 1e-6 * Hinv.cwiseAbs().maxCoeff());
  }
}

TEST_CASE("diagonal shortcut for the covariate covariance misses a rank-one term") {
  // With V^{-1} replaced by S the display drops D'(V^{-1} - S)D. Entrywise
  // V^{-1} - S is O(n^-2), but it is close to -1 1'/(2 v..), so the dropped
  // term is about (sum_i D_i)(sum_i D_i)'/(2 v..), the same order as H.
  for (const double L : {0.0, std::log(std::log(80.0))}) {
    const auto s = simulated(80, L, EdgeFamily::poisson(), 311);
    const MomentJacobian J = moment_jacobian({s.fr.beta_hat, s.fr.gamma_hat}, s.design.Z, EdgeFamily::poisson());
    const Matrix exact = profile_H(J);
    const Matrix shortcut = J.A - J.D.transpose() * s_approx(J.V) * J.D;
    const Vector total = J.D.colwise().sum().transpose();
    const Matrix restored = shortcut + total * total.transpose() / (2.0 * J.V.diagonal().sum());
    INFO("L = " << L);
    CHECK((shortcut - exact).norm() >= 0.1 * exact.norm());
    CHECK((restored - exact).norm() <= 0.05 * exact.norm());
  }
}

TEST_CASE("sandwich differs from the inverse information for probit") {
  const auto s = simulated(40, 0.5, EdgeFamily::probit(), 313);
  REQUIRE(s.fr.converged);
  const InferenceResult inf = gamma_inference(s.fr, s.net, s.design.Z, EdgeFamily::probit());
  CHECK(is_psd(inf.gamma_cov, 1e-10));
  CHECK((inf.Sigma_hat - inf.H_hat).cwiseAbs().maxCoeff() > 1e-3 * inf.H_hat.cwiseAbs().maxCoeff());
}

TEST_CASE("covariance is positive definite on a two-valued design") {
  const auto s = simulated(60, std::log(std::log(60.0)), EdgeFamily::poisson(), 314);
  const InferenceResult inf = gamma_inference(s.fr, s.net, s.design.Z, EdgeFamily::poisson());
  CHECK(Eigen::SelfAdjointEigenSolver<Matrix>(inf.Sigma_hat).eigenvalues().minCoeff() > 0.0);
  const auto ci = gamma_interval(inf, 1, 0.95);
  CHECK(ci.lower < ci.point);
  CHECK(ci.upper > ci.point);
  CHECK(ci.length() == Approx(2.0 * 1.959963984540054 * inf.gamma_se()[1]).epsilon(1e-9));
  CHECK_THROWS_AS(gamma_interval(inf, 2), Error);
}

TEST_CASE("poisson bias correction vanishes") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto s = simulated(100, 0.0, EdgeFamily::poisson(), 320 + 10 * seed);
    const InferenceResult inf = gamma_inference(s.fr, s.net, s.design.Z, EdgeFamily::poisson());
    CHECK((inf.gamma_bc - inf.gamma_hat).cwiseAbs().maxCoeff() <= 0.01 * inf.gamma_hat.cwiseAbs().maxCoeff());
    CHECK(inf.B_hat.cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("leading-term bias formula and sign override") {
  const auto s = simulated(50, 0.0, EdgeFamily::poisson(), 330);
  InferenceOptions lead;
  lead.bias_formula = BiasFormula::leading_term;
  const InferenceResult a = gamma_inference(s.fr, s.net, s.design.Z, EdgeFamily::poisson(), lead);
  // Leading term alone: 1/(2 sqrt N) sum_k [sum_j z_kj mu''_kj] / v_kk, and mu'' = mu' here.
  const auto E = fixtures::to_oracle(s.design.Z);
  Vector expected = Vector::Zero(2);
  for (int k = 0; k < 50; ++k) {
    Vector num = Vector::Zero(2);
    double v = 0.0;
    for (int j = 0; j < 50; ++j) {
      if (j == k) continue;
      const double m = std::exp(oracle::predictor(s.fr.beta_hat, s.fr.gamma_hat, E, k, j));
      num += E.at(k, j) * m;
      v += m;
    }
    expected += num / v;
  }
  expected /= 2.0 * std::sqrt(a.N);
  CHECK((a.B_hat - expected).cwiseAbs().maxCoeff() <= 1e-12 * expected.cwiseAbs().maxCoeff());

  lead.bias_sign = -1.0;
  const InferenceResult b = gamma_inference(s.fr, s.net, s.design.Z, EdgeFamily::poisson(), lead);
  CHECK((a.B_hat + b.B_hat).cwiseAbs().maxCoeff() <= 1e-15);
  CHECK((a.gamma_bc - a.gamma_hat + (b.gamma_bc - b.gamma_hat)).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("logistic bias correction moves estimates towards the truth") {
  SimDesign design;
  design.n = 80;
  design.L_spec = "0";
  design.family = EdgeFamily::logistic();
  design.reps = 300;
  design.master_seed = 77;
  const MonteCarloReport r = run_monte_carlo(design);
  for (const auto& c : r.coefficients) {
    const double truth = kGammaStar[c.k - 1];
    INFO("gamma_" << c.k << " mean " << c.mean_estimate << " corrected " << c.mean_estimate_bc);
    CHECK(std::abs(c.mean_estimate_bc - truth) < std::abs(c.mean_estimate - truth));
  }
}

TEST_CASE("inference without covariates") {
  const auto inst = fixtures::random_instance(6, 0, EdgeFamily::poisson(), 340);
  const FitResult fr = fit(inst.net, inst.Z, EdgeFamily::poisson());
  const InferenceResult inf = gamma_inference(fr, inst.net, inst.Z, EdgeFamily::poisson());
  CHECK(inf.gamma_hat.size() == 0);
  CHECK(inf.beta_se().size() == 6);
}
