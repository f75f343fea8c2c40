#include <catch_amalgamated.hpp>

#include <random>
#include <vector>

#include "cabm.hpp"
#include "support/oracles.hpp"

using namespace cabm;
using Catch::Approx;

namespace {

const EdgeFamily kFamilies[] = {EdgeFamily::logistic(), EdgeFamily::poisson(), EdgeFamily::probit()};

}  // namespace

TEST_CASE("mean function at reference points") {
  CHECK(mu(EdgeFamily::logistic(), 0.0) == 0.5);
  CHECK(mu(EdgeFamily::poisson(), std::log(2.0)) == Approx(2.0).epsilon(1e-15));
  CHECK(mu(EdgeFamily::probit(), 0.0) == 0.5);
}

TEST_CASE("derivatives at reference points") {
  CHECK(mu_derivative(EdgeFamily::logistic(), 0.0, 1) == 0.25);
  CHECK(mu_derivative(EdgeFamily::poisson(), 0.0, 3) == 1.0);
  CHECK(mu_derivative(EdgeFamily::probit(), 0.0, 2) == 0.0);
  CHECK_THROWS_AS(mu_derivative(EdgeFamily::poisson(), 0.0, 4), Error);
}

TEST_CASE("edge variance at zero") {
  CHECK(edge_variance(EdgeFamily::logistic(), 0.0) == 0.25);
  CHECK(edge_variance(EdgeFamily::poisson(), 0.0) == 1.0);
  CHECK(edge_variance(EdgeFamily::probit(), 0.0) == 0.25);
}

TEST_CASE("mean matches textbook forms") {
  for (const auto fam : kFamilies) {
    for (double x = -6.0; x <= 6.0; x += 0.37) {
      CHECK(mu(fam, x) == Approx(oracle::mean(std::string(fam.name()), x)).epsilon(1e-13));
      CHECK(edge_variance(fam, x) == Approx(oracle::variance(std::string(fam.name()), x)).epsilon(1e-12));
    }
  }
}

TEST_CASE("derivatives match finite differences") {
  for (const auto fam : kFamilies) {
    for (int order = 1; order <= 3; ++order) {
      auto lower = [&](double x) { return order == 1 ? mu(fam, x) : mu_derivative(fam, x, order - 1); };
      for (int k = 0; k < 200; ++k) {
        const double x = -6.0 + 12.0 * k / 199.0;
        const double expected = oracle::derivative(lower, x);
        const double got = mu_derivative(fam, x, order);
        INFO(fam.name() << " order " << order << " x " << x);
        CHECK(std::abs(got - expected) <= std::max(1e-6 * std::abs(expected), 1e-9));
      }
    }
  }
}

TEST_CASE("first derivative is positive") {
  for (const auto fam : kFamilies) {
    for (double x = -30.0; x <= 30.0; x += 0.5) CHECK(mu_derivative(fam, x, 1) > 0.0);
  }
}

TEST_CASE("logistic derivatives are bounded by one quarter") {
  double worst = 0.0;
  for (int k = 0; k <= 100000; ++k) {
    const double x = -50.0 + 100.0 * k / 100000.0;
    for (int order = 1; order <= 3; ++order) {
      worst = std::max(worst, std::abs(mu_derivative(EdgeFamily::logistic(), x, order)));
    }
  }
  CHECK(worst <= 0.25 + 1e-12);
}

TEST_CASE("predictor is clamped before exponentiation") {
  const auto pois = EdgeFamily::poisson();
  CHECK(mu(pois, 1000.0) == mu(pois, kPiClamp));
  CHECK(mu_derivative(pois, -1000.0, 2) == mu_derivative(pois, -kPiClamp, 2));
  CHECK(std::isfinite(mu(pois, 1e300)));
  CHECK_THROWS_AS(mu(pois, std::nan("")), Error);
}

TEST_CASE("family names round-trip") {
  for (const auto fam : kFamilies) CHECK(family_from_string(fam.name()) == fam);
  CHECK_THROWS_AS(family_from_string("gaussian"), Error);
  CHECK(EdgeFamily::probit().binary());
  CHECK_FALSE(EdgeFamily::probit().exponential_family());
  CHECK_FALSE(EdgeFamily::poisson().binary());
}

TEST_CASE("poisson sampler mean") {
  std::mt19937_64 rng(11);
  const int m = 100000;
  double s = 0.0;
  for (int k = 0; k < m; ++k) s += sample_edge(EdgeFamily::poisson(), 0.0, rng);
  CHECK(std::abs(s / m - 1.0) <= 3.0 * std::sqrt(1.0 / m));
}

TEST_CASE("logistic sampler proportion") {
  std::mt19937_64 rng(12);
  const int m = 100000;
  double s = 0.0;
  for (int k = 0; k < m; ++k) {
    const double a = sample_edge(EdgeFamily::logistic(), 0.0, rng);
    REQUIRE((a == 0.0 || a == 1.0));
    s += a;
  }
  CHECK(std::abs(s / m - 0.5) <= 3.0 * std::sqrt(0.25 / m));
}

TEST_CASE("probit sampler far in the left tail") {
  std::mt19937_64 rng(13);
  for (int k = 0; k < 1000; ++k) CHECK(sample_edge(EdgeFamily::probit(), -8.0, rng) == 0.0);
}

TEST_CASE("sampler support") {
  std::mt19937_64 rng(14);
  for (int k = 0; k < 2000; ++k) {
    const double x = -2.0 + 4.0 * (k % 17) / 16.0;
    const double a = sample_edge(EdgeFamily::poisson(), x, rng);
    CHECK((a >= 0.0 && a == std::floor(a)));
    const double b = sample_edge(EdgeFamily::probit(), x, rng);
    CHECK((b == 0.0 || b == 1.0));
  }
}

TEST_CASE("poisson third raw moment") {
  const double x = 0.4;
  const double lam = mu(EdgeFamily::poisson(), x);
  std::mt19937_64 rng(15);
  const int m = 1000000;
  double s3 = 0.0, s6 = 0.0;
  for (int k = 0; k < m; ++k) {
    const double a = sample_edge(EdgeFamily::poisson(), x, rng);
    s3 += a * a * a;
    s6 += a * a * a * a * a * a;
  }
  const double mean3 = s3 / m;
  const double se = std::sqrt((s6 / m - mean3 * mean3) / m);
  const double exact = lam * lam * lam + 3.0 * lam * lam + lam;
  CHECK(std::abs(mean3 - exact) <= 3.0 * se);
}

TEST_CASE("sampler is deterministic per seed") {
  for (const auto fam : kFamilies) {
    std::mt19937_64 a(99), b(99);
    for (int k = 0; k < 500; ++k) CHECK(sample_edge(fam, 0.3, a) == sample_edge(fam, 0.3, b));
  }
}

TEST_CASE("normal helpers") {
  CHECK(normal::two_sided_p(1.96) == Approx(0.05).margin(1e-3));
  CHECK(normal::two_sided_p(0.0) == 1.0);
  for (double p : {1e-10, 0.001, 0.025, 0.3, 0.5, 0.8, 0.975, 0.999999}) {
    CHECK(normal::cdf(normal::quantile(p)) == Approx(p).epsilon(1e-12));
  }
  CHECK(normal::pdf(0.0) == Approx(1.0 / std::sqrt(2.0 * 3.14159265358979323846)).epsilon(1e-15));
}
