#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "rde/oned.hpp"
#include "rde/rng.hpp"

using namespace rde;

namespace {

EnvSpec spec_1d(double eps, double lam) {
  EnvSpec sp;
  sp.dimension = 1;
  sp.drift_bound = eps;
  sp.mean_drift = lam;
  return sp;
}

// Dense linear-system oracle for the absorbed chain: f(0) = 1, f(m+1) = 0,
// f(i) = p_i f(i+1) + q_i f(i-1) with p_i = 1/(1+rho_i).
double chain_oracle(const std::vector<double>& rho, int start) {
  const int m = static_cast<int>(rho.size());
  if (start == 0) return 1.0;
  if (start == m + 1) return 0.0;
  // Thomas solve of the hitting system in extended precision.
  std::vector<long double> diag(m), upper(m), lower(m), rhs(m, 0.0L);
  for (int i = 0; i < m; ++i) {
    const long double p = 1.0L / (1.0L + static_cast<long double>(rho[i]));
    const long double q = 1.0L - p;
    diag[i] = 1.0L;
    upper[i] = (i + 1 < m) ? -p : 0.0L;
    lower[i] = (i > 0) ? -q : 0.0L;
    if (i == 0) rhs[i] = q;  // f(0) = 1
  }
  for (int i = 1; i < m; ++i) {
    const long double w = lower[i] / diag[i - 1];
    diag[i] -= w * upper[i - 1];
    rhs[i] -= w * rhs[i - 1];
  }
  std::vector<long double> f(m);
  f[m - 1] = rhs[m - 1] / diag[m - 1];
  for (int i = m - 2; i >= 0; --i)
    f[i] = (rhs[i] - upper[i] * f[i + 1]) / diag[i];
  return static_cast<double>(f[start - 1]);
}

}  // namespace

TEST_CASE("constant drift scale function matches the closed form") {
  const double beta = 0.3;
  const Environment env = sample_environment(spec_1d(beta, beta), 1);
  const ScaleProfile profile(env, 4.0);
  for (double x : {-3.0, -1.0, -0.25, 0.5, 2.0, 4.0}) {
    const double expected = (1.0 - std::exp(-2.0 * beta * x)) / (2.0 * beta);
    CHECK(profile.scale(x) == doctest::Approx(expected).epsilon(1e-8));
  }
  CHECK(rho_L_exact(profile, 2.0) ==
        doctest::Approx(std::exp(-2.0 * beta * 2.0)).epsilon(1e-6));
  CHECK(profile.quad_error_bound(4.0) < 1e-6);
}

TEST_CASE("scale of pure Brownian motion is the identity") {
  const Environment env = sample_environment(spec_1d(0.0, 0.0), 1);
  const ScaleProfile profile(env, 3.0);
  for (double x : {-2.5, -1.0, 0.0, 0.7, 3.0})
    CHECK(profile.scale(x) == doctest::Approx(x).epsilon(1e-10));
  CHECK(rho_L_exact(profile, 3.0) == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("exit_up_probability interpolates the scale function") {
  const Environment env = sample_environment(spec_1d(0.2, 0.05), 9);
  const ScaleProfile profile(env, 3.0);
  CHECK(profile.exit_up_probability(-2.0, -2.0 + 1e-9, 1.0) ==
        doctest::Approx(0.0).epsilon(1e-6));
  const double p = profile.exit_up_probability(-2.0, 0.3, 1.0);
  CHECK(p > 0.0);
  CHECK(p < 1.0);
  CHECK_THROWS(profile.exit_up_probability(1.0, 0.0, 2.0));
}

TEST_CASE("log-odds identity holds for the random field") {
  const IdentityReport rep =
      check_log_odds_identity(spec_1d(0.3, 0.08), 4.0, 400);
  CHECK(rep.passed);
  // Both sides separately estimate -2L lambda (identity diffusion: a = 1).
  const double target = -2.0 * 4.0 * 0.08;
  CHECK(std::abs(rep.rhs_mean - target) < 0.2);
  CHECK(std::abs(rep.diff_mean) < 3.0 * rep.diff_stderr + rep.quad_bound + 1e-9);
}

TEST_CASE("dichotomy detects clear right transience") {
  const DichotomyReport rep =
      solomon_dichotomy(spec_1d(0.3, 0.2), 3.0, {0.25, 0.5, 1.0}, 200, 150.0);
  CHECK(rep.verdict == DichotomyVerdict::kTransientPositive);
  CHECK(rep.signs_agree);
  CHECK(rep.min_moment < 1.0);
  CHECK(rep.mean_log_rho < 0.0);
  CHECK(rep.transient_fraction > 0.9);
}

TEST_CASE("dichotomy detects clear left transience") {
  const DichotomyReport rep =
      solomon_dichotomy(spec_1d(0.3, -0.2), 3.0, {0.25, 0.5, 1.0}, 200, 150.0);
  CHECK(rep.verdict == DichotomyVerdict::kTransientNegative);
  CHECK(rep.signs_agree);
  CHECK(rep.mean_log_rho > 0.0);
}

TEST_CASE("driftless case is inconclusive") {
  const DichotomyReport rep =
      solomon_dichotomy(spec_1d(0.0, 0.0), 3.0, {0.5, 1.0}, 50, 30.0);
  CHECK(rep.verdict == DichotomyVerdict::kInconclusive);
}

TEST_CASE("chain formula agrees with the dense solve") {
  CounterRng g(31, 0);
  for (int m : {1, 2, 5, 20}) {
    std::vector<double> rho(m);
    for (double& r : rho) r = std::exp(1.5 * g.symmetric());
    for (int start = 0; start <= m + 1; ++start) {
      const double lhs = chain_exit_probability({rho}, start);
      const double rhs = chain_oracle(rho, start);
      CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
    }
  }
}

TEST_CASE("chain formula matches the oracle on 100 random windows") {
  CounterRng g(77, 0);
  for (int trial = 0; trial < 100; ++trial) {
    const int m = 5 + static_cast<int>(g.uniform() * 196.0);
    std::vector<double> rho(m);
    for (double& r : rho) r = std::exp(1.2 * g.symmetric());
    const int start = 1 + static_cast<int>(g.uniform() * m);
    const double lhs = chain_exit_probability({rho}, start);
    const double rhs = chain_oracle(rho, start);
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
  }
}

TEST_CASE("symmetric chain from the center exits left with probability 1/2") {
  std::vector<double> rho(21, 1.0);
  CHECK(chain_exit_probability({rho}, 11) == doctest::Approx(0.5).epsilon(1e-14));
}

TEST_CASE("mirrored profile inverts rho exactly") {
  const EnvSpec sp = spec_1d(0.3, 0.1);
  for (std::uint64_t seed : {2u, 5u, 11u}) {
    const Environment env = sample_environment(sp, seed);
    const ScaleProfile straight(env, 3.0);
    const ScaleProfile mirror(env, 3.0, 1e-3, true);
    const double r = rho_L_exact(straight, 3.0);
    CHECK(rho_L_exact(mirror, 3.0) == doctest::Approx(1.0 / r).epsilon(1e-9));
  }
}

TEST_CASE("scale function is strictly increasing") {
  const Environment env = sample_environment(spec_1d(0.3, 0.0), 13);
  const ScaleProfile profile(env, 2.0);
  double prev = profile.scale(-2.0);
  for (int i = 1; i <= 1000; ++i) {
    const double cur = profile.scale(-2.0 + 4.0 * i / 1000.0);
    CHECK(cur > prev);
    prev = cur;
  }
}

TEST_CASE("exact rho agrees with quenched Monte Carlo exit odds") {
  const EnvSpec sp = spec_1d(0.25, 0.05);
  const Domain dom = Domain::interval(-1.0, 1.0);
  Vec x0 = Vec::Zero(1);
  for (std::uint64_t seed = 60; seed < 66; ++seed) {
    const Environment env = sample_environment(sp, seed);
    const ScaleProfile profile(env, 1.0);
    const double p_left = 1.0 - profile.exit_up_probability(-1.0, 0.0, 1.0);
    SimPolicy pol;
    const double dt = pol.resolved_dt(dom, env);
    const double tmax = pol.resolved_max_time(dom, env);
    int left = 0;
    const int n = 600;
    for (int i = 0; i < n; ++i) {
      const ExitRecord r = run_until_exit(env, x0, dom, dt, i, tmax);
      REQUIRE(r.face != FaceLabel::kTimeout);
      if (r.face == FaceLabel::kNegative) ++left;
    }
    const double p_hat = static_cast<double>(left) / n;
    const double se = std::sqrt(p_left * (1.0 - p_left) / n);
    CHECK(std::abs(p_hat - p_left) < 3.0 * se + 0.01);
  }
}

TEST_CASE("both identity sides scale linearly in L") {
  const EnvSpec sp = spec_1d(0.3, 0.1);
  std::vector<double> Ls = {2.0, 4.0, 6.0};
  std::vector<double> lhs;
  for (double L : Ls) lhs.push_back(check_log_odds_identity(sp, L, 150).lhs_mean);
  // Least-squares line through the three points; R^2 must be ~1.
  const double mx = (Ls[0] + Ls[1] + Ls[2]) / 3.0;
  const double my = (lhs[0] + lhs[1] + lhs[2]) / 3.0;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (int i = 0; i < 3; ++i) {
    sxy += (Ls[i] - mx) * (lhs[i] - my);
    sxx += (Ls[i] - mx) * (Ls[i] - mx);
    syy += (lhs[i] - my) * (lhs[i] - my);
  }
  CHECK(sxy * sxy / (sxx * syy) > 0.999);
  CHECK(sxy / sxx < 0.0);  // negative slope ~ -2 lambda
}

TEST_CASE("chain formula survives long strongly-biased windows") {
  std::vector<double> rho(200, 0.2);  // strong right bias
  const double p = chain_exit_probability({rho}, 100);
  CHECK(p > 0.0);
  CHECK(p < 1e-60);
  std::vector<double> left(200, 5.0);
  CHECK(chain_exit_probability({left}, 100) >= 1.0 - 1e-60);
  CHECK(chain_exit_probability({left}, 100) <= 1.0);
  CHECK_THROWS(chain_exit_probability({{1.0, -2.0}}, 1));
}

TEST_CASE("eta recursion reproduces the constant-drift fixed point") {
  const double beta = 0.25, L0 = 1.5;
  const EtaDeltaReport rep =
      eta_delta_recursion(spec_1d(beta, beta), L0, 50, 1);
  const double expected = std::exp(-2.0 * beta * L0);
  CHECK(rep.eta_center == doctest::Approx(expected).epsilon(1e-6));
  CHECK(rep.eta_center_alt_seed == doctest::Approx(expected).epsilon(1e-4));
  CHECK(rep.slope == doctest::Approx(0.0).epsilon(1e-6));
}

TEST_CASE("log delta slope matches the ensemble expectation") {
  const EnvSpec sp = spec_1d(0.35, 0.12);
  const EtaDeltaReport rep = eta_delta_recursion(sp, 2.0, 80, 60);
  const double tol =
      3.0 * std::sqrt(rep.slope_stderr * rep.slope_stderr +
                      rep.expectation_stderr * rep.expectation_stderr);
  CHECK(std::abs(rep.slope - rep.expectation) < tol + 0.02);
  CHECK(rep.expectation > 0.0);  // right drift: delta grows toward the left
}
