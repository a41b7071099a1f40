#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "rde/criterion.hpp"
#include "rde/oned.hpp"

using namespace rde;

namespace {

EnvSpec make_spec(int d, double eps, double lam) {
  EnvSpec sp;
  sp.dimension = d;
  sp.drift_bound = eps;
  sp.mean_drift = lam;
  return sp;
}

SimPolicy fast_policy(double dt = 0.01) {
  SimPolicy pol;
  pol.dt = dt;
  return pol;
}

}  // namespace

TEST_CASE("hierarchy closed forms match the recursion") {
  const BoxHierarchy h = build_hierarchy(300.0, 20.0, 1.0, 1.0, 4);
  CHECK(h.levels[0].L == 300.0);
  CHECK(h.levels[0].N == 240.0);
  CHECK(h.levels[1].L == 72000.0);
  // L_{k+1} = N_k L_k exactly, and L~_k = (L_k/L0)^3 L~_0.
  for (int k = 0; k + 1 < 5; ++k) {
    CHECK(h.levels[k + 1].L ==
          doctest::Approx(h.levels[k].N * h.levels[k].L).epsilon(1e-14));
    const double ratio = h.levels[k].L / h.L0;
    CHECK(h.levels[k].L_tilde ==
          doctest::Approx(ratio * ratio * ratio * h.L_tilde0).epsilon(1e-14));
  }
  CHECK(h.levels[3].a == doctest::Approx(1.0 / 8.0).epsilon(1e-15));
  CHECK(h.levels[2].u == doctest::Approx(1.0 / 64.0).epsilon(1e-15));
}

TEST_CASE("hierarchy rejects bad parameters") {
  CHECK_THROWS(build_hierarchy(300.0, 20.0, 0.0, 1.0, 2));
  CHECK_THROWS(build_hierarchy(300.0, 20.0, 1.0, 1.5, 2));
  CHECK_THROWS(build_hierarchy(10.0, 2.0, 1.0, 1.0, 2));   // L~0 < R+2
  CHECK_THROWS(build_hierarchy(3.0, 30.0, 1.0, 1.0, 2));   // L~0 > L0^3
}

TEST_CASE("criterion box geometry") {
  const Domain box = criterion_box(3, 10.0, 13.0, 2.5);
  Vec in = Vec::Zero(3);
  CHECK(box.contains(in));
  in[0] = 11.9;
  CHECK(box.contains(in));
  in[0] = -5.6;
  CHECK_FALSE(box.contains(in));  // back wall at -(L - R - 2) = -5.5
  in[0] = 0.0;
  in[1] = 13.1;
  CHECK_FALSE(box.contains(in));
  CHECK_THROWS(criterion_box(3, 4.0, 13.0, 2.5));  // L <= R + 2
  // The mirrored box is the image under x -> -x.
  const Domain mir = criterion_box(3, 10.0, 13.0, 2.5, true);
  Vec m = Vec::Zero(3);
  m[0] = -11.9;
  CHECK(mir.contains(m));
  m[0] = 5.6;
  CHECK_FALSE(mir.contains(m));
}

TEST_CASE("zero drift rho moment is 1 on a symmetric window") {
  const EnvSpec sp = make_spec(1, 0.0, 0.0);
  Vec e1 = Vec::Zero(1);
  e1[0] = 1.0;
  const Domain win = Domain::thresholds(e1, -3.0, 3.0);
  const RhoMomentEstimate m =
      estimate_rho_moment(sp, win, 3.0, 1.0, 40, 200, 0.5, 5, fast_policy());
  CHECK(std::abs(m.moment.mean - 1.0) <
        3.0 * m.moment.stderr_ + m.smoothing_band + 0.05);
  CHECK(m.n_env_flagged == 0);
}

TEST_CASE("constant drift rho moment matches the scale-function oracle") {
  const double b = 0.2, L = 8.0;
  const EnvSpec sp = make_spec(1, b, b);
  const Domain box = criterion_box(1, L, 13.0, sp.dependence_range);
  // Exact exit odds for the e1-marginal over (-(L-R-2), L+2).
  const Environment env = sample_environment(sp, 1);
  const ScaleProfile prof(env, L + 2.0);
  const double p = prof.exit_up_probability(-(L - 2.0 - sp.dependence_range),
                                            0.0, L + 2.0);
  const double rho_exact = (1.0 - p) / p;
  for (double a : {0.5, 1.0}) {
    const RhoMomentEstimate m =
        estimate_rho_moment(sp, box, L, a, 30, 400, 0.5, 3, fast_policy());
    const double target = std::pow(rho_exact, a);
    CHECK(std::abs(m.moment.mean - target) <
          3.0 * m.moment.stderr_ + m.smoothing_band + 0.02);
  }
}

TEST_CASE("a near zero drives the moment to 1") {
  const EnvSpec sp = make_spec(1, 0.2, 0.1);
  const Domain box = criterion_box(1, 6.0, 13.0, sp.dependence_range);
  const RhoMomentEstimate m =
      estimate_rho_moment(sp, box, 6.0, 0.01, 20, 100, 0.5, 9, fast_policy());
  CHECK(std::abs(m.moment.mean - 1.0) < 0.05);
  CHECK_THROWS(estimate_rho_moment(sp, box, 6.0, 0.0, 5, 50, 0.5));
  CHECK_THROWS(estimate_rho_moment(sp, box, 6.0, 1.5, 5, 50, 0.5));
}

TEST_CASE("smoothing band shrinks with the path budget") {
  const EnvSpec sp = make_spec(1, 0.2, 0.05);
  const Domain box = criterion_box(1, 6.0, 13.0, sp.dependence_range);
  const RhoMomentEstimate coarse =
      estimate_rho_moment(sp, box, 6.0, 1.0, 20, 50, 0.5, 11, fast_policy());
  const RhoMomentEstimate fine =
      estimate_rho_moment(sp, box, 6.0, 1.0, 20, 800, 0.5, 11, fast_policy());
  CHECK(fine.smoothing_band < coarse.smoothing_band + 1e-12);
}

TEST_CASE("effective criterion is directional at desk scale") {
  const std::vector<double> a_grid = {0.25, 0.5, 1.0};
  const EnvSpec fwd = make_spec(2, 0.2, 0.2);
  const CriterionReport plus = evaluate_effective_criterion(
      fwd, 10.0, 13.0, a_grid, 0.5, 1.0, 25, 150, 1, fast_policy());
  const EnvSpec bwd = make_spec(2, 0.2, -0.2);
  const CriterionReport minus = evaluate_effective_criterion(
      bwd, 10.0, 13.0, a_grid, 0.5, 1.0, 25, 150, 1, fast_policy());
  // The moment carries the drift direction: well below 1 forward, above 1
  // backward, with the backward lhs several times larger.
  CHECK(plus.best.moment < 0.5);
  CHECK(minus.best.lhs > 3.0 * plus.best.lhs);
  CHECK_FALSE(minus.decision);
  // At L = 10 the polynomial prefactor (~1e4..1e5) dominates any achievable
  // exponential moment decay, so even the forward decision stays false; the
  // criterion becomes a yes only at scales no path budget can resolve.
  CHECK(plus.best.lhs > 1.0);
}

TEST_CASE("zero drift keeps the lhs above the polynomial prefactor") {
  const EnvSpec sp = make_spec(2, 0.0, 0.0);
  const CriterionReport rep = evaluate_effective_criterion(
      sp, 10.0, 13.0, {0.5, 1.0}, 0.5, 1.0, 15, 100, 1, fast_policy());
  CHECK_FALSE(rep.decision);
  CHECK(rep.best.lhs > 1.0);
  for (const CriterionCandidate& c : rep.candidates) CHECK(c.lhs > 1.0);
}

TEST_CASE("lhs scales linearly in c7 and the decision is monotone") {
  const EnvSpec sp = make_spec(2, 0.2, 0.2);
  const CriterionReport rep = evaluate_effective_criterion(
      sp, 10.0, 13.0, {1.0}, 0.5, 2.0, 10, 80, 1, fast_policy());
  CHECK(rep.lhs_at(4.0) == doctest::Approx(2.0 * rep.best.lhs));
  CHECK(rep.lhs_at(1.0) == doctest::Approx(0.5 * rep.best.lhs));
  CHECK(rep.lhs_at(2.0) < rep.lhs_at(2.5));
  CHECK_THROWS(rep.lhs_at(0.0));
}

TEST_CASE("criterion rejects an out-of-range box width") {
  const EnvSpec sp = make_spec(2, 0.1, 0.1);
  CHECK_THROWS(evaluate_effective_criterion(sp, 10.0, 3.0, {1.0}, 0.5, 1.0, 2,
                                            10));  // L~ < R+2
  CHECK_THROWS(evaluate_effective_criterion(sp, 2.6, 20.0, {1.0}, 0.5, 1.0, 2,
                                            10));  // L~ >= L^3
  CHECK_THROWS(evaluate_effective_criterion(sp, 10.0, 13.0, {}, 0.5, 1.0, 2,
                                            10));
  CHECK_THROWS(evaluate_effective_criterion(sp, 10.0, 13.0, {1.0}, 1.5, 1.0, 2,
                                            10));
}

TEST_CASE("a-continuity of the moment estimates") {
  const EnvSpec sp = make_spec(1, 0.25, 0.05);
  const Domain box = criterion_box(1, 6.0, 13.0, sp.dependence_range);
  const std::vector<double> rho =
      rho_samples(sp, box, 6.0, 40, 200, 0.5, 21, fast_policy());
  const double a1 = 0.5, a2 = 0.6;
  double m1 = 0.0, m2 = 0.0, bound = 0.0;
  for (double r : rho) {
    const double p1 = std::pow(r, a1), p2 = std::pow(r, a2);
    m1 += p1;
    m2 += p2;
    bound += std::abs(a1 - a2) * std::abs(std::log(r)) * std::max(p1, p2);
  }
  CHECK(std::abs(m1 - m2) <= bound + 1e-12);
}

TEST_CASE("mirror duality: reversed spec on the mirrored window inverts rho") {
  // Lateral exit mass always counts into q, so the exact rho -> 1/rho pairing
  // uses the lateral-free window; with it the duality is exact in law, even
  // after smoothing.
  const EnvSpec sp = make_spec(2, 0.2, 0.05);
  const Domain fwd = criterion_box(2, 10.0, -1.0, sp.dependence_range, false);
  const Domain mir = criterion_box(2, 10.0, -1.0, sp.dependence_range, true);
  EnvSpec rev = sp;
  rev.mean_drift = -sp.mean_drift;
  const SimPolicy pol = fast_policy(0.02);
  std::vector<double> a = rho_samples(sp, fwd, 10.0, 100, 60, 0.5, 7, pol);
  std::vector<double> b = rho_samples(rev, mir, 10.0, 100, 60, 0.5, 7, pol);
  for (double& v : b) v = 1.0 / v;
  const KsResult ks = ks_two_sample(a, b);
  CHECK(ks.statistic < 1.36 * std::sqrt(2.0 / 100.0));  // 5% critical value
  CHECK(ks.p_value > 0.05);
}

TEST_CASE("ks statistic separates distinct distributions") {
  std::vector<double> a, b;
  for (int i = 0; i < 300; ++i) {
    a.push_back(i / 300.0);
    b.push_back(0.5 + i / 600.0);
  }
  const KsResult ks = ks_two_sample(a, b);
  CHECK(ks.statistic > 0.4);
  CHECK(ks.p_value < 1e-6);
  CHECK_THROWS(ks_two_sample({}, {1.0}));
}

TEST_CASE("recursion level 0 reproduces the criterion moment") {
  const EnvSpec sp = make_spec(2, 0.2, 0.2);
  const BoxHierarchy h = build_hierarchy(10.0, 13.0, 1.0, 1.0, 1);
  RecursionBudgets bud;
  bud.n_env = 10;
  bud.n_path = 80;
  const std::vector<LevelCheck> table =
      check_recursion(sp, h, 0, bud, 1, fast_policy());
  REQUIRE(table.size() == 1);
  // Same estimator, same seeds as a direct moment call on the level-0 box.
  const Domain box = criterion_box(2, 10.0, 13.0, sp.dependence_range);
  const RhoMomentEstimate m =
      estimate_rho_moment(sp, box, 10.0, 1.0, 10, 80, 0.5, 1, fast_policy());
  CHECK(table[0].moment == doctest::Approx(m.moment.mean).epsilon(1e-12));
  CHECK(table[0].phi ==
        doctest::Approx(std::pow(h.levels[1].L_tilde, 1.0) * 10.0 *
                        m.moment.mean)
            .epsilon(1e-12));
  CHECK(table[0].target == doctest::Approx(std::pow(0.5, 10.0)).epsilon(1e-12));
}

TEST_CASE("phi_0 decreases with the base scale under strong drift") {
  const EnvSpec sp = make_spec(2, 0.2, 0.2);
  RecursionBudgets bud;
  bud.n_env = 20;
  bud.n_path = 150;
  std::vector<double> phis, errs;
  for (double L0 : {6.0, 10.0, 14.0}) {
    // Lateral width must grow with the box depth, otherwise side exits (which
    // count into q) swamp the exponential decay of the back-exit probability.
    const BoxHierarchy h =
        build_hierarchy(L0, 6.0 * std::sqrt(L0), 1.0, 1.0, 1);
    const std::vector<LevelCheck> t =
        check_recursion(sp, h, 0, bud, 1, fast_policy());
    // Compare the scale-free part: phi / (L~_1 L_0) = E[rho^a].
    phis.push_back(t[0].moment);
    errs.push_back(t[0].moment_stderr);
  }
  CHECK(phis[1] + 2.0 * errs[1] < phis[0] - 2.0 * errs[0]);
  CHECK(phis[2] + 2.0 * errs[2] < phis[1] - 2.0 * errs[1]);
}

TEST_CASE("zero drift level 0 cannot satisfy the recursion") {
  const EnvSpec sp = make_spec(2, 0.0, 0.0);
  const BoxHierarchy h = build_hierarchy(8.0, 5.0, 1.0, 1.0, 1);
  RecursionBudgets bud;
  bud.n_env = 10;
  bud.n_path = 60;
  const std::vector<LevelCheck> t =
      check_recursion(sp, h, 0, bud, 1, fast_policy());
  CHECK(t[0].feasible);
  CHECK_FALSE(t[0].holds);
  CHECK(t[0].phi > 1.0);
  CHECK_THROWS(check_recursion(sp, h, 3, bud));
}

TEST_CASE("decay scan recovers the constant-drift rate") {
  EnvSpec sp = make_spec(1, 0.1, 0.1);
  const DecayFit fit = slab_exit_decay_scan(sp, 1.0, {5.0, 10.0, 15.0}, 10,
                                            400, 1, fast_policy(0.005));
  CHECK_FALSE(fit.rejected);
  CHECK(std::abs(fit.rate_linear - 0.2) < 0.02);  // within 10% of 2b
  // Exact annealed values from the scale function.
  for (const DecayRow& row : fit.rows) {
    // Scale-function ratio: P[hit -L before +L] = e / (1 + e), e = exp(-2bL).
    const double e = std::exp(-2.0 * 0.1 * row.L);
    const double p_exact = e / (1.0 + e);
    CHECK(std::abs(row.p_hat - p_exact) < 3.0 * row.p_stderr + 0.01);
  }
}

TEST_CASE("zero drift decay scan sits at one half") {
  EnvSpec sp = make_spec(1, 0.0, 0.0);
  const DecayFit fit = slab_exit_decay_scan(sp, 1.0, {3.0, 5.0, 7.0}, 8, 300,
                                            1, fast_policy(0.005));
  for (const DecayRow& row : fit.rows)
    CHECK(std::abs(row.p_hat - 0.5) < 3.0 * row.p_stderr + 0.02);
}

TEST_CASE("reversed drift rejects the decay fit with a diagnostic") {
  EnvSpec sp = make_spec(1, 0.15, -0.15);
  const DecayFit fit = slab_exit_decay_scan(sp, 1.0, {4.0, 8.0, 12.0}, 6, 150,
                                            1, fast_policy(0.01));
  CHECK(fit.rejected);
  CHECK_FALSE(fit.diagnostic.empty());
  CHECK(fit.rows.back().p_hat > 0.9);
}

TEST_CASE("decay scan input validation") {
  EnvSpec sp = make_spec(1, 0.1, 0.1);
  CHECK_THROWS(slab_exit_decay_scan(sp, 1.0, {5.0, 10.0}, 4, 50));
  CHECK_THROWS(slab_exit_decay_scan(sp, 1.0, {10.0, 5.0, 15.0}, 4, 50));
  CHECK_THROWS(slab_exit_decay_scan(sp, 0.0, {5.0, 10.0, 15.0}, 4, 50));
}

TEST_CASE("kappa estimate is capped at one half") {
  const EnvSpec sp = make_spec(1, 0.0, 0.0);
  const KappaEstimate k =
      estimate_kappa(sp, 1.0, 5, 1500, 1, fast_policy(0.002));
  CHECK(k.kappa_hat <= 0.5);
  CHECK(k.anti_conservative);
  // 1-D Brownian tube: back wall 1/4 behind the start, so the traversal
  // probability is (1/4)/(L + 1/4) = 1/5 at L = 1.
  const double exact = 0.25 / 1.25;
  CHECK(std::abs(k.p_traverse.mean - exact) <
        3.0 * k.p_traverse.stderr_ + 0.01);
  CHECK_THROWS(estimate_kappa(sp, 0.5, 2, 50));
}

TEST_CASE("small drift barely moves kappa") {
  const SimPolicy pol = fast_policy(0.004);
  const KappaEstimate base =
      estimate_kappa(make_spec(2, 0.0, 0.0), 1.0, 5, 600, 17, pol);
  const KappaEstimate bumped =
      estimate_kappa(make_spec(2, 0.05, 0.0), 1.0, 5, 600, 17, pol);
  CHECK(std::abs(base.kappa_hat - bumped.kappa_hat) <= 0.1);
}

TEST_CASE("moment estimates are worker-count invariant") {
  const EnvSpec sp = make_spec(2, 0.2, 0.1);
  const Domain box = criterion_box(2, 6.0, 8.0, sp.dependence_range);
  SimPolicy one = fast_policy(0.02);
  SimPolicy eight = one;
  eight.workers = 8;
  const RhoMomentEstimate a =
      estimate_rho_moment(sp, box, 6.0, 0.5, 6, 40, 0.5, 3, one);
  const RhoMomentEstimate b =
      estimate_rho_moment(sp, box, 6.0, 0.5, 6, 40, 0.5, 3, eight);
  CHECK(a.moment.mean == b.moment.mean);
  CHECK(a.moment.stderr_ == b.moment.stderr_);
}
