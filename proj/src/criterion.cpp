#include "rde/criterion.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "rde/mc.hpp"
#include "rde/rng.hpp"

namespace rde {
namespace {

constexpr double kV = 8.0;      // geometric ratio of the scale ladder
constexpr double kAlpha = 240.0;

struct RhoSample {
  double rho_half = 0.0;  // add-1/2 smoothing
  double rho_one = 0.0;   // add-1 smoothing
  bool flagged = false;   // timeout fraction above the caller's tolerance
  bool capped = false;
  bool degenerate = false;
};

// One environment's smoothed exit odds under both smoothing rules.  The inner
// estimator is allowed to time out (the caller decides how to treat flagged
// environments); only the all-timeout case still throws.
RhoSample sample_rho(const EnvSpec& spec, const Domain& box,
                     double box_scale_L, long long n_path, double kappa,
                     std::uint64_t seed, const SimPolicy& policy) {
  const Environment env = sample_environment(spec, seed);
  SimPolicy relaxed = policy;
  relaxed.timeout_tolerance = 1.0;
  const Vec x0 = Vec::Zero(box.dimension());
  const ExitStats s =
      estimate_exit_stats(env, x0, box, n_path, kappa, box_scale_L, relaxed);
  RhoSample out;
  out.rho_half = s.rho_hat;
  out.capped = s.rho_capped;
  out.degenerate = s.degenerate_counts;
  out.flagged = timeout_fraction_of(s) > policy.timeout_tolerance;
  const double k_p = static_cast<double>(s.n_positive);
  const double k_q = static_cast<double>(s.n - s.n_timeout - s.n_positive);
  const double cap = std::pow(kappa, -(box_scale_L + 3.0));
  out.rho_one = std::min((k_q + 1.0) / (k_p + 1.0), cap);
  return out;
}

void check_exponent(double a) {
  if (!(a > 0.0) || a > 1.0)
    throw std::invalid_argument("rho moment: a must lie in (0, 1]");
}

void check_kappa(double kappa) {
  if (!(kappa > 0.0) || kappa >= 1.0)
    throw std::invalid_argument("kappa must lie in (0, 1)");
}

}  // namespace

BoxHierarchy build_hierarchy(double L0, double L_tilde0, double u0, double a0,
                             int k_max, double R) {
  if (!(u0 > 0.0) || u0 > 1.0)
    throw std::invalid_argument("build_hierarchy: u0 must lie in (0, 1]");
  if (!(a0 > 0.0) || a0 > 1.0)
    throw std::invalid_argument("build_hierarchy: a0 must lie in (0, 1]");
  if (L0 <= 0.0) throw std::invalid_argument("build_hierarchy: L0 must be > 0");
  if (L_tilde0 < R + 2.0 || L_tilde0 > L0 * L0 * L0)
    throw std::invalid_argument(
        "build_hierarchy: L_tilde0 must lie in [R+2, L0^3]");
  if (k_max < 0) throw std::invalid_argument("build_hierarchy: k_max >= 0");

  BoxHierarchy h;
  h.L0 = L0;
  h.L_tilde0 = L_tilde0;
  h.u0 = u0;
  h.a0 = a0;
  for (int k = 0; k <= k_max; ++k) {
    HierarchyLevel lev;
    lev.k = k;
    lev.N = (kAlpha / u0) * std::pow(kV, k);
    // L_k = (alpha/u0)^k v^{k(k-1)/2} L0, the product of N_0..N_{k-1}.
    lev.L = std::pow(kAlpha / u0, k) * std::pow(kV, 0.5 * k * (k - 1)) * L0;
    lev.L_tilde = std::pow(lev.L / L0, 3.0) * L_tilde0;
    lev.a = a0 * std::pow(2.0, -k);
    lev.u = u0 * std::pow(kV, -k);
    h.levels.push_back(lev);
  }
  return h;
}

Domain criterion_box(int dimension, double L, double L_tilde, double R,
                     bool mirrored) {
  if (L <= R + 2.0)
    throw std::invalid_argument("criterion_box: needs L > R + 2");
  double depth_neg = L - R - 2.0;
  double depth_pos = L + 2.0;
  if (mirrored) std::swap(depth_neg, depth_pos);
  if (L_tilde <= 0.0) {
    Vec e1 = Vec::Zero(dimension);
    e1[0] = 1.0;
    return Domain::thresholds(e1, -depth_neg, depth_pos);
  }
  Mat rot = Mat::Identity(dimension, dimension);
  return Domain::box(rot, depth_neg, depth_pos, L_tilde);
}

RhoMomentEstimate estimate_rho_moment(const EnvSpec& spec, const Domain& box,
                                      double box_scale_L, double a, int n_env,
                                      long long n_path, double kappa,
                                      std::uint64_t base_seed,
                                      const SimPolicy& policy) {
  check_exponent(a);
  check_kappa(kappa);
  if (n_env < 1)
    throw std::invalid_argument("estimate_rho_moment: n_env must be >= 1");
  RhoMomentEstimate out;
  out.n_env = n_env;
  out.n_path = n_path;
  RunningStat half, one;
  for (int e = 0; e < n_env; ++e) {
    const RhoSample s =
        sample_rho(spec, box, box_scale_L, n_path, kappa,
                   base_seed + static_cast<std::uint64_t>(e), policy);
    half.add(std::pow(s.rho_half, a));
    one.add(std::pow(s.rho_one, a));
    if (s.flagged) ++out.n_env_flagged;
    if (s.capped) ++out.n_env_capped;
    if (s.degenerate) ++out.n_env_degenerate;
  }
  out.moment = {half.mean(), half.stderr_of_mean(), half.n};
  out.moment_add1 = {one.mean(), one.stderr_of_mean(), one.n};
  out.smoothing_band = std::abs(out.moment.mean - out.moment_add1.mean);
  return out;
}

double CriterionReport::lhs_at(double c7_other) const {
  if (!(c7 > 0.0) || !(c7_other > 0.0))
    throw std::invalid_argument("lhs_at: constants must be > 0");
  return best.lhs / c7 * c7_other;
}

CriterionReport evaluate_effective_criterion(
    const EnvSpec& spec, double L, double L_tilde,
    const std::vector<double>& a_grid, double kappa, double c7, int n_env,
    long long n_path, std::uint64_t base_seed, const SimPolicy& policy) {
  check_kappa(kappa);
  if (!(c7 > 0.0))
    throw std::invalid_argument("evaluate_effective_criterion: c7 must be > 0");
  if (a_grid.empty())
    throw std::invalid_argument("evaluate_effective_criterion: empty a grid");
  for (double a : a_grid) check_exponent(a);
  const double R = spec.dependence_range;
  const double l3 = L * L * L;
  if (L_tilde < R + 2.0 || L_tilde >= l3)
    throw std::invalid_argument(
        "evaluate_effective_criterion: L_tilde must lie in [R+2, L^3)");

  // One witness suffices, so the box search is a small sound grid.
  std::vector<double> widths = {L_tilde, R + 2.0, L,
                                std::min(std::pow(L, 1.5), 0.99 * l3)};
  std::sort(widths.begin(), widths.end());
  widths.erase(std::unique(widths.begin(), widths.end(),
                           [](double x, double y) {
                             return std::abs(x - y) < 1e-9;
                           }),
               widths.end());

  CriterionReport rep;
  rep.d = spec.dimension;
  rep.L = L;
  rep.kappa = kappa;
  rep.c7 = c7;
  rep.n_env = n_env;
  rep.n_path = n_path;
  const double log_pow =
      std::pow(std::log(1.0 / kappa), 3.0 * (spec.dimension - 1));
  const double l_pow = std::pow(L, 3.0 * (spec.dimension - 1) + 1.0);

  for (double w : widths) {
    if (w < R + 2.0 || w >= l3) continue;
    const Domain box = criterion_box(spec.dimension, L, w, R);
    // The exit samples do not depend on a; reuse them across the whole grid.
    std::vector<double> rho(n_env);
    for (int e = 0; e < n_env; ++e)
      rho[e] = sample_rho(spec, box, L, n_path, kappa,
                          base_seed + static_cast<std::uint64_t>(e), policy)
                   .rho_half;
    for (double a : a_grid) {
      RunningStat stat;
      for (double r : rho) stat.add(std::pow(r, a));
      CriterionCandidate c;
      c.a = a;
      c.L_tilde = w;
      c.moment = stat.mean();
      c.moment_stderr = stat.stderr_of_mean();
      c.core = std::pow(w, spec.dimension - 1.0) * l_pow * c.moment;
      c.lhs = c7 * log_pow * c.core;
      rep.candidates.push_back(c);
    }
  }
  rep.best = *std::min_element(
      rep.candidates.begin(), rep.candidates.end(),
      [](const CriterionCandidate& x, const CriterionCandidate& y) {
        return x.lhs < y.lhs;
      });
  rep.decision = rep.best.lhs < 1.0;
  return rep;
}

std::vector<LevelCheck> check_recursion(const EnvSpec& spec,
                                        const BoxHierarchy& h, int k_max,
                                        const RecursionBudgets& budgets,
                                        std::uint64_t base_seed,
                                        const SimPolicy& policy) {
  if (k_max < 0 || k_max > 2)
    throw std::invalid_argument(
        "check_recursion: k_max must be <= 2 (box sizes grow faster than "
        "any simulation budget)");
  if (static_cast<int>(h.levels.size()) <= k_max)
    throw std::invalid_argument("check_recursion: hierarchy too short");
  check_kappa(budgets.kappa);
  const double R = spec.dependence_range;

  std::vector<LevelCheck> table;
  for (int k = 0; k <= k_max; ++k) {
    const HierarchyLevel& lev = h.levels[k];
    // Ltilde_{k+1} from the closed form; the hierarchy may end at k_max.
    const double l_next = lev.N * lev.L;
    const double lt_next = std::pow(l_next / h.L0, 3.0) * h.L_tilde0;
    LevelCheck row;
    row.k = k;
    row.target = std::pow(budgets.kappa, lev.u * lev.L);
    try {
      const Domain box = criterion_box(spec.dimension, lev.L, lev.L_tilde, R);
      const RhoMomentEstimate m =
          estimate_rho_moment(spec, box, lev.L, lev.a, budgets.n_env,
                              budgets.n_path, budgets.kappa, base_seed, policy);
      const double pref =
          budgets.c3 * std::pow(lt_next, spec.dimension - 1.0) * lev.L;
      row.moment = m.moment.mean;
      row.moment_stderr = m.moment.stderr_;
      row.phi = pref * row.moment;
      row.phi_stderr = pref * row.moment_stderr;
      const bool noisy = row.moment_stderr >= 0.5 * row.moment;
      const bool mostly_flagged = 2 * m.n_env_flagged > m.n_env;
      row.feasible = !noisy && !mostly_flagged;
      row.holds = row.feasible && row.phi < row.target;
      if (noisy) row.note = "moment not resolved above MC noise";
      if (mostly_flagged) row.note = "timeout excess in most environments";
    } catch (const std::exception& ex) {
      row.feasible = false;
      row.note = std::string("infeasible at this budget: ") + ex.what();
    }
    table.push_back(row);
  }
  return table;
}

DecayFit slab_exit_decay_scan(const EnvSpec& spec, double b_back,
                              const std::vector<double>& L_list, int n_env,
                              long long n_path, std::uint64_t base_seed,
                              const SimPolicy& policy) {
  if (L_list.size() < 3)
    throw std::invalid_argument("slab_exit_decay_scan: need >= 3 L values");
  if (!std::is_sorted(L_list.begin(), L_list.end()))
    throw std::invalid_argument("slab_exit_decay_scan: L_list must increase");
  if (!(b_back > 0.0))
    throw std::invalid_argument("slab_exit_decay_scan: b_back must be > 0");

  DecayFit fit;
  Vec e1 = Vec::Zero(spec.dimension);
  e1[0] = 1.0;
  const Vec x0 = Vec::Zero(spec.dimension);
  for (double L : L_list) {
    const Domain dom = Domain::thresholds(e1, -b_back * L, L);
    DecayRow row;
    row.L = L;
    row.n = static_cast<long long>(n_env) * n_path;
    RunningStat envs;
    long long backs = 0;
    for (int e = 0; e < n_env; ++e) {
      const Environment env = sample_environment(
          spec, base_seed + static_cast<std::uint64_t>(e));
      const double dt = policy.resolved_dt(dom, env);
      const double max_time = policy.resolved_max_time(dom, env);
      std::vector<signed char> hit(n_path, 0);
      parallel_for(n_path, policy.workers, [&](long long i) {
        const ExitRecord rec =
            run_until_exit(env, x0, dom, dt, static_cast<std::uint64_t>(i),
                           max_time, policy.bridge_correction);
        hit[i] = rec.face == FaceLabel::kNegative ? 1 : 0;
      });
      long long k = 0;
      for (long long i = 0; i < n_path; ++i) k += hit[i];
      backs += k;
      envs.add(static_cast<double>(k) / n_path);
    }
    row.p_hat = envs.mean();
    row.p_stderr = envs.stderr_of_mean();
    if (backs == 0) {
      row.zero_count = true;
      row.upper_bound = 3.0 / static_cast<double>(row.n);
    }
    fit.rows.push_back(row);
  }

  // Weighted least squares of log(-log p) on log L.
  std::vector<double> xs, ys, ws;
  for (const DecayRow& row : fit.rows) {
    if (row.zero_count || row.p_hat >= 0.95) continue;
    const double y = std::log(-std::log(row.p_hat));
    const double sig = std::max(
        row.p_stderr / (row.p_hat * -std::log(row.p_hat)), 1e-6);
    xs.push_back(std::log(row.L));
    ys.push_back(y);
    ws.push_back(1.0 / (sig * sig));
  }
  const DecayRow& last = fit.rows.back();
  if (xs.size() < 2) {
    fit.rejected = true;
    fit.diagnostic = "fewer than 2 usable points (zero counts or p >= 0.95)";
  } else if (last.p_hat >
             fit.rows.front().p_hat + 2.0 * (last.p_stderr +
                                             fit.rows.front().p_stderr)) {
    fit.rejected = true;
    fit.diagnostic = "back-exit probability increases with L (wrong drift "
                     "direction for a decay fit)";
  }
  if (!fit.rejected) {
    double sw = 0, sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (size_t i = 0; i < xs.size(); ++i) {
      sw += ws[i];
      sx += ws[i] * xs[i];
      sy += ws[i] * ys[i];
      sxx += ws[i] * xs[i] * xs[i];
      sxy += ws[i] * xs[i] * ys[i];
    }
    const double det = sw * sxx - sx * sx;
    if (det <= 0.0) {
      fit.rejected = true;
      fit.diagnostic = "degenerate design matrix";
    } else {
      const double slope = (sw * sxy - sx * sy) / det;
      const double inter = (sxx * sy - sx * sxy) / det;
      fit.gamma = slope;
      fit.c = std::exp(inter);
      fit.gamma_stderr = std::sqrt(sw / det);
      fit.c_stderr = fit.c * std::sqrt(sxx / det);
    }
    double num = 0.0, den = 0.0;
    for (const DecayRow& row : fit.rows) {
      if (row.zero_count) continue;
      num += row.L * -std::log(row.p_hat);
      den += row.L * row.L;
    }
    fit.rate_linear = den > 0.0 ? num / den : 0.0;
  }
  return fit;
}

KappaEstimate estimate_kappa(const EnvSpec& spec, double L_probe, int n_env,
                             long long n_path, std::uint64_t base_seed,
                             const SimPolicy& policy) {
  if (L_probe < 1.0)
    throw std::invalid_argument("estimate_kappa: L_probe must be >= 1");
  if (n_env < 1) throw std::invalid_argument("estimate_kappa: n_env >= 1");
  // Unit-scale probe tube: back wall 1/4 behind the start, radius 1/2, so
  // the 1-D zero-drift traversal probability is (1/4) / (L + 1/4).
  const Domain tube = Domain::tube(spec.dimension, 0.25, L_probe, 0.5);
  const Vec x0 = Vec::Zero(spec.dimension);

  KappaEstimate out;
  out.n_env = n_env;
  out.n_path = n_path;
  RunningStat cs, ps;
  double worst = 1.0;
  for (int e = 0; e < n_env; ++e) {
    const Environment env = sample_environment(
        spec, base_seed + static_cast<std::uint64_t>(e));
    SimPolicy coarse = policy;
    if (coarse.dt <= 0.0) coarse.dt = coarse.resolved_dt(tube, env);
    SimPolicy fine = coarse;
    fine.dt = 0.5 * coarse.dt;
    const ExitStats a =
        estimate_exit_stats(env, x0, tube, n_path, 0.5, L_probe, coarse);
    const ExitStats b =
        estimate_exit_stats(env, x0, tube, n_path, 0.5, L_probe, fine);
    // First-order Richardson step in dt; the crossing bias is O(dt) even
    // with the bridge correction because the drift varies along the step.
    const double p = std::clamp(2.0 * b.p_hat - a.p_hat, 1e-12, 1.0);
    const double c_hat = std::pow(p, 1.0 / (L_probe + 1.0));
    cs.add(c_hat);
    ps.add(p);
    worst = std::min(worst, c_hat);
  }
  out.c_hat_worst = worst;
  out.c_hat_mean = cs.mean();
  out.c_hat_stderr = cs.stderr_of_mean();
  out.p_traverse = {ps.mean(), ps.stderr_of_mean(), ps.n};
  out.kappa_hat = std::min(worst, 0.5);
  return out;
}

std::vector<double> rho_samples(const EnvSpec& spec, const Domain& box,
                                double box_scale_L, int n_env, long long n_path,
                                double kappa, std::uint64_t base_seed,
                                const SimPolicy& policy) {
  check_kappa(kappa);
  std::vector<double> out(n_env);
  for (int e = 0; e < n_env; ++e)
    out[e] = sample_rho(spec, box, box_scale_L, n_path, kappa,
                        base_seed + static_cast<std::uint64_t>(e), policy)
                 .rho_half;
  return out;
}

KsResult ks_two_sample(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty())
    throw std::invalid_argument("ks_two_sample: empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double v = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= v) ++i;
    while (j < b.size() && b[j] <= v) ++j;
    d = std::max(d, std::abs(i / na - j / nb));
  }
  KsResult r;
  r.statistic = d;
  const double ne = std::sqrt(na * nb / (na + nb));
  const double lam = (ne + 0.12 + 0.11 / ne) * d;
  double q = 0.0;
  for (int k = 1; k <= 100; ++k)
    q += 2.0 * (k % 2 == 1 ? 1.0 : -1.0) * std::exp(-2.0 * k * k * lam * lam);
  r.p_value = std::clamp(q, 0.0, 1.0);
  return r;
}

}  // namespace rde
