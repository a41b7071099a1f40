#include "rde/oned.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "rde/mc.hpp"

namespace rde {
namespace {

double drift_over_a(const Environment& env, double u, bool mirrored) {
  Vec x(1);
  x[0] = mirrored ? -u : u;
  const double sign = mirrored ? -1.0 : 1.0;
  const double b = sign * env.drift1_at(x);
  if (env.is_identity_diffusion()) return 2.0 * b;
  return 2.0 * b / env.diffusion_at(x)(0, 0);
}

}  // namespace

ScaleProfile::ScaleProfile(const Environment& env, double range,
                           double quad_step, bool mirrored)
    : env_(env), range_(range) {
  if (env.spec().dimension != 1)
    throw std::invalid_argument("ScaleProfile: environment must be 1-D");
  if (range <= 0.0 || quad_step <= 0.0)
    throw std::invalid_argument("ScaleProfile: range and quad_step must be > 0");
  const long long n = std::max<long long>(
      1, static_cast<long long>(std::ceil(range / quad_step)));
  h_ = range / static_cast<double>(n);

  // g = 2b/a on the quarter-step grid, then I = int_0^x g by Simpson on each
  // half step, then s by Simpson on each full step using exp(-I) at the
  // half-step midpoints.
  const long long nq = 8 * n;  // quarter steps across [-range, range]
  std::vector<double> g(nq + 1);
  for (long long i = 0; i <= nq; ++i)
    g[i] = drift_over_a(env_, -range_ + 0.25 * h_ * static_cast<double>(i),
                        mirrored);

  log_i_.assign(4 * n + 1, 0.0);
  for (long long k = 0; k < 4 * n; ++k) {
    const long long q = 2 * k;
    log_i_[k + 1] =
        log_i_[k] + (h_ / 12.0) * (g[q] + 4.0 * g[q + 1] + g[q + 2]);
  }
  const double at_zero = log_i_[2 * n];
  for (double& v : log_i_) v -= at_zero;

  s_.assign(2 * n + 1, 0.0);
  for (long long k = 0; k < 2 * n; ++k) {
    const double f0 = std::exp(-log_i_[2 * k]);
    const double fm = std::exp(-log_i_[2 * k + 1]);
    const double f1 = std::exp(-log_i_[2 * k + 2]);
    s_[k + 1] = s_[k] + (h_ / 6.0) * (f0 + 4.0 * fm + f1);
  }
  const double s_zero = s_[n];
  for (double& v : s_) v -= s_zero;
}

double ScaleProfile::log_integrand(double x) const {
  if (x < -range_ - 1e-9 || x > range_ + 1e-9)
    throw std::out_of_range("ScaleProfile: x outside cached range");
  const double half = 0.5 * h_;
  const double t = std::clamp((x + range_) / half, 0.0,
                              static_cast<double>(log_i_.size() - 1));
  const long long i =
      std::min<long long>(static_cast<long long>(t), log_i_.size() - 2);
  const double frac = t - static_cast<double>(i);
  return log_i_[i] * (1.0 - frac) + log_i_[i + 1] * frac;
}

double ScaleProfile::scale(double x) const {
  if (x < -range_ - 1e-9 || x > range_ + 1e-9)
    throw std::out_of_range("ScaleProfile: x outside cached range");
  const double t = std::clamp((x + range_) / h_, 0.0,
                              static_cast<double>(s_.size() - 1));
  const long long i =
      std::min<long long>(static_cast<long long>(t), s_.size() - 2);
  const double x_i = -range_ + h_ * static_cast<double>(i);
  const double dx = x - x_i;
  if (std::abs(dx) < 1e-14) return s_[i];
  // Trapezoid correction from the nearest node; both endpoints of the
  // remainder use the interpolated exponent.
  const double f0 = std::exp(-log_integrand(x_i));
  const double f1 = std::exp(-log_integrand(x));
  return s_[i] + 0.5 * dx * (f0 + f1);
}

double ScaleProfile::quad_error_bound(double x) const {
  // Composite Simpson: |err| <= |x| h^4 / 180 * max|f''''| with f = exp(-I).
  // I' = 2b/a is bounded by g_max and its derivatives by the field Lipschitz
  // constant; the crude envelope below is monotone in both.
  const EnvSpec& sp = env_.spec();
  const double nu = env_.ellipticity_realized();
  const double g_max = 2.0 * sp.drift_bound * nu;
  const double d_max = std::max(1.0, 2.0 * env_.lipschitz_bound() * nu);
  const double m4 = std::pow(g_max + d_max, 4) * std::exp(g_max * range_);
  return std::abs(x) * std::pow(h_, 4) / 180.0 * m4 + 1e-14;
}

double ScaleProfile::exit_up_probability(double down, double x,
                                         double up) const {
  if (!(down < x && x < up))
    throw std::invalid_argument("exit_up_probability: need down < x < up");
  // (s(x) - s(down)) / (s(up) - s(down)), but computed from local integrals
  // with the exponent re-centered at x: far from the origin the cumulative
  // scale function saturates and the cached differences cancel to noise.
  const double base = log_integrand(x);
  auto segment = [&](double a, double b) {
    const long long n =
        std::max<long long>(1, static_cast<long long>(std::ceil((b - a) / h_)));
    const double step = (b - a) / static_cast<double>(n);
    double acc = 0.0;
    for (long long k = 0; k < n; ++k) {
      const double y0 = a + step * static_cast<double>(k);
      const double f0 = std::exp(base - log_integrand(y0));
      const double fm = std::exp(base - log_integrand(y0 + 0.5 * step));
      const double f1 = std::exp(base - log_integrand(y0 + step));
      acc += (step / 6.0) * (f0 + 4.0 * fm + f1);
    }
    return acc;
  };
  const double below = segment(down, x);
  const double above = segment(x, up);
  return below / (below + above);
}

double rho_L_exact(const ScaleProfile& profile, double L) {
  return profile.scale(L) / (-profile.scale(-L));
}

IdentityReport check_log_odds_identity(const EnvSpec& spec1d, double L, int n_env,
                                  double quad_step, std::uint64_t base_seed) {
  spec1d.validate();
  if (spec1d.dimension != 1)
    throw std::invalid_argument("check_log_odds_identity: spec must be 1-D");
  if (n_env < 100)
    throw std::invalid_argument("check_log_odds_identity: n_env must be >= 100");
  IdentityReport rep;
  rep.n_env = n_env;
  RunningStat lhs, rhs, diff;
  for (int i = 0; i < n_env; ++i) {
    const Environment env =
        sample_environment(spec1d, base_seed + static_cast<std::uint64_t>(i));
    const ScaleProfile profile(env, L, quad_step);
    const double log_rho = std::log(rho_L_exact(profile, L));
    // -int_{-L}^0 2b/a du = I(-L); by stationarity this has mean -2L E[b/a].
    const double paired = profile.log_integrand(-L);
    lhs.add(log_rho);
    rhs.add(paired);
    diff.add(log_rho - paired);
    if (i == 0) rep.quad_bound = profile.quad_error_bound(L) * 4.0;
  }
  rep.lhs_mean = lhs.mean();
  rep.lhs_stderr = lhs.stderr_of_mean();
  rep.rhs_mean = rhs.mean();
  rep.diff_mean = diff.mean();
  rep.diff_stderr = diff.stderr_of_mean();
  rep.passed =
      std::abs(rep.diff_mean) <= 3.0 * rep.diff_stderr + rep.quad_bound + 1e-9;
  return rep;
}

DichotomyReport solomon_dichotomy(const EnvSpec& spec1d, double L,
                                  const std::vector<double>& a_grid, int n_env,
                                  double horizon, std::uint64_t base_seed,
                                  long long n_mc_paths,
                                  const SimPolicy& policy) {
  spec1d.validate();
  if (spec1d.dimension != 1)
    throw std::invalid_argument("solomon_dichotomy: spec must be 1-D");
  if (a_grid.empty())
    throw std::invalid_argument("solomon_dichotomy: a_grid must be non-empty");
  DichotomyReport rep;

  std::vector<double> log_rho(n_env);
  RunningStat log_stat;
  std::vector<RunningStat> moment(a_grid.size());
  for (int i = 0; i < n_env; ++i) {
    const Environment env =
        sample_environment(spec1d, base_seed + static_cast<std::uint64_t>(i));
    const ScaleProfile profile(env, L);
    log_rho[i] = std::log(rho_L_exact(profile, L));
    log_stat.add(log_rho[i]);
    for (std::size_t j = 0; j < a_grid.size(); ++j)
      moment[j].add(std::exp(a_grid[j] * log_rho[i]));
  }
  rep.mean_log_rho = log_stat.mean();
  rep.mean_log_rho_stderr = log_stat.stderr_of_mean();
  rep.min_moment = moment[0].mean();
  rep.best_a = a_grid[0];
  for (std::size_t j = 1; j < a_grid.size(); ++j) {
    if (moment[j].mean() < rep.min_moment) {
      rep.min_moment = moment[j].mean();
      rep.best_a = a_grid[j];
    }
  }

  // (v): annealed long-horizon displacement, one fresh environment per path.
  const double dt = policy.dt > 0.0 ? policy.dt : 1e-3;
  const long long n_steps = static_cast<long long>(std::ceil(horizon / dt));
  long long n_right = 0, n_left = 0;
  for (long long p = 0; p < n_mc_paths; ++p) {
    const std::uint64_t seed = rng::combine(
        base_seed, 0x64696368ULL + static_cast<std::uint64_t>(p));
    const Environment env = sample_environment(spec1d, seed);
    CounterRng gen(seed, 0x70617468ULL);
    Vec x(1);
    x[0] = 0.0;
    const double sqdt = std::sqrt(dt);
    for (long long k = 0; k < n_steps; ++k) {
      const double b = env.drift1_at(x);
      double sig = 1.0;
      if (!env.is_identity_diffusion())
        sig = std::sqrt(env.diffusion_at(x)(0, 0));
      x[0] += b * dt + sig * sqdt * gen.normal();
    }
    if (x[0] > L) ++n_right;
    if (x[0] < -L) ++n_left;
  }
  rep.transient_fraction =
      static_cast<double>(n_right) / static_cast<double>(n_mc_paths);
  rep.n_transient_paths = n_right;
  const double left_fraction =
      static_cast<double>(n_left) / static_cast<double>(n_mc_paths);

  const double lo = rep.mean_log_rho - 3.0 * rep.mean_log_rho_stderr;
  const double hi = rep.mean_log_rho + 3.0 * rep.mean_log_rho_stderr;
  if (hi < 0.0 && rep.min_moment < 1.0 && rep.transient_fraction > 0.9)
    rep.verdict = DichotomyVerdict::kTransientPositive;
  else if (lo > 0.0 && left_fraction > 0.9 && rep.transient_fraction < 0.1)
    rep.verdict = DichotomyVerdict::kTransientNegative;
  else
    rep.verdict = DichotomyVerdict::kInconclusive;
  rep.signs_agree =
      ((rep.mean_log_rho < 0.0) == (rep.min_moment < 1.0)) &&
      ((rep.mean_log_rho < 0.0) == (rep.transient_fraction > left_fraction));
  return rep;
}

namespace {

struct WindowData {
  std::vector<double> log_rho_hat;  // sites 0..n_window
  std::vector<double> eta;          // fixed-point-seeded
  std::vector<double> eta_alt;      // absorbing-truncation-seeded
};

WindowData window_recursion(const Environment& env, double L0, int n_window,
                            double quad_step) {
  WindowData wd;
  const double range = (static_cast<double>(n_window) + 2.0) * L0;
  const ScaleProfile profile(env, range, quad_step);
  std::vector<double> p(n_window + 1), q(n_window + 1);
  wd.log_rho_hat.resize(n_window + 1);
  for (int n = 0; n <= n_window; ++n) {
    const double c = static_cast<double>(n) * L0;
    p[n] = profile.exit_up_probability(c - L0, c, c + L0);
    q[n] = 1.0 - p[n];
    wd.log_rho_hat[n] = std::log(q[n]) - std::log(p[n]);
  }
  wd.eta.assign(n_window + 1, 0.0);
  wd.eta_alt.assign(n_window + 1, 0.0);
  const double edge_rho = std::exp(wd.log_rho_hat[n_window]);
  wd.eta[n_window] = std::clamp(edge_rho, 1e-300, 1.0 - 1e-12);
  wd.eta_alt[n_window] = q[n_window];
  for (int n = n_window - 1; n >= 0; --n) {
    wd.eta[n] = q[n] / (1.0 - p[n] * wd.eta[n + 1]);
    wd.eta_alt[n] = q[n] / (1.0 - p[n] * wd.eta_alt[n + 1]);
  }
  return wd;
}

}  // namespace

EtaDeltaReport eta_delta_recursion(const EnvSpec& spec1d, double L0,
                                   int n_window, int n_env,
                                   std::uint64_t base_seed, double quad_step) {
  spec1d.validate();
  if (spec1d.dimension != 1)
    throw std::invalid_argument("eta_delta_recursion: spec must be 1-D");
  if (n_window < 50)
    throw std::invalid_argument(
        "eta_delta_recursion: n_window must be >= 50 (the truncation seeding "
        "is only forgotten geometrically)");
  EtaDeltaReport rep;
  rep.n_window = n_window;

  const WindowData wd = window_recursion(
      sample_environment(spec1d, base_seed), L0, n_window, quad_step);
  rep.eta = wd.eta;
  rep.log_rho_hat = wd.log_rho_hat;
  rep.delta.assign(n_window + 1, 0.0);
  rep.delta[n_window] = 1.0;
  for (int n = n_window - 1; n >= 0; --n)
    rep.delta[n] =
        std::exp(-wd.log_rho_hat[n]) * wd.eta[n] * rep.delta[n + 1];
  const int center = n_window / 2;
  rep.eta_center = wd.eta[center];
  rep.eta_center_alt_seed = wd.eta_alt[center];

  // Endpoint slope over the central half equals the window mean of
  // -log rho_hat(n) + log eta_n; site scatter gives its standard error.
  const int c_lo = n_window / 4;
  const int c_hi = (3 * n_window) / 4;
  RunningStat site;
  for (int n = c_lo; n < c_hi; ++n)
    site.add(-wd.log_rho_hat[n] + std::log(wd.eta[n]));
  rep.slope = site.mean();
  rep.slope_stderr = site.stderr_of_mean();

  // Ensemble expectation from independent environments (base_seed excluded).
  RunningStat ens;
  for (int i = 1; i <= n_env; ++i) {
    const WindowData w = window_recursion(
        sample_environment(spec1d,
                           base_seed + static_cast<std::uint64_t>(i)),
        L0, n_window, quad_step);
    RunningStat per;
    for (int n = c_lo; n < c_hi; ++n)
      per.add(-w.log_rho_hat[n] + std::log(w.eta[n]));
    ens.add(per.mean());
  }
  rep.expectation = ens.mean();
  rep.expectation_stderr = ens.stderr_of_mean();
  return rep;
}

double chain_exit_probability(const ChainSpec& chain, int start) {
  const int m = static_cast<int>(chain.rho.size());
  if (m < 1) throw std::invalid_argument("chain_exit_probability: empty chain");
  if (start < 0 || start > m + 1)
    throw std::invalid_argument("chain_exit_probability: start out of range");
  for (double r : chain.rho)
    if (!(r > 0.0) || !std::isfinite(r))
      throw std::invalid_argument("chain_exit_probability: rho must be > 0");
  if (start == 0) return 1.0;
  if (start == m + 1) return 0.0;
  // f(m+1) = 0, f(i) = sum_{i <= k <= m} prod_{j=k+1}^m rho(j)^{-1}; the
  // left-exit probability from `start` is f(start)/f(0).
  long double f_next = 1.0L;  // f(m)
  long double prod = 1.0L;    // prod_{j=i+1}^m rho(j)^{-1}; rho(j)=rho[j-1]
  long double f_start = (start == m) ? 1.0L : 0.0L;
  for (int i = m - 1; i >= 0; --i) {
    prod /= static_cast<long double>(chain.rho[i]);
    const long double f_i = f_next + prod;
    if (i == start) f_start = f_i;
    f_next = f_i;
  }
  return static_cast<double>(f_start / f_next);
}

}  // namespace rde
