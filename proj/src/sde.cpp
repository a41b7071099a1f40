#include "rde/sde.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "rde/mc.hpp"

namespace rde {
namespace {

// Preference when several faces fire in the same step: corner ties go to the
// lateral label, which never inflates the positive-exit count.
bool prefer(const Face& a, double score_a, const Face& b, double score_b) {
  if (score_a != score_b) return score_a > score_b;
  return a.label == FaceLabel::kLateral && b.label != FaceLabel::kLateral;
}

}  // namespace

double SimPolicy::resolved_dt(const Domain& dom, const Environment& env) const {
  if (dt > 0.0) return dt;
  const double L = 0.5 * dom.diameter();
  return 1e-3 * std::min(1.0, L * L) / env.ellipticity_realized();
}

double SimPolicy::resolved_max_time(const Domain& dom,
                                    const Environment& env) const {
  if (max_time > 0.0) return max_time;
  const double diam = std::max(dom.diameter(), 1.0);
  return 100.0 * env.ellipticity_realized() * diam * diam;
}

Vec step(const Environment& env, const Vec& x, double dt, const Vec& noise) {
  if (dt <= 0.0) throw std::invalid_argument("step: dt must be > 0");
  const double sq = std::sqrt(dt);
  if (env.is_identity_diffusion()) {
    if (env.spec().drift_bound == 0.0) return x + sq * noise;
    return x + dt * env.drift_at(x) + sq * noise;
  }
  return x + dt * env.drift_at(x) +
         sq * (env.diffusion_sqrt_at(x) * noise);
}

ExitRecord run_until_exit(const Environment& env, const Vec& x0,
                          const Domain& dom, double dt, std::uint64_t stream,
                          double max_time, bool bridge_correction) {
  const int d = dom.dimension();
  ExitRecord rec;
  rec.dt = dt;
  const auto& faces = dom.faces();

  // Start on or outside the boundary: immediate exit through the most
  // violated face.
  {
    const Face* best = nullptr;
    double best_score = -1e300;
    for (const Face& f : faces) {
      const double v = f.normal.dot(x0) - f.offset;
      if (v >= -1e-12 &&
          (best == nullptr || prefer(f, v, *best, best_score))) {
        best = &f;
        best_score = v;
      }
    }
    if (best != nullptr) {
      rec.exit_point = x0;
      rec.exit_time = 0.0;
      rec.face = best->label;
      return rec;
    }
  }

  CounterRng r(env.seed(), rng::combine(stream, 0x70617468ULL));
  const bool pure_bm =
      env.is_identity_diffusion() && env.spec().drift_bound == 0.0;
  const bool const_drift =
      env.is_identity_diffusion() && env.is_constant_drift();
  const double sq = std::sqrt(dt);
  Vec x = x0, xn(d), noise(d);
  double t = 0.0;
  long long steps = 0;

  while (t < max_time) {
    for (int i = 0; i < d; ++i) noise[i] = r.normal();
    if (pure_bm) {
      xn = x + sq * noise;
    } else if (const_drift) {
      xn = x + sq * noise;
      xn[0] += env.spec().mean_drift * dt;
    } else {
      xn = step(env, x, dt, noise);
    }
    ++steps;
    t += dt;

    // Discrete crossing: take the earliest face crossed by the segment.
    const Face* hit = nullptr;
    double hit_s = 2.0;
    for (const Face& f : faces) {
      const double v_new = f.normal.dot(xn) - f.offset;
      if (v_new < 0.0) continue;
      const double v_old = f.normal.dot(x) - f.offset;
      const double denom = v_new - v_old;
      const double s = denom > 0.0 ? -v_old / denom : 0.0;
      if (hit == nullptr || s < hit_s ||
          (s == hit_s && f.label == FaceLabel::kLateral)) {
        hit = &f;
        hit_s = s;
      }
    }
    if (hit != nullptr) {
      Vec xe = x + hit_s * (xn - x);
      xe -= (hit->normal.dot(xe) - hit->offset) * hit->normal;
      rec.exit_point = xe;
      rec.exit_time = t - dt + hit_s * dt;
      rec.face = hit->label;
      rec.steps = steps;
      return rec;
    }

    if (bridge_correction) {
      // Both endpoints are inside; a Brownian bridge may still have crossed a
      // face with probability exp(-2 d1 d2 / (abar dt)).
      const Face* crossed = nullptr;
      double crossed_p = 0.0;
      for (const Face& f : faces) {
        const double d1 = f.offset - f.normal.dot(x);
        const double d2 = f.offset - f.normal.dot(xn);
        double abar = 1.0;
        if (!env.is_identity_diffusion())
          abar = f.normal.dot(env.diffusion_at(x) * f.normal);
        const double expo = 2.0 * d1 * d2 / (abar * dt);
        if (expo > 36.0) continue;  // p < 2e-16, skip the draw
        const double p = std::exp(-expo);
        if (r.uniform() < p &&
            (crossed == nullptr || prefer(f, p, *crossed, crossed_p))) {
          crossed = &f;
          crossed_p = p;
        }
      }
      if (crossed != nullptr) {
        const double d1 = crossed->offset - crossed->normal.dot(x);
        const double d2 = crossed->offset - crossed->normal.dot(xn);
        const double s = d1 / std::max(d1 + d2, 1e-300);
        Vec xe = x + s * (xn - x);
        xe -= (crossed->normal.dot(xe) - crossed->offset) * crossed->normal;
        rec.exit_point = xe;
        rec.exit_time = t - dt + s * dt;
        rec.face = crossed->label;
        rec.steps = steps;
        return rec;
      }
    }
    x.swap(xn);
  }

  rec.exit_point = x;
  rec.exit_time = t;
  rec.face = FaceLabel::kTimeout;
  rec.steps = steps;
  return rec;
}

MCEstimate mean_exit_time(const Environment& env, const Vec& x0,
                          const Domain& dom, long long n_path,
                          const SimPolicy& policy) {
  if (n_path < 1000)
    throw std::invalid_argument("mean_exit_time: n_path must be >= 1e3");
  const double dt = policy.resolved_dt(dom, env);
  const double max_time = policy.resolved_max_time(dom, env);
  std::vector<double> times(n_path);
  std::vector<char> timeout(n_path, 0);
  parallel_for(n_path, policy.workers, [&](long long i) {
    const ExitRecord rec =
        run_until_exit(env, x0, dom, dt, static_cast<std::uint64_t>(i),
                       max_time, policy.bridge_correction);
    times[i] = rec.exit_time;
    timeout[i] = rec.face == FaceLabel::kTimeout ? 1 : 0;
  });
  long long n_timeout = 0;
  RunningStat stat;
  for (long long i = 0; i < n_path; ++i) {
    if (timeout[i]) {
      ++n_timeout;
      continue;
    }
    stat.add(times[i]);
  }
  const double frac = static_cast<double>(n_timeout) / n_path;
  if (frac > policy.timeout_tolerance)
    throw std::runtime_error("mean_exit_time: timeout fraction " +
                             std::to_string(frac) + " exceeds tolerance");
  return {stat.mean(), stat.stderr_of_mean(), stat.n};
}

SlabStep run_to_neighbor_slab(const Environment& env, const Vec& x0, double L0,
                              std::uint64_t stream, const SimPolicy& policy) {
  const double R = env.spec().dependence_range;
  if (L0 <= R)
    throw std::invalid_argument("run_to_neighbor_slab: requires L0 > R");
  const int d = env.spec().dimension;
  // Slab index: I(x) = i when x.e1 - i L0 in [-L0/2, L0/2).
  const long long i0 =
      static_cast<long long>(std::floor(x0[0] / L0 + 0.5));
  const double up = (i0 + 1) * L0 - R / 2.0;
  const double lo = (i0 - 1) * L0 + R / 2.0;
  Vec e1 = Vec::Zero(d);
  e1[0] = 1.0;
  if (x0[0] >= up || x0[0] <= lo) {
    SlabStep out;
    out.side = x0[0] >= up ? +1 : -1;
    out.record.exit_point = x0;
    out.record.face =
        out.side > 0 ? FaceLabel::kPositive : FaceLabel::kNegative;
    return out;
  }
  const Domain dom = Domain::thresholds(e1, lo, up);
  const double dt = policy.resolved_dt(dom, env);
  const double max_time = policy.resolved_max_time(dom, env);
  SlabStep out;
  out.record = run_until_exit(env, x0, dom, dt, stream, max_time,
                              policy.bridge_correction);
  out.side = out.record.face == FaceLabel::kPositive ? +1
             : out.record.face == FaceLabel::kNegative ? -1
                                                       : 0;
  return out;
}

double timeout_fraction_of(const ExitStats& s) {
  return s.n > 0 ? static_cast<double>(s.n_timeout) / s.n : 0.0;
}

ExitStats estimate_exit_stats(const Environment& env, const Vec& x0,
                              const Domain& box, long long n_path,
                              double kappa, double box_scale_L,
                              const SimPolicy& policy) {
  if (n_path < 1)
    throw std::invalid_argument("estimate_exit_stats: n_path must be >= 1");
  const double dt = policy.resolved_dt(box, env);
  const double max_time = policy.resolved_max_time(box, env);
  std::vector<signed char> outcome(n_path, 0);  // +1 positive, -1 other, 0 timeout
  parallel_for(n_path, policy.workers, [&](long long i) {
    const ExitRecord rec =
        run_until_exit(env, x0, box, dt, static_cast<std::uint64_t>(i),
                       max_time, policy.bridge_correction);
    outcome[i] = rec.face == FaceLabel::kTimeout ? 0
                 : rec.face == FaceLabel::kPositive ? +1
                                                    : -1;
  });
  ExitStats s;
  s.n = n_path;
  long long k_p = 0, k_q = 0;
  for (long long i = 0; i < n_path; ++i) {
    if (outcome[i] > 0) ++k_p;
    else if (outcome[i] < 0) ++k_q;
    else ++s.n_timeout;
  }
  const long long done = k_p + k_q;
  if (done == 0)
    throw std::runtime_error("estimate_exit_stats: no completed paths");
  if (timeout_fraction_of(s) > policy.timeout_tolerance)
    throw std::runtime_error("estimate_exit_stats: timeout excess");
  s.n_positive = k_p;
  s.p_hat = static_cast<double>(k_p) / done;
  s.q_hat = static_cast<double>(k_q) / done;
  s.p_stderr = std::sqrt(s.p_hat * s.q_hat / done);
  s.degenerate_counts = k_p == 0 || k_q == 0;
  // rho_B is a ratio of exact probabilities; the raw MC ratio is undefined at
  // k_p = 0, hence the add-1/2 smoothing plus the ellipticity cap.
  double rho = (static_cast<double>(k_q) + 0.5) /
               (static_cast<double>(k_p) + 0.5);
  const double cap = std::pow(kappa, -(box_scale_L + 3.0));
  if (rho > cap) {
    rho = cap;
    s.rho_capped = true;
  }
  s.rho_hat = rho;
  return s;
}

MCEstimate path_integral_until_exit(
    const Environment& env, const Vec& x0, const Domain& dom,
    const std::function<double(const Vec&)>& f, long long n_path,
    const SimPolicy& policy) {
  const int d = dom.dimension();
  const double dt = policy.resolved_dt(dom, env);
  const double max_time = policy.resolved_max_time(dom, env);
  std::vector<double> vals(n_path);
  std::vector<char> timeout(n_path, 0);
  parallel_for(n_path, policy.workers, [&](long long i) {
    CounterRng r(env.seed(),
                 rng::combine(static_cast<std::uint64_t>(i), 0x70617468ULL));
    const bool pure_bm =
        env.is_identity_diffusion() && env.spec().drift_bound == 0.0;
    const bool const_drift =
        env.is_identity_diffusion() && env.is_constant_drift();
    const double sq = std::sqrt(dt);
    Vec x = x0, xn(d), noise(d);
    double t = 0.0, acc = 0.0;
    const auto& faces = dom.faces();
    bool done = false;
    while (t < max_time) {
      const double fx = f(x);
      for (int k = 0; k < d; ++k) noise[k] = r.normal();
      if (pure_bm) {
        xn = x + sq * noise;
      } else if (const_drift) {
        xn = x + sq * noise;
        xn[0] += env.spec().mean_drift * dt;
      } else {
        xn = step(env, x, dt, noise);
      }
      t += dt;
      const Face* hit = nullptr;
      double hit_s = 2.0;
      for (const Face& fc : faces) {
        const double v_new = fc.normal.dot(xn) - fc.offset;
        if (v_new < 0.0) continue;
        const double v_old = fc.normal.dot(x) - fc.offset;
        const double denom = v_new - v_old;
        const double s = denom > 0.0 ? -v_old / denom : 0.0;
        if (hit == nullptr || s < hit_s) {
          hit = &fc;
          hit_s = s;
        }
      }
      if (hit != nullptr) {
        acc += fx * hit_s * dt;
        done = true;
        break;
      }
      if (policy.bridge_correction) {
        const Face* crossed = nullptr;
        double crossed_p = 0.0;
        for (const Face& fc : faces) {
          const double d1 = fc.offset - fc.normal.dot(x);
          const double d2 = fc.offset - fc.normal.dot(xn);
          double abar = 1.0;
          if (!env.is_identity_diffusion())
            abar = fc.normal.dot(env.diffusion_at(x) * fc.normal);
          const double expo = 2.0 * d1 * d2 / (abar * dt);
          if (expo > 36.0) continue;
          const double p = std::exp(-expo);
          if (r.uniform() < p && (crossed == nullptr || p > crossed_p)) {
            crossed = &fc;
            crossed_p = p;
          }
        }
        if (crossed != nullptr) {
          const double d1 = crossed->offset - crossed->normal.dot(x);
          const double d2 = crossed->offset - crossed->normal.dot(xn);
          acc += fx * dt * d1 / std::max(d1 + d2, 1e-300);
          done = true;
          break;
        }
      }
      acc += fx * dt;
      x.swap(xn);
    }
    vals[i] = acc;
    timeout[i] = done ? 0 : 1;
  });
  RunningStat stat;
  long long n_timeout = 0;
  for (long long i = 0; i < n_path; ++i) {
    if (timeout[i]) {
      ++n_timeout;
      continue;
    }
    stat.add(vals[i]);
  }
  if (static_cast<double>(n_timeout) / n_path > policy.timeout_tolerance)
    throw std::runtime_error("path_integral_until_exit: timeout excess");
  return {stat.mean(), stat.stderr_of_mean(), stat.n};
}

MCEstimate annealed_positive_exit(const EnvSpec& spec, const Vec& x0,
                                  const Domain& dom, int n_env,
                                  long long n_path, std::uint64_t base_seed,
                                  const SimPolicy& policy) {
  RunningStat over_envs;
  for (int e = 0; e < n_env; ++e) {
    Environment env(spec, base_seed + static_cast<std::uint64_t>(e));
    const double dt = policy.resolved_dt(dom, env);
    const double max_time = policy.resolved_max_time(dom, env);
    std::vector<signed char> pos(n_path, 0);
    parallel_for(n_path, policy.workers, [&](long long i) {
      const ExitRecord rec =
          run_until_exit(env, x0, dom, dt, static_cast<std::uint64_t>(i),
                         max_time, policy.bridge_correction);
      pos[i] = rec.face == FaceLabel::kPositive ? 1 : 0;
    });
    long long k = 0;
    for (long long i = 0; i < n_path; ++i) k += pos[i];
    over_envs.add(static_cast<double>(k) / n_path);
  }
  return {over_envs.mean(), over_envs.stderr_of_mean(), over_envs.n};
}

}  // namespace rde
