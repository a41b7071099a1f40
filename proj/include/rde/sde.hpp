#pragma once

#include <cstdint>
#include <functional>
#include <optional>

#include "rde/domain.hpp"
#include "rde/env.hpp"
#include "rde/rng.hpp"

namespace rde {

struct ExitRecord {
  Vec exit_point;
  double exit_time = 0.0;
  FaceLabel face = FaceLabel::kTimeout;
  long long steps = 0;
  double dt = 0.0;
};

struct MCEstimate {
  double mean = 0.0;
  double stderr_ = 0.0;
  long long n = 0;
};

struct ExitStats {
  double p_hat = 0.0;       // frequency of the positive face
  double q_hat = 0.0;
  double rho_hat = 0.0;     // smoothed odds, capped at kappa^{-(L+3)}
  double p_stderr = 0.0;
  long long n = 0;
  long long n_positive = 0;
  long long n_timeout = 0;
  bool rho_capped = false;
  bool degenerate_counts = false;  // k_p = 0 or k_q = 0 at the path budget
};

struct SimPolicy {
  double dt = 0.0;        // 0 => default 1e-3 * min(1, L^2) / nu
  double max_time = 0.0;  // 0 => default 100 * nu * diameter^2
  bool bridge_correction = true;
  double timeout_tolerance = 1e-3;  // estimator refusal threshold
  int workers = 1;

  double resolved_dt(const Domain& dom, const Environment& env) const;
  double resolved_max_time(const Domain& dom, const Environment& env) const;
};

// One Euler-Maruyama step x' = x + b(x) dt + sigma(x) sqrt(dt) * noise.
Vec step(const Environment& env, const Vec& x, double dt, const Vec& noise);

// Simulates until exit (discrete crossing or Brownian-bridge-detected
// crossing of a planar face).  stream selects the counter-RNG path stream.
ExitRecord run_until_exit(const Environment& env, const Vec& x0,
                          const Domain& dom, double dt, std::uint64_t stream,
                          double max_time, bool bridge_correction = true);

// Mean exit time estimator; throws on timeout excess.
MCEstimate mean_exit_time(const Environment& env, const Vec& x0,
                          const Domain& dom, long long n_path,
                          const SimPolicy& policy = {});

// One embedded-chain transition: side = +1 iff the width-R slab with index
// I(x0)+1 is hit first.
struct SlabStep {
  int side = 0;
  ExitRecord record;
};
SlabStep run_to_neighbor_slab(const Environment& env, const Vec& x0, double L0,
                              std::uint64_t stream,
                              const SimPolicy& policy = {});

// Per-environment exit statistics (p_hat, q_hat, rho_hat) for a box domain.
ExitStats estimate_exit_stats(const Environment& env, const Vec& x0,
                              const Domain& box, long long n_path,
                              double kappa, double box_scale_L,
                              const SimPolicy& policy = {});

// Pathwise estimator of E_{x,omega}[ integral_0^{T_dom} f(X_s) ds ]
// (left-endpoint rule, crossing-corrected final partial step).
MCEstimate path_integral_until_exit(const Environment& env, const Vec& x0,
                                    const Domain& dom,
                                    const std::function<double(const Vec&)>& f,
                                    long long n_path,
                                    const SimPolicy& policy = {});

// Annealed exit frequency through the positive face over (env, path) pairs
// with a balanced two-level design.
MCEstimate annealed_positive_exit(const EnvSpec& spec, const Vec& x0,
                                  const Domain& dom, int n_env,
                                  long long n_path, std::uint64_t base_seed,
                                  const SimPolicy& policy = {});

double timeout_fraction_of(const ExitStats& s);

}  // namespace rde
