#pragma once

#include <cstdint>
#include <vector>

#include "rde/env.hpp"
#include "rde/sde.hpp"

namespace rde {

// Cached scale function s(x) = int_0^x exp{-int_0^y 2b/a du} dy of a 1-D
// environment, built by composite Simpson quadrature on [-range, range].
class ScaleProfile {
 public:
  // mirrored = true evaluates the reflected field b~(x) = -b(-x),
  // a~(x) = a(-x); its rho_L is exactly 1/rho_L of the original.
  ScaleProfile(const Environment& env, double range, double quad_step = 1e-3,
               bool mirrored = false);

  double scale(double x) const;            // s(x)
  double log_integrand(double x) const;    // int_0^x 2b/a du
  double quad_error_bound(double x) const;
  double range() const { return range_; }
  const Environment& env() const { return env_; }

  // Exit probability through `up` before `down` starting at x (all within
  // the cached range): (s(x) - s(down)) / (s(up) - s(down)).
  double exit_up_probability(double down, double x, double up) const;

 private:
  Environment env_;
  double range_;
  double h_;
  std::vector<double> log_i_;  // int_0^x 2b/a at step h/2
  std::vector<double> s_;      // scale function at step h
};

// rho_L = s(L) / (-s(-L)); the quenched odds of exiting (-L, L) to the left.
double rho_L_exact(const ScaleProfile& profile, double L);

struct IdentityReport {
  double lhs_mean = 0.0;       // mean over environments of log rho_L
  double lhs_stderr = 0.0;
  double rhs_mean = 0.0;       // paired estimator of -2L E[b/a]
  double diff_mean = 0.0;      // mean of per-seed differences
  double diff_stderr = 0.0;
  double quad_bound = 0.0;
  int n_env = 0;
  bool passed = false;
};

// Checks E[log rho_L] = -2L E[b(0)/a(0)] with a seed-paired two-estimator
// design (the difference has mean zero exactly, per environment law).
IdentityReport check_log_odds_identity(const EnvSpec& spec1d, double L, int n_env,
                                  double quad_step = 1e-3,
                                  std::uint64_t base_seed = 1);

enum class DichotomyVerdict { kTransientPositive, kTransientNegative,
                              kInconclusive };

struct DichotomyReport {
  double min_moment = 0.0;     // (i)  min over a_grid of E[rho_L^a]
  double best_a = 0.0;
  double mean_log_rho = 0.0;   // (ii) E[log rho_L]
  double mean_log_rho_stderr = 0.0;
  double transient_fraction = 0.0;  // (v) annealed long-horizon displacement
  long long n_transient_paths = 0;
  DichotomyVerdict verdict = DichotomyVerdict::kInconclusive;
  bool signs_agree = false;
};

DichotomyReport solomon_dichotomy(const EnvSpec& spec1d, double L,
                                  const std::vector<double>& a_grid, int n_env,
                                  double horizon, std::uint64_t base_seed = 1,
                                  long long n_mc_paths = 200,
                                  const SimPolicy& policy = {});

struct EtaDeltaReport {
  std::vector<double> eta;        // per window site
  std::vector<double> delta;
  std::vector<double> log_rho_hat;
  double slope = 0.0;             // endpoint slope of log delta_n over center
  double slope_stderr = 0.0;
  double expectation = 0.0;       // E[-log rho_hat(0)] + E[log eta_0]
  double expectation_stderr = 0.0;
  double eta_center = 0.0;
  double eta_center_alt_seed = 0.0;  // absorbing-truncation seeding
  int n_window = 0;
};

EtaDeltaReport eta_delta_recursion(const EnvSpec& spec1d, double L0,
                                   int n_window, int n_env,
                                   std::uint64_t base_seed = 1,
                                   double quad_step = 1e-3);

// Nearest-neighbor chain with per-site odds rho(i): sites 0..m+1, absorbing
// at 0 and m+1, rho valid on interior sites 1..m (rho.size() = m).
struct ChainSpec {
  std::vector<double> rho;
};

// Left-exit probability (hit site 0 before m+1) by the Dirichlet product
// formula.
double chain_exit_probability(const ChainSpec& chain, int start);

}  // namespace rde
