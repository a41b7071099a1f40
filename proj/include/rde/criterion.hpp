#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rde/sde.hpp"

namespace rde {

// ---- Renormalization scales (v = 8, alpha = 240 fixed) ----
// N_k = (alpha/u0) v^k, L_{k+1} = N_k L_k, Ltilde_k = (L_k/L0)^3 Ltilde0,
// a_k = a0 2^{-k}, u_k = u0 v^{-k}.  Closed forms, no recursion at run time.
struct HierarchyLevel {
  int k = 0;
  double N = 0.0;
  double L = 0.0;
  double L_tilde = 0.0;
  double a = 0.0;
  double u = 0.0;
};

struct BoxHierarchy {
  double L0 = 0.0;
  double L_tilde0 = 0.0;
  double u0 = 1.0;
  double a0 = 1.0;
  std::vector<HierarchyLevel> levels;  // indices 0..k_max
};

BoxHierarchy build_hierarchy(double L0, double L_tilde0, double u0, double a0,
                             int k_max, double R = 2.5);

// Asymmetric exit box x.e1 in (-(L-R-2), L+2) with lateral halfwidth L_tilde.
// L_tilde <= 0 drops the side faces (slab variant; the exact rho -> 1/rho
// mirror duality needs it because lateral exit mass always counts into q).
// mirrored swaps the depths and flips the face labels, i.e. the image of the
// box under x -> -x.
Domain criterion_box(int dimension, double L, double L_tilde, double R,
                     bool mirrored = false);

struct RhoMomentEstimate {
  MCEstimate moment;       // E[rho_hat^a] over environments, add-1/2 smoothing
  MCEstimate moment_add1;  // add-1 smoothing variant
  double smoothing_band = 0.0;  // |moment - moment_add1|
  int n_env = 0;
  long long n_path = 0;
  int n_env_flagged = 0;  // environments above the timeout tolerance
  int n_env_capped = 0;   // rho_hat hit the ellipticity cap kappa^{-(L+3)}
  int n_env_degenerate = 0;  // k_p = 0 or k_q = 0 at the path budget
};

RhoMomentEstimate estimate_rho_moment(const EnvSpec& spec, const Domain& box,
                                      double box_scale_L, double a, int n_env,
                                      long long n_path, double kappa,
                                      std::uint64_t base_seed = 1,
                                      const SimPolicy& policy = {});

struct CriterionCandidate {
  double a = 0.0;
  double L_tilde = 0.0;
  double moment = 0.0;
  double moment_stderr = 0.0;
  double core = 0.0;  // constant-free: Ltilde^{d-1} L^{3(d-1)+1} moment
  double lhs = 0.0;   // c7 (log 1/kappa)^{3(d-1)} core
};

struct CriterionReport {
  int d = 0;
  double L = 0.0;
  double kappa = 0.0;
  double c7 = 1.0;
  std::vector<CriterionCandidate> candidates;
  CriterionCandidate best;  // smallest lhs over the (a, L_tilde) grid
  bool decision = false;    // best.lhs < 1 at the supplied c7
  int n_env = 0;
  long long n_path = 0;

  // Rescaled decision threshold; strictly increasing in the constant.
  double lhs_at(double c7_other) const;
};

// Searches L_tilde over {supplied, R+2, L, L^{3/2} capped below L^3} and a
// over a_grid; one MC pass per L_tilde (the a-powers reuse the same rho
// samples).  Rejects L_tilde outside [R+2, L^3).
CriterionReport evaluate_effective_criterion(
    const EnvSpec& spec, double L, double L_tilde,
    const std::vector<double>& a_grid, double kappa, double c7, int n_env,
    long long n_path, std::uint64_t base_seed = 1,
    const SimPolicy& policy = {});

struct LevelCheck {
  int k = 0;
  double phi = 0.0;  // c3 Ltilde_{k+1}^{d-1} L_k E[rho_k^{a_k}]
  double phi_stderr = 0.0;
  double target = 0.0;  // kappa^{u_k L_k}
  double moment = 0.0;
  double moment_stderr = 0.0;
  bool feasible = false;  // the MC budget resolves phi above noise
  bool holds = false;     // phi < target; meaningful only when feasible
  std::string note;
};

struct RecursionBudgets {
  int n_env = 30;
  long long n_path = 200;
  double c3 = 1.0;
  double kappa = 0.5;
};

std::vector<LevelCheck> check_recursion(const EnvSpec& spec,
                                        const BoxHierarchy& h, int k_max,
                                        const RecursionBudgets& budgets,
                                        std::uint64_t base_seed = 1,
                                        const SimPolicy& policy = {});

struct DecayRow {
  double L = 0.0;
  double p_hat = 0.0;  // annealed P[hit -b_back L before +L]
  double p_stderr = 0.0;
  long long n = 0;
  bool zero_count = false;   // no back exits at the budget
  double upper_bound = 0.0;  // rule-of-three bound when zero_count
};

struct DecayFit {
  std::vector<DecayRow> rows;
  double c = 0.0;      // log p_hat = -c L^gamma (weighted log-log fit)
  double gamma = 0.0;
  double c_stderr = 0.0;
  double gamma_stderr = 0.0;
  double rate_linear = 0.0;  // through-origin slope of -log p_hat vs L
  bool rejected = false;
  std::string diagnostic;
};

DecayFit slab_exit_decay_scan(const EnvSpec& spec, double b_back,
                              const std::vector<double>& L_list, int n_env,
                              long long n_path, std::uint64_t base_seed = 1,
                              const SimPolicy& policy = {});

struct KappaEstimate {
  double kappa_hat = 0.5;  // min(worst-case c_hat, 1/2)
  double c_hat_worst = 0.0;
  double c_hat_mean = 0.0;
  double c_hat_stderr = 0.0;
  MCEstimate p_traverse;  // dt-extrapolated tube traversal probability
  int n_env = 0;
  long long n_path = 0;
  // The infimum over environments is approached from above by any finite
  // sample, so kappa_hat is anti-conservative; criterion decisions require an
  // explicit kappa override.
  bool anti_conservative = true;
};

KappaEstimate estimate_kappa(const EnvSpec& spec, double L_probe, int n_env,
                             long long n_path, std::uint64_t base_seed = 1,
                             const SimPolicy& policy = {});

// Per-environment smoothed rho samples (mirror-duality / KS diagnostics).
std::vector<double> rho_samples(const EnvSpec& spec, const Domain& box,
                                double box_scale_L, int n_env, long long n_path,
                                double kappa, std::uint64_t base_seed = 1,
                                const SimPolicy& policy = {});

struct KsResult {
  double statistic = 0.0;
  double p_value = 0.0;
};

// Two-sample Kolmogorov-Smirnov with the asymptotic tail probability.
KsResult ks_two_sample(std::vector<double> a, std::vector<double> b);

}  // namespace rde
