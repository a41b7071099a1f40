#pragma once

#include <cstdint>
#include <functional>

#include "rde/env.hpp"

namespace rde {

// Brownian motion killed on leaving the slab {|x.e1| < L}: method-of-images
// heat kernel, Green's function/gradient, Green-operator quadrature and
// deterministic envelope sums.  All functions are pure.
struct SlabKernel {
  int d = 4;
  double L = 1.0;
  double tol = 1e-10;  // absolute truncation tolerance of the image series

  void validate() const;
};

// gamma_d = Gamma(d/2 - 1) / (2 pi^{d/2}); g_free(z) = gamma_d |z|^{2-d}.
double gamma_d(int d);

// Transition density of the killed motion (alternating image sum).
double heat_kernel(const SlabKernel& kern, double t, const Vec& x,
                   const Vec& y);

struct SeriesValue {
  double value = 0.0;
  int k_used = 0;
  double tail_bound = 0.0;
};

SeriesValue green_function_detail(const SlabKernel& kern, const Vec& x,
                                  const Vec& y);
double green_function(const SlabKernel& kern, const Vec& x, const Vec& y);

// Term-wise differentiated series (gradient in x).
Vec green_gradient(const SlabKernel& kern, const Vec& x, const Vec& y);

// Time-quadrature route: integral over t of heat_kernel; cross-validates the
// series value.
double green_time_quadrature(const SlabKernel& kern, const Vec& x,
                             const Vec& y);

struct BoundedFunction {
  std::function<double(const Vec&)> f;
  double bound = 1.0;           // finite sup-norm (refused otherwise)
  double support_radius = 0.0;  // transverse half-extent; 0 = decay box 10L
  bool longitudinal_only = false;  // f depends on y.e1 only (exact reduction)
};

struct QuadratureResult {
  double value = 0.0;
  double error = 0.0;  // reported estimate, not a hard bound
  long long n_points = 0;
};

// G_S f(x) = integral over the slab of g(x, y) f(y) dy.  The |x-y|^{2-d}
// singularity is replaced by a C^2 polynomial cap inside a small ball and the
// removed mass is restored analytically (monopole + Laplacian correction).
QuadratureResult green_apply(const SlabKernel& kern, const BoundedFunction& f,
                             const Vec& x, int panels = 4);

// Deterministic envelope sums over the R-cube lattice covering the slab.
struct GammaSums {
  double sum_gamma_sq = 0.0;
  double sum_gamma_tilde_sq = 0.0;
  double l2_gamma = 0.0;       // L^2 * sum_gamma_sq
  double l2_gamma_tilde = 0.0; // L^2 * sum_gamma_tilde_sq
  long long n_terms = 0;
  double tail_fraction = 0.0;  // continuum-tail share of the totals
};

GammaSums gamma_sums(const SlabKernel& kern, const Vec& probe, double lattice_R,
                     double c17 = 2.0);

// |g(x,y)| <= c16 |x-y|^{2-d} exp(-c17 |x-y|_perp / L); constants fitted on a
// calibration grid, then validated on held-out points.
struct GreenEnvelope {
  double c16 = 0.0;
  double c17 = 0.0;
};
GreenEnvelope fit_green_envelope(const SlabKernel& kern, int n_calib,
                                 std::uint64_t seed);
bool check_green_envelope(const SlabKernel& kern, const GreenEnvelope& env,
                          int n_test, std::uint64_t seed);

// |grad g| <= (c18 |x-y|^{1-d} + c19 L^{1-d}) exp(-c17 |x-y|_perp / L).
struct GradientEnvelope {
  double c18 = 0.0;
  double c19 = 0.0;
  double c17 = 0.0;
};
GradientEnvelope fit_gradient_envelope(const SlabKernel& kern, int n_calib,
                                       std::uint64_t seed);
bool check_gradient_envelope(const SlabKernel& kern,
                             const GradientEnvelope& env, int n_test,
                             std::uint64_t seed);

}  // namespace rde
