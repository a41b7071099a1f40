#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "rde/domain.hpp"
#include "rde/env.hpp"
#include "rde/greenslab.hpp"
#include "rde/rng.hpp"
#include "rde/sde.hpp"

using namespace rde;

namespace {

Vec point(int d, std::initializer_list<double> coords) {
  Vec x = Vec::Zero(d);
  int i = 0;
  for (double c : coords) x[i++] = c;
  return x;
}

Vec random_interior(const SlabKernel& kern, CounterRng& rng, double margin) {
  Vec x(kern.d);
  x[0] = (kern.L - margin) * rng.symmetric();
  for (int j = 1; j < kern.d; ++j) x[j] = 2.0 * kern.L * rng.symmetric();
  return x;
}

// Free-space time integral of the Gaussian kernel; must equal
// gamma_d r^{2-d}.
double free_space_time_integral(int d, double r) {
  const double pi = 3.14159265358979323846;
  const double u_lo = std::log(r * r / 500.0);
  const double u_hi = std::log(r * r * 2e4);
  const int n = 6000;
  const double h = (u_hi - u_lo) / n;
  auto f = [&](double u) {
    const double t = std::exp(u);
    return std::pow(2.0 * pi * t, -0.5 * d) *
           std::exp(-r * r / (2.0 * t)) * t;
  };
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    const double u0 = u_lo + h * i;
    acc += (h / 6.0) * (f(u0) + 4.0 * f(u0 + 0.5 * h) + f(u0 + h));
  }
  // Algebraic large-t tail: integral of (2 pi t)^{-d/2} beyond t_hi.
  const double t_hi = std::exp(u_hi);
  acc += std::pow(2.0 * pi, -0.5 * d) * std::pow(t_hi, 1.0 - 0.5 * d) /
         (0.5 * d - 1.0);
  return acc;
}

}  // namespace

TEST_CASE("normalization constant matches the time-integral route") {
  for (int d : {4, 5}) {
    for (double r : {0.7, 1.3}) {
      const double direct = gamma_d(d) * std::pow(r, 2.0 - d);
      CHECK(free_space_time_integral(d, r) ==
            doctest::Approx(direct).epsilon(1e-8));
    }
  }
}

TEST_CASE("heat kernel basics") {
  SlabKernel kern{4, 1.0, 1e-10};
  const Vec zero = Vec::Zero(4);
  CHECK_THROWS(heat_kernel(kern, 0.0, zero, zero));
  CHECK_THROWS(heat_kernel(kern, -1.0, zero, zero));

  // k = 0 dominance at tiny t.
  const double t = 1e-4;
  const double pi = 3.14159265358979323846;
  CHECK(heat_kernel(kern, t, zero, zero) ==
        doctest::Approx(std::pow(2.0 * pi * t, -2.0)).epsilon(1e-6));

  // Symmetry is exact.
  CounterRng rng(5, 0);
  for (int i = 0; i < 50; ++i) {
    const Vec x = random_interior(kern, rng, 0.0);
    const Vec y = random_interior(kern, rng, 0.0);
    for (double tt : {0.01, 0.3, 2.0})
      CHECK(heat_kernel(kern, tt, x, y) == heat_kernel(kern, tt, y, x));
  }

  // Boundary vanishing at three times.
  for (int i = 0; i < 200; ++i) {
    Vec y = random_interior(kern, rng, 0.0);
    y[0] = (i % 2 == 0) ? kern.L : -kern.L;
    const Vec x = random_interior(kern, rng, 0.1);
    for (double tt : {0.05, 0.5, 3.0})
      CHECK(std::abs(heat_kernel(kern, tt, x, y)) <= kern.tol);
  }
}

TEST_CASE("green function boundary, symmetry, positivity") {
  SlabKernel kern{4, 1.0, 1e-10};
  CounterRng rng(9, 0);
  double worst_boundary = 0.0;
  for (int i = 0; i < 1000; ++i) {
    Vec y = random_interior(kern, rng, 0.0);
    y[0] = (i % 2 == 0) ? kern.L : -kern.L;
    Vec x = random_interior(kern, rng, 0.1);
    worst_boundary =
        std::max(worst_boundary, std::abs(green_function(kern, x, y)));
  }
  CHECK(worst_boundary <= kern.tol);

  for (int i = 0; i < 100; ++i) {
    const Vec x = random_interior(kern, rng, 0.05);
    Vec y = random_interior(kern, rng, 0.05);
    if ((x - y).norm() < 1e-3) y[0] += 0.1;
    const double g = green_function(kern, x, y);
    CHECK(g > 0.0);
    CHECK(std::abs(g - green_function(kern, y, x)) <= 1e-14);
  }
}

TEST_CASE("near-singularity leading term") {
  SlabKernel kern{4, 1.0, 1e-10};
  const Vec x = Vec::Zero(4);
  Vec y = Vec::Zero(4);
  y[2] = 1e-3 * kern.L;
  const double expected = gamma_d(4) * std::pow(1e-3, -2.0);
  CHECK(green_function(kern, x, y) ==
        doctest::Approx(expected).epsilon(1e-4));
  CHECK_THROWS(green_function(kern, x, x));
}

TEST_CASE("time quadrature agrees with the image series") {
  SlabKernel kern{4, 1.0, 1e-10};
  CounterRng rng(3, 0);
  for (int i = 0; i < 5; ++i) {
    const Vec x = random_interior(kern, rng, 0.2);
    Vec y = random_interior(kern, rng, 0.2);
    if ((x - y).norm() < 0.2) y[1] += 0.5;
    const double via_series = green_function(kern, x, y);
    const double via_time = green_time_quadrature(kern, x, y);
    CHECK(std::abs(via_series - via_time) <= 1e-6);
  }
}

TEST_CASE("green function is harmonic away from the pole") {
  SlabKernel kern{4, 1.0, 1e-12};
  const Vec y = point(4, {0.2, 0.3, 0.0, -0.4});
  CounterRng rng(8, 0);
  const double h = 2e-3;
  for (int i = 0; i < 20; ++i) {
    Vec x = random_interior(kern, rng, 0.15);
    if ((x - y).norm() < 0.15) continue;
    double lap = 0.0, scale = 0.0;
    const double g0 = green_function(kern, x, y);
    for (int j = 0; j < 4; ++j) {
      Vec xp = x, xm = x;
      xp[j] += h;
      xm[j] -= h;
      const double second =
          (green_function(kern, xp, y) - 2.0 * g0 +
           green_function(kern, xm, y)) /
          (h * h);
      lap += second;
      scale += std::abs(second);
    }
    CHECK(std::abs(lap) <= 1e-3 * std::max(scale, 1.0));
  }
}

TEST_CASE("gradient matches finite differences and symmetry") {
  SlabKernel kern{4, 1.0, 1e-12};
  CounterRng rng(12, 0);
  const double h = 1e-5 * kern.L;
  for (int i = 0; i < 100; ++i) {
    const Vec x = random_interior(kern, rng, 0.1);
    Vec y = random_interior(kern, rng, 0.1);
    if ((x - y).norm() < 0.1) y[3] += 0.3;
    const Vec grad = green_gradient(kern, x, y);
    for (int j = 0; j < 4; ++j) {
      Vec xp = x, xm = x;
      xp[j] += h;
      xm[j] -= h;
      const double fd =
          (green_function(kern, xp, y) - green_function(kern, xm, y)) /
          (2.0 * h);
      CHECK(grad[j] == doctest::Approx(fd).epsilon(1e-4));
    }
  }
  // Perpendicular separation at the mid-hyperplane: e1-component vanishes.
  const Vec x = point(4, {0.0, 0.0, 0.0, 0.0});
  const Vec y = point(4, {0.0, 0.7, -0.2, 0.4});
  CHECK(std::abs(green_gradient(kern, x, y)[0]) < 1e-12);
}

TEST_CASE("fitted envelopes hold on held-out grids") {
  SlabKernel kern{4, 1.0, 1e-10};
  const GreenEnvelope ge = fit_green_envelope(kern, 150, 101);
  CHECK(ge.c16 > 0.0);
  CHECK(ge.c17 > 0.0);
  CHECK(check_green_envelope(kern, ge, 150, 777));

  const GradientEnvelope gr = fit_gradient_envelope(kern, 150, 102);
  CHECK(gr.c18 > 0.0);
  CHECK(check_gradient_envelope(kern, gr, 150, 778));
}

TEST_CASE("green_apply: f = 1 gives L^2 - x1^2 (both code paths)") {
  BoundedFunction one;
  one.f = [](const Vec&) { return 1.0; };
  one.bound = 1.0;
  one.longitudinal_only = true;
  for (int d : {3, 4}) {
    SlabKernel kern{d, 1.0, 1e-8};
    for (double x1 : {0.0, 0.4, -0.7}) {
      const Vec x = point(d, {x1});
      const QuadratureResult q = green_apply(kern, one, x);
      CHECK(q.value == doctest::Approx(1.0 - x1 * x1).epsilon(1e-6));
    }
  }
  // Full tensor quadrature route at d = 3.
  SlabKernel kern{3, 1.0, 1e-6};
  BoundedFunction one_full = one;
  one_full.longitudinal_only = false;
  const QuadratureResult q = green_apply(kern, one_full, point(3, {0.3}));
  CHECK(q.value == doctest::Approx(1.0 - 0.09).epsilon(1e-3));
  CHECK(q.error < 5e-3);
}

TEST_CASE("green_apply: antisymmetric f vanishes on the mid-plane") {
  SlabKernel kern{3, 1.0, 1e-6};
  BoundedFunction odd;
  odd.f = [](const Vec& y) { return std::sin(2.0 * y[0]); };
  odd.bound = 1.0;
  odd.longitudinal_only = true;
  const QuadratureResult q = green_apply(kern, odd, point(3, {0.0}));
  CHECK(std::abs(q.value) <= q.error + 1e-9);
}

TEST_CASE("green_apply refuses unbounded input") {
  SlabKernel kern{3, 1.0, 1e-6};
  BoundedFunction bad;
  bad.f = [](const Vec&) { return 1.0; };
  bad.bound = std::numeric_limits<double>::infinity();
  CHECK_THROWS(green_apply(kern, bad, point(3, {0.0})));
}

TEST_CASE("half Laplacian of the Green operator inverts to -f") {
  SlabKernel kern{3, 1.0, 1e-6};
  BoundedFunction bump;
  bump.f = [](const Vec& y) { return std::exp(-y.squaredNorm() / 0.5); };
  bump.bound = 1.0;
  const double h = 0.08;
  const Vec x0 = point(3, {0.1, 0.05, -0.1});
  const double g0 = green_apply(kern, bump, x0).value;
  double lap = 0.0;
  for (int j = 0; j < 3; ++j) {
    Vec xp = x0, xm = x0;
    xp[j] += h;
    xm[j] -= h;
    lap += (green_apply(kern, bump, xp).value - 2.0 * g0 +
            green_apply(kern, bump, xm).value) /
           (h * h);
  }
  CHECK(-0.5 * lap == doctest::Approx(bump.f(x0)).epsilon(1e-2));
}

TEST_CASE("green_apply agrees with the pathwise Monte Carlo estimator") {
  SlabKernel kern{3, 1.0, 1e-6};
  EnvSpec sp;
  sp.dimension = 3;
  const Environment env = sample_environment(sp, 44);
  const Domain dom = Domain::slab(3, 1.0);
  SimPolicy pol;
  for (int c = 0; c < 2; ++c) {
    BoundedFunction f;
    const double width = c == 0 ? 0.5 : 1.5;
    f.f = [width](const Vec& y) {
      return std::exp(-y.squaredNorm() / width);
    };
    f.bound = 1.0;
    const Vec x0 = Vec::Zero(3);
    const QuadratureResult det = green_apply(kern, f, x0);
    const MCEstimate mc =
        path_integral_until_exit(env, x0, dom, f.f, 3000, pol);
    CHECK(std::abs(det.value - mc.mean) <=
          3.0 * mc.stderr_ + det.error + 0.01);
  }
}

TEST_CASE("gamma sums stay bounded across L (d = 5)") {
  std::vector<double> vals;
  for (double L : {8.0, 16.0, 32.0}) {
    SlabKernel kern{5, L, 1e-10};
    const GammaSums gs = gamma_sums(kern, Vec::Zero(5), 1.0);
    vals.push_back(gs.l2_gamma);
    CHECK(gs.n_terms > 0);
  }
  CHECK(vals[2] / vals[0] > 0.5);
  CHECK(vals[2] / vals[0] < 2.0);
  CHECK(vals[1] / vals[0] > 0.5);
  CHECK(vals[1] / vals[0] < 2.0);
}

TEST_CASE("gamma tilde sums follow the log factor (d = 4)") {
  std::vector<double> vals;
  for (double L : {8.0, 16.0, 32.0}) {
    SlabKernel kern{4, L, 1e-10};
    const GammaSums gs = gamma_sums(kern, Vec::Zero(4), 1.0);
    vals.push_back(gs.l2_gamma_tilde / std::log(L));
  }
  CHECK(vals[2] / vals[0] > 0.5);
  CHECK(vals[2] / vals[0] < 2.0);
}

TEST_CASE("orbit-reduced sums equal the direct lattice sum") {
  SlabKernel kern{4, 8.0, 1e-10};
  const double R = 1.0, c17 = 2.0;
  const GammaSums fast = gamma_sums(kern, Vec::Zero(4), R, c17);

  // Naive full enumeration over the transverse cube.
  const int d = 4;
  const double L = kern.L;
  const long long m = static_cast<long long>(std::ceil(13.82 * L / (c17 * R)));
  double sg = 0.0, st = 0.0;
  for (long long j = -8; j <= 8; ++j) {
    const double y1 = R * static_cast<double>(j);
    for (long long a = -m; a <= m; ++a)
      for (long long b = -m; b <= m; ++b)
        for (long long c = -m; c <= m; ++c) {
          const double rp2 = R * R * static_cast<double>(a * a + b * b + c * c);
          const double z = std::sqrt(y1 * y1 + rp2);
          const double decay = std::exp(-c17 * std::sqrt(rp2) / L);
          const double gam =
              (std::min(std::pow(std::max(z, 1e-300), 1.0 - d), 1.0) +
               std::pow(L, 1.0 - d)) *
              decay / L;
          const double til =
              std::min(std::pow(std::max(z, 1e-300), 2.0 - d), 1.0) *
              decay / L;
          sg += gam * gam;
          st += til * til;
        }
  }
  CHECK(fast.sum_gamma_sq == doctest::Approx(sg).epsilon(1e-6));
  CHECK(fast.sum_gamma_tilde_sq == doctest::Approx(st).epsilon(1e-6));
}

TEST_CASE("distant cube contributes nothing") {
  SlabKernel kern{5, 8.0, 1e-10};
  const int d = 5;
  const double L = kern.L, c17 = 2.0;
  const double rperp = 60.0 * L;
  const double gam = (std::pow(rperp, 1.0 - d) + std::pow(L, 1.0 - d)) *
                     std::exp(-c17 * rperp / L) / L;
  CHECK(gam * gam < 1e-12);
}
