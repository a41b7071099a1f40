#include "rde/greenslab.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "rde/rng.hpp"

namespace rde {
namespace {

constexpr double kPi = 3.14159265358979323846;

double sq(double v) { return v * v; }

// 8-point Gauss-Legendre on [-1, 1].
const double kGx[8] = {-0.9602898564975363, -0.7966664774136267,
                       -0.5255324099163290, -0.1834346424956498,
                       0.1834346424956498,  0.5255324099163290,
                       0.7966664774136267,  0.9602898564975363};
const double kGw[8] = {0.1012285362903763, 0.2223810344533745,
                       0.3137066458778873, 0.3626837833783620,
                       0.3626837833783620, 0.3137066458778873,
                       0.2223810344533745, 0.1012285362903763};

// Integral over u in [a, infinity) of a smooth algebraically-decaying group
// function, via u = a/w on (0, 1] with composite Gauss panels.
template <typename Fn>
double tail_integral(double a, const Fn& h) {
  double acc = 0.0;
  const double edges[5] = {0.0, 0.1, 0.3, 0.6, 1.0};
  for (int p = 0; p < 4; ++p) {
    const double mid = 0.5 * (edges[p] + edges[p + 1]);
    const double half = 0.5 * (edges[p + 1] - edges[p]);
    for (int i = 0; i < 8; ++i) {
      const double w = mid + half * kGx[i];
      acc += half * kGw[i] * h(a / w) * a / (w * w);
    }
  }
  return acc;
}

double perp_sq(const Vec& x, const Vec& y) {
  double s = 0.0;
  for (int j = 1; j < x.size(); ++j) s += sq(x[j] - y[j]);
  return s;
}

// C^2 cap of s |-> s^{2-d} on [0, 1]: q(s) = a + b s^2 + c s^4 matched in
// value and two derivatives at s = 1.
struct CapPoly {
  double a, b, c;
  explicit CapPoly(int d)
      : a(1.0 + (d - 2.0) * (d + 4.0) / 8.0),
        b(-(d - 2.0) * (d + 2.0) / 4.0),
        c(d * (d - 2.0) / 8.0) {}
  double operator()(double s) const {
    const double s2 = s * s;
    return a + b * s2 + c * s2 * s2;
  }
};

// r^{2-d} from r^2, with cheap forms for the dimensions in actual use.
double radial_pow(int d, double r2) {
  switch (d) {
    case 3:
      return 1.0 / std::sqrt(r2);
    case 4:
      return 1.0 / r2;
    case 5:
      return 1.0 / (r2 * std::sqrt(r2));
    default:
      return std::pow(r2, 0.5 * (2.0 - d));
  }
}

// One free-space Green term gamma_d r^{2-d}, optionally capped below delta.
double free_term(int d, double gd, double r2, double cap_delta,
                 const CapPoly* cap) {
  if (cap != nullptr && r2 < cap_delta * cap_delta)
    return gd * radial_pow(d, cap_delta * cap_delta) *
           (*cap)(std::sqrt(r2) / cap_delta);
  if (r2 < 1e-24)
    throw std::invalid_argument("green_function: singular point x = y");
  return gd * radial_pow(d, r2);
}

// Shared series walker.  cap_delta > 0 caps the k = 0 direct term (used by
// the quadrature); otherwise the series is the exact truncated Green value.
SeriesValue green_series(const SlabKernel& kern, const Vec& x, const Vec& y,
                         double cap_delta) {
  const int d = kern.d;
  const double L = kern.L;
  const double gd = gamma_d(d);
  const CapPoly cap(d);
  const CapPoly* capp = cap_delta > 0.0 ? &cap : nullptr;
  const double p2 = perp_sq(x, y);
  const double dx1 = x[0] - y[0];
  const double sx1 = x[0] + y[0];

  auto pos = [&](double k, bool allow_cap) {
    const double r2 = sq(dx1 - 4.0 * L * k) + p2;
    return free_term(d, gd, r2, cap_delta, allow_cap ? capp : nullptr);
  };
  auto neg = [&](double k) {
    const double r2 = sq(sx1 - (4.0 * k + 2.0) * L) + p2;
    return free_term(d, gd, r2, 0.0, nullptr);
  };
  auto group_at = [&](double u) {
    return pos(u, false) + pos(-u, false) - neg(u) - neg(-u - 1.0);
  };

  SeriesValue out;
  out.value = pos(0.0, true) - neg(0.0) - neg(-1.0);
  int calm = 0;
  for (long long j = 1; j <= 2000000; ++j) {
    const double u = static_cast<double>(j);
    const double group = group_at(u);
    out.value += group;
    out.k_used = static_cast<int>(j);
    // Grouped terms decay like a power of j (j^{-d} in the interior, j^{1-d}
    // on the boundary, j^{-2} at far transverse offsets for d = 3), so the
    // remaining sum is replaced by its Euler-Maclaurin integral once the
    // midpoint-rule error |h'(j)|/24 ~ |group|/(4 j) is below tolerance.
    out.tail_bound = std::abs(group) / (4.0 * u);
    if (j >= 8 && std::abs(group) <= kern.tol * u) {
      if (++calm >= 2) {
        out.value += tail_integral(u + 0.5, group_at);
        break;
      }
    } else {
      calm = 0;
    }
  }
  return out;
}

void check_in_closed_slab(const SlabKernel& kern, const Vec& x,
                          const char* who) {
  if (x.size() != kern.d)
    throw std::invalid_argument(std::string(who) + ": dimension mismatch");
  if (std::abs(x[0]) > kern.L + 1e-12)
    throw std::invalid_argument(std::string(who) + ": point outside slab");
}

}  // namespace

void SlabKernel::validate() const {
  if (d < 1 || d > 8) throw std::invalid_argument("SlabKernel: d in [1, 8]");
  if (L <= 0.0) throw std::invalid_argument("SlabKernel: L must be > 0");
  if (tol <= 0.0) throw std::invalid_argument("SlabKernel: tol must be > 0");
}

double gamma_d(int d) {
  if (d < 3) throw std::invalid_argument("gamma_d: needs d >= 3");
  return std::tgamma(d / 2.0 - 1.0) / (2.0 * std::pow(kPi, d / 2.0));
}

double heat_kernel(const SlabKernel& kern, double t, const Vec& x,
                   const Vec& y) {
  kern.validate();
  if (t <= 0.0) throw std::invalid_argument("heat_kernel: t must be > 0");
  check_in_closed_slab(kern, x, "heat_kernel");
  check_in_closed_slab(kern, y, "heat_kernel");
  const double L = kern.L;
  const double inv2t = 1.0 / (2.0 * t);
  const double dx1 = x[0] - y[0];
  const double sx1 = x[0] + y[0];
  auto pos = [&](long long k) {
    return std::exp(-sq(dx1 - 4.0 * L * static_cast<double>(k)) * inv2t);
  };
  auto neg = [&](long long k) {
    return std::exp(
        -sq(sx1 - (4.0 * static_cast<double>(k) + 2.0) * L) * inv2t);
  };
  double sum = pos(0) - neg(0) - neg(-1);
  for (long long j = 1; j <= 1000000; ++j) {
    const double a = pos(j), b = pos(-j);
    const double c = neg(j), e = neg(-j - 1);
    sum += a + b - c - e;
    // Stop once every individual Gaussian image is negligible (groups can
    // cancel internally while boundary cancellation runs across groups).
    if (j >= 2 && std::max(std::max(a, b), std::max(c, e)) < kern.tol * 1e-3)
      break;
  }
  const double norm = std::pow(2.0 * kPi * t, -0.5 * kern.d);
  return norm * std::exp(-perp_sq(x, y) * inv2t) * sum;
}

SeriesValue green_function_detail(const SlabKernel& kern, const Vec& x,
                                  const Vec& y) {
  kern.validate();
  if (kern.d < 3)
    throw std::invalid_argument("green_function: needs d >= 3");
  check_in_closed_slab(kern, x, "green_function");
  check_in_closed_slab(kern, y, "green_function");
  return green_series(kern, x, y, 0.0);
}

double green_function(const SlabKernel& kern, const Vec& x, const Vec& y) {
  return green_function_detail(kern, x, y).value;
}

Vec green_gradient(const SlabKernel& kern, const Vec& x, const Vec& y) {
  kern.validate();
  if (kern.d < 3)
    throw std::invalid_argument("green_gradient: needs d >= 3");
  check_in_closed_slab(kern, x, "green_gradient");
  check_in_closed_slab(kern, y, "green_gradient");
  const int d = kern.d;
  const double L = kern.L;
  const double gd = gamma_d(d);

  auto term = [&](double img1, Vec& acc, double sign) {
    Vec z = x - y;
    z[0] = x[0] - img1;
    const double r2 = z.squaredNorm();
    if (r2 < 1e-24)
      throw std::invalid_argument("green_gradient: singular point");
    acc += sign * gd * (2.0 - d) * (radial_pow(d, r2) / r2) * z;
  };
  auto pos1 = [&](double k) { return y[0] + 4.0 * L * k; };
  auto neg1 = [&](double k) { return (4.0 * k + 2.0) * L - y[0]; };
  auto group_at = [&](double u) {
    Vec g = Vec::Zero(d);
    term(pos1(u), g, 1.0);
    term(pos1(-u), g, 1.0);
    term(neg1(u), g, -1.0);
    term(neg1(-u - 1.0), g, -1.0);
    return g;
  };

  Vec acc = Vec::Zero(d);
  term(pos1(0.0), acc, 1.0);
  term(neg1(0.0), acc, -1.0);
  term(neg1(-1.0), acc, -1.0);
  int calm = 0;
  for (long long j = 1; j <= 2000000; ++j) {
    const double u = static_cast<double>(j);
    const Vec group = group_at(u);
    acc += group;
    // Same truncation as green_series: replace the slowly-decaying remainder
    // by its integral once the midpoint-rule error is below tolerance.
    if (j >= 8 && group.norm() <= kern.tol * u) {
      if (++calm >= 2) {
        for (int c = 0; c < d; ++c)
          acc[c] += tail_integral(u + 0.5,
                                  [&](double v) { return group_at(v)[c]; });
        break;
      }
    } else {
      calm = 0;
    }
  }
  return acc;
}

double green_time_quadrature(const SlabKernel& kern, const Vec& x,
                             const Vec& y) {
  kern.validate();
  const double r2 = (x - y).squaredNorm();
  if (r2 < 1e-24)
    throw std::invalid_argument("green_time_quadrature: x = y");
  const double lam1 = kPi * kPi / (8.0 * kern.L * kern.L);
  const double t_lo = r2 / 400.0;
  double t_hi = std::max(60.0 / lam1, 100.0 * r2);
  while (heat_kernel(kern, t_hi, x, y) / lam1 > 1e-13) t_hi *= 1.5;
  // Simpson in u = log t of p(e^u) e^u.
  const int n = 4000;
  const double u_lo = std::log(t_lo), u_hi = std::log(t_hi);
  const double h = (u_hi - u_lo) / n;
  auto f = [&](double u) {
    const double t = std::exp(u);
    return heat_kernel(kern, t, x, y) * t;
  };
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    const double u0 = u_lo + h * i;
    acc += (h / 6.0) * (f(u0) + 4.0 * f(u0 + 0.5 * h) + f(u0 + h));
  }
  return acc;
}

namespace {

struct Axis {
  std::vector<double> nodes;
  std::vector<double> weights;
};

Axis gauss_axis(const std::vector<double>& edges) {
  Axis ax;
  for (std::size_t p = 0; p + 1 < edges.size(); ++p) {
    const double mid = 0.5 * (edges[p] + edges[p + 1]);
    const double half = 0.5 * (edges[p + 1] - edges[p]);
    for (int i = 0; i < 8; ++i) {
      ax.nodes.push_back(mid + half * kGx[i]);
      ax.weights.push_back(half * kGw[i]);
    }
  }
  return ax;
}

std::vector<double> uniform_edges(double lo, double hi, int n) {
  std::vector<double> e(n + 1);
  for (int i = 0; i <= n; ++i)
    e[i] = lo + (hi - lo) * static_cast<double>(i) / n;
  return e;
}

std::vector<double> graded_edges(double L, bool coarse) {
  std::vector<double> pos =
      coarse ? std::vector<double>{0.0, 1.0, 4.0, 10.0}
             : std::vector<double>{0.0, 0.5, 1.0, 2.0, 4.0, 7.0, 10.0};
  std::vector<double> e;
  for (auto it = pos.rbegin(); it != pos.rend(); ++it) e.push_back(-*it * L);
  for (std::size_t i = 1; i < pos.size(); ++i) e.push_back(pos[i] * L);
  return e;
}

double tensor_pass(const SlabKernel& kern, const BoundedFunction& bf,
                   const Vec& x, double delta, const std::vector<Axis>& axes,
                   long long* n_points) {
  const int d = kern.d;
  std::vector<std::size_t> idx(d, 0);
  Vec y(d);
  double acc = 0.0;
  while (true) {
    double w = 1.0;
    for (int j = 0; j < d; ++j) {
      y[j] = axes[j].nodes[idx[j]];
      w *= axes[j].weights[idx[j]];
    }
    acc += w * green_series(kern, x, y, delta).value * bf.f(y);
    ++*n_points;
    int j = 0;
    for (; j < d; ++j) {
      if (++idx[j] < axes[j].nodes.size()) break;
      idx[j] = 0;
    }
    if (j == d) break;
  }
  return acc;
}

double longitudinal_reduction(const SlabKernel& kern, const BoundedFunction& bf,
                              const Vec& x, int n_panels, long long* n_points) {
  // Exact transverse integral: the image series collapses to the interval
  // Green function G1(a, b) = (L + min)(L - max)/L of (1/2) d^2/dx^2.
  const double L = kern.L;
  const double a = x[0];
  auto g1 = [&](double b) {
    return (L + std::min(a, b)) * (L - std::max(a, b)) / L;
  };
  Vec y = Vec::Zero(kern.d);
  auto f1 = [&](double b) {
    y[0] = b;
    return g1(b) * bf.f(y);
  };
  auto simpson = [&](double lo, double hi) {
    const int n = std::max(2, n_panels);
    const double h = (hi - lo) / n;
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
      const double u = lo + h * i;
      acc += (h / 6.0) * (f1(u) + 4.0 * f1(u + 0.5 * h) + f1(u + h));
      *n_points += 3;
    }
    return acc;
  };
  return simpson(-L, a) + simpson(a, L);
}

}  // namespace

QuadratureResult green_apply(const SlabKernel& kern, const BoundedFunction& bf,
                             const Vec& x, int panels) {
  kern.validate();
  if (kern.d < 3) throw std::invalid_argument("green_apply: needs d >= 3");
  if (!bf.f) throw std::invalid_argument("green_apply: missing function");
  if (!std::isfinite(bf.bound))
    throw std::invalid_argument("green_apply: refusing unbounded f");
  check_in_closed_slab(kern, x, "green_apply");

  QuadratureResult out;
  if (bf.longitudinal_only) {
    const int fine = 400 * std::max(1, panels / 4);
    const double v1 =
        longitudinal_reduction(kern, bf, x, fine, &out.n_points);
    const double v0 =
        longitudinal_reduction(kern, bf, x, fine / 2, &out.n_points);
    out.value = v1;
    out.error = std::abs(v1 - v0) + 1e-14;
    return out;
  }

  const int d = kern.d;
  const double L = kern.L;
  const double delta = 0.05 * std::min(L, L - std::abs(x[0]));
  if (delta <= 0.0)
    throw std::invalid_argument("green_apply: x on the slab boundary");

  auto build_axes = [&](int p0, bool coarse) {
    std::vector<Axis> axes(d);
    axes[0] = gauss_axis(uniform_edges(-L, L, std::max(2, p0)));
    for (int j = 1; j < d; ++j) {
      if (bf.support_radius > 0.0) {
        const int nt = std::max(2, coarse ? p0 / 2 + 1 : p0);
        axes[j] = gauss_axis(
            uniform_edges(-bf.support_radius, bf.support_radius, nt));
      } else {
        axes[j] = gauss_axis(graded_edges(L, coarse));
      }
    }
    return axes;
  };

  const int p0 = std::max(2, 3 * panels / 2);
  const double fine =
      tensor_pass(kern, bf, x, delta, build_axes(p0, false), &out.n_points);
  const double coarse = tensor_pass(kern, bf, x, delta,
                                    build_axes(std::max(2, p0 / 2), true),
                                    &out.n_points);

  // Restore the mass removed by the cap: monopole + Laplacian moments of
  // (g_free - cap) over the delta-ball, both analytic.
  const CapPoly cap(d);
  const double two_over = 2.0 / (d - 2.0);
  const double m0 =
      two_over * delta * delta *
      (0.5 - (cap.a / d + cap.b / (d + 2.0) + cap.c / (d + 4.0)));
  const double m2 =
      two_over * std::pow(delta, 4) *
      (0.25 -
       (cap.a / (d + 2.0) + cap.b / (d + 4.0) + cap.c / (d + 6.0)));
  const double hstep = 0.5 * delta;
  double lap = 0.0;
  const double fx = bf.f(x);
  for (int j = 0; j < d; ++j) {
    Vec xp = x, xm = x;
    xp[j] += hstep;
    xm[j] -= hstep;
    lap += (bf.f(xp) - 2.0 * fx + bf.f(xm)) / (hstep * hstep);
  }
  const double correction = fx * m0 + lap / (2.0 * d) * m2;

  out.value = fine + correction;
  out.error = std::abs(fine - coarse) + std::abs(m2) * std::abs(lap) + 1e-14;
  return out;
}

GammaSums gamma_sums(const SlabKernel& kern, const Vec& probe, double lattice_R,
                     double c17) {
  kern.validate();
  if (kern.d < 4) throw std::invalid_argument("gamma_sums: needs d >= 4");
  if (lattice_R <= 0.0 || c17 <= 0.0)
    throw std::invalid_argument("gamma_sums: R and c17 must be > 0");
  check_in_closed_slab(kern, probe, "gamma_sums");
  for (int j = 1; j < kern.d; ++j)
    if (std::abs(probe[j]) > 1e-12)
      throw std::invalid_argument(
          "gamma_sums: probe must sit on the slab axis (transverse "
          "homogeneity is exploited by the orbit sum)");

  const int d = kern.d;
  const int dt = d - 1;
  const double L = kern.L;
  const double R = lattice_R;
  const double x1 = probe[0];
  // exp(-2 c17 m R / L) < 1e-12 beyond m_max.
  const long long m_max = static_cast<long long>(
      std::ceil(13.82 * L / (c17 * R)));
  const long long m_cut = std::min<long long>(m_max, 48);

  std::vector<double> y1s;
  for (long long j = static_cast<long long>(std::ceil(-L / R));
       j <= static_cast<long long>(std::floor(L / R)); ++j)
    y1s.push_back(R * static_cast<double>(j));

  GammaSums out;
  auto add_point = [&](double rperp2, double weight) {
    const double rperp = std::sqrt(rperp2);
    const double decay = std::exp(-c17 * rperp / L);
    for (double y1 : y1s) {
      const double z = std::sqrt(sq(x1 - y1) + rperp2);
      const double gam =
          (std::min(std::pow(std::max(z, 1e-300), 1.0 - d), 1.0) +
           std::pow(L, 1.0 - d)) *
          decay / L;
      const double til =
          std::min(std::pow(std::max(z, 1e-300), 2.0 - d), 1.0) * decay / L;
      out.sum_gamma_sq += weight * gam * gam;
      out.sum_gamma_tilde_sq += weight * til * til;
      out.n_terms += static_cast<long long>(weight);
    }
  };

  // Orbit enumeration: sorted transverse tuples 0 <= t_1 <= ... <= t_dt,
  // weight = sign flips x distinct permutations.
  std::vector<long long> t(dt, 0);
  double fact = 1.0;
  for (int i = 2; i <= dt; ++i) fact *= i;
  auto weight_of = [&]() {
    int nonzero = 0;
    double denom = 1.0;
    int run = 1;
    for (int i = 0; i < dt; ++i) {
      if (t[i] != 0) ++nonzero;
      if (i > 0 && t[i] == t[i - 1]) {
        ++run;
        denom *= run;
      } else {
        run = 1;
      }
    }
    return std::ldexp(1.0, nonzero) * fact / denom;
  };
  while (true) {
    double r2 = 0.0;
    for (int i = 0; i < dt; ++i) r2 += sq(R * static_cast<double>(t[i]));
    add_point(r2, weight_of());
    int i = 0;
    for (; i < dt; ++i) {
      const long long cap = (i + 1 < dt) ? t[i + 1] : m_cut;
      if (t[i] < cap) {
        ++t[i];
        for (int k = 0; k < i; ++k) t[k] = 0;
        break;
      }
    }
    if (i == dt) break;
  }

  // Continuum tail beyond the exact cut (relative size ~ exp(-2 c17 m_cut
  // R/L); only relevant for large L / small R).
  double tail_g = 0.0, tail_t = 0.0;
  if (m_max > m_cut) {
    const double omega =
        2.0 * std::pow(kPi, 0.5 * dt) / std::tgamma(0.5 * dt);
    const double lo = (static_cast<double>(m_cut) + 0.5) * R;
    const double hi = static_cast<double>(m_max) * R;
    const int n = 400;
    const double h = (hi - lo) / n;
    auto shell = [&](double r, double y1, bool tilde) {
      const double z = std::sqrt(sq(x1 - y1) + r * r);
      const double decay = std::exp(-c17 * r / L);
      const double v =
          tilde ? std::min(std::pow(z, 2.0 - d), 1.0) * decay / L
                : (std::min(std::pow(z, 1.0 - d), 1.0) +
                   std::pow(L, 1.0 - d)) *
                      decay / L;
      return v * v * omega * std::pow(r, dt - 1) * std::pow(R, -dt);
    };
    for (double y1 : y1s) {
      for (int i = 0; i < n; ++i) {
        const double r0 = lo + h * i;
        tail_g += (h / 6.0) * (shell(r0, y1, false) +
                               4.0 * shell(r0 + 0.5 * h, y1, false) +
                               shell(r0 + h, y1, false));
        tail_t += (h / 6.0) * (shell(r0, y1, true) +
                               4.0 * shell(r0 + 0.5 * h, y1, true) +
                               shell(r0 + h, y1, true));
      }
    }
    out.sum_gamma_sq += tail_g;
    out.sum_gamma_tilde_sq += tail_t;
  }
  out.tail_fraction =
      (tail_g + tail_t) /
      std::max(1e-300, out.sum_gamma_sq + out.sum_gamma_tilde_sq);
  out.l2_gamma = L * L * out.sum_gamma_sq;
  out.l2_gamma_tilde = L * L * out.sum_gamma_tilde_sq;
  return out;
}

namespace {

struct EnvelopeSample {
  double ratio;     // value / shape
  double wperp;     // |x - y|_perp / L
};

template <typename ValueFn, typename ShapeFn>
std::vector<EnvelopeSample> envelope_samples(const SlabKernel& kern, int n,
                                             std::uint64_t seed,
                                             const ValueFn& value,
                                             const ShapeFn& shape) {
  CounterRng rng(seed, 0x656e76ULL);
  std::vector<EnvelopeSample> out;
  const int d = kern.d;
  const double L = kern.L;
  while (static_cast<int>(out.size()) < n) {
    Vec x = Vec::Zero(d), y = Vec::Zero(d);
    x[0] = 0.8 * L * rng.symmetric();
    y[0] = 0.9 * L * rng.symmetric();
    Vec dir = Vec::Zero(d);
    double norm2 = 0.0;
    for (int j = 1; j < d; ++j) {
      dir[j] = rng.normal();
      norm2 += sq(dir[j]);
    }
    const double rad = (0.1 + 3.9 * rng.uniform()) * L;
    if (norm2 > 0.0)
      for (int j = 1; j < d; ++j) y[j] = dir[j] / std::sqrt(norm2) * rad;
    Vec z = x - y;
    if (z.norm() < 0.05 * L) continue;
    double wp2 = 0.0;
    for (int j = 1; j < d; ++j) wp2 += sq(z[j]);
    out.push_back({value(x, y) / shape(z.norm()), std::sqrt(wp2) / L});
  }
  return out;
}

template <typename Samples>
double fit_decay_rate(const Samples& ss) {
  // Least squares of log(ratio) against wperp; decay rate is -slope.
  double mx = 0.0, my = 0.0;
  for (const auto& s : ss) {
    mx += s.wperp;
    my += std::log(std::max(s.ratio, 1e-300));
  }
  mx /= ss.size();
  my /= ss.size();
  double sxy = 0.0, sxx = 0.0;
  for (const auto& s : ss) {
    const double dx = s.wperp - mx;
    sxy += dx * (std::log(std::max(s.ratio, 1e-300)) - my);
    sxx += dx * dx;
  }
  return std::max(0.0, -sxy / std::max(sxx, 1e-300));
}

}  // namespace

GreenEnvelope fit_green_envelope(const SlabKernel& kern, int n_calib,
                                 std::uint64_t seed) {
  kern.validate();
  const int d = kern.d;
  auto val = [&](const Vec& x, const Vec& y) {
    return green_function(kern, x, y);
  };
  auto shape = [&](double r) { return std::pow(r, 2.0 - d); };
  const auto ss = envelope_samples(kern, n_calib, seed, val, shape);
  GreenEnvelope env;
  env.c17 = fit_decay_rate(ss);
  for (const auto& s : ss)
    env.c16 = std::max(env.c16, s.ratio * std::exp(env.c17 * s.wperp));
  env.c16 *= 1.05;
  return env;
}

bool check_green_envelope(const SlabKernel& kern, const GreenEnvelope& env,
                          int n_test, std::uint64_t seed) {
  const int d = kern.d;
  auto val = [&](const Vec& x, const Vec& y) {
    return green_function(kern, x, y);
  };
  auto shape = [&](double r) { return std::pow(r, 2.0 - d); };
  for (const auto& s : envelope_samples(kern, n_test, seed, val, shape))
    if (s.ratio > env.c16 * std::exp(-env.c17 * s.wperp) * (1.0 + 1e-9))
      return false;
  return true;
}

GradientEnvelope fit_gradient_envelope(const SlabKernel& kern, int n_calib,
                                       std::uint64_t seed) {
  kern.validate();
  const int d = kern.d;
  const double L = kern.L;
  auto val = [&](const Vec& x, const Vec& y) {
    return green_gradient(kern, x, y).norm();
  };
  auto shape = [&](double r) {
    return std::pow(r, 1.0 - d) + std::pow(L, 1.0 - d);
  };
  const auto ss = envelope_samples(kern, n_calib, seed, val, shape);
  GradientEnvelope env;
  env.c17 = fit_decay_rate(ss);
  double cmax = 0.0;
  for (const auto& s : ss)
    cmax = std::max(cmax, s.ratio * std::exp(env.c17 * s.wperp));
  env.c18 = env.c19 = cmax * 1.05;
  return env;
}

bool check_gradient_envelope(const SlabKernel& kern,
                             const GradientEnvelope& env, int n_test,
                             std::uint64_t seed) {
  const int d = kern.d;
  const double L = kern.L;
  auto val = [&](const Vec& x, const Vec& y) {
    return green_gradient(kern, x, y).norm();
  };
  auto shape = [&](double r) {
    return std::pow(r, 1.0 - d) + std::pow(L, 1.0 - d);
  };
  for (const auto& s : envelope_samples(kern, n_test, seed, val, shape)) {
    const double cap =
        std::max(env.c18, env.c19) * std::exp(-env.c17 * s.wperp);
    if (s.ratio > cap * (1.0 + 1e-9)) return false;
  }
  return true;
}

}  // namespace rde
