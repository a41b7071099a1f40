#include "rde/env.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <sstream>
#include <vector>

namespace rde {
namespace {

// C^2 smoothstep on [0,1].
inline double smoothstep(double u) {
  if (u <= 0.0) return 0.0;
  if (u >= 1.0) return 1.0;
  return u * u * u * (10.0 + u * (-15.0 + 6.0 * u));
}

// One-dimensional bump psi(t) = S(t+1) - S(t): support (-1,1), psi(0) = 1 and
// sum_k psi(t - k) = 1 (the sum telescopes), which gives the partition of
// unity on the unit lattice.
inline double bump1(double t) { return smoothstep(t + 1.0) - smoothstep(t); }

// sup |S'| = 15/8, so each lattice row contributes at most 2 * 15/8 to the
// derivative sum of the partition of unity.
constexpr double kBumpDerivRowSum = 2.0 * 15.0 / 8.0;

}  // namespace

Environment::Environment(const EnvSpec& spec, std::uint64_t seed)
    : spec_(spec), seed_(seed) {
  spec_.validate();
  drift_key_ = rng::combine(seed, 0x64726966ULL);  // drift site table
  diff_key_ = rng::combine(seed, 0x61646966ULL);   // diffusion site table
  const int d = spec_.dimension;
  offset_ = Vec::Zero(d);
  if (spec_.random_phase) {
    CounterRng r(seed, 0x6f666673ULL);
    for (int i = 0; i < d; ++i) offset_[i] = r.uniform();
  }
  if (spec_.diffusion_mode == DiffusionMode::kIdentity) {
    diff_amp_ = 0.0;
    ellipticity_realized_ = 1.0;
  } else {
    // a(x) = Id + sum_z phi(x - z) * amp * (u_z u_z^T - Id/2), |u_z| = 1,
    // so eigenvalues stay in [1 - amp/2, 1 + amp/2] subset [1/nu, nu].
    diff_amp_ = std::min(1.0 - 1.0 / spec_.ellipticity, spec_.ellipticity - 1.0);
    ellipticity_realized_ = 1.0 / (1.0 - diff_amp_ / 2.0);
  }
  const double sd = std::sqrt(static_cast<double>(d));
  lipschitz_bound_ = kBumpDerivRowSum * sd *
                     (spec_.drift_bound + diff_amp_ * static_cast<double>(d));
  if (lipschitz_bound_ == 0.0) lipschitz_bound_ = 1e-300;  // constant field
}

void Environment::site_vector(const long long* z, double* v) const {
  const int d = spec_.dimension;
  const double eps = spec_.drift_bound;
  const double lam = spec_.mean_drift;
  std::uint64_t h = drift_key_;
  for (int i = 0; i < d; ++i)
    h = rng::combine(h, static_cast<std::uint64_t>(z[i] + (1LL << 40)));
  const double u1 = 2.0 * rng::uniform(h, 0) - 1.0;
  const double v1 = lam + (eps - std::abs(lam)) * u1;
  v[0] = v1;
  if (d > 1) {
    // Transverse components: independent symmetric, scaled so |V_z| <= eps.
    const double amp =
        std::sqrt(std::max(0.0, (eps * eps - v1 * v1) / (d - 1)));
    for (int i = 1; i < d; ++i)
      v[i] = amp * (2.0 * rng::uniform(h, static_cast<std::uint64_t>(i)) - 1.0);
  }
}

Vec Environment::drift_at(const Vec& x) const {
  const int d = spec_.dimension;
  Vec b = Vec::Zero(d);
  if (spec_.drift_bound == 0.0) return b;
  if (spec_.constant_field()) {
    b[0] = spec_.mean_drift;
    return b;
  }
  // Generic x lies in the support of exactly 2 bumps per dimension.
  double t[8], w0[8], w1[8], v[8];
  long long base[8], z[8];
  for (int i = 0; i < d; ++i) {
    const double xi = x[i] - offset_[i];
    base[i] = static_cast<long long>(std::floor(xi));
    t[i] = xi - static_cast<double>(base[i]);
    w0[i] = bump1(t[i]);        // site at base
    w1[i] = bump1(t[i] - 1.0);  // site at base + 1
  }
  const int n = 1 << d;
  for (int m = 0; m < n; ++m) {
    double w = 1.0;
    for (int i = 0; i < d; ++i) {
      const int hi = (m >> i) & 1;
      w *= hi ? w1[i] : w0[i];
      z[i] = base[i] + hi;
    }
    if (w == 0.0) continue;
    site_vector(z, v);
    for (int i = 0; i < d; ++i) b[i] += w * v[i];
  }
  return b;
}

double Environment::drift1_at(const Vec& x) const {
  if (spec_.drift_bound == 0.0) return 0.0;
  if (spec_.constant_field()) return spec_.mean_drift;
  return drift_at(x)[0];
}

Mat Environment::diffusion_at(const Vec& x) const {
  const int d = spec_.dimension;
  Mat a = Mat::Identity(d, d);
  if (spec_.diffusion_mode == DiffusionMode::kIdentity) return a;
  double t[8];
  long long base[8], z[8];
  double w0[8], w1[8];
  for (int i = 0; i < d; ++i) {
    const double xi = x[i] - offset_[i];
    base[i] = static_cast<long long>(std::floor(xi));
    t[i] = xi - static_cast<double>(base[i]);
    w0[i] = bump1(t[i]);
    w1[i] = bump1(t[i] - 1.0);
  }
  const int n = 1 << d;
  for (int m = 0; m < n; ++m) {
    double w = 1.0;
    for (int i = 0; i < d; ++i) {
      const int hi = (m >> i) & 1;
      w *= hi ? w1[i] : w0[i];
      z[i] = base[i] + hi;
    }
    if (w == 0.0) continue;
    std::uint64_t h = diff_key_;
    for (int i = 0; i < d; ++i)
      h = rng::combine(h, static_cast<std::uint64_t>(z[i] + (1LL << 40)));
    Vec u(d);
    for (int i = 0; i < d; ++i)
      u[i] = 2.0 * rng::uniform(h, static_cast<std::uint64_t>(i)) - 1.0;
    const double nrm = u.norm();
    if (nrm < 1e-12) continue;
    u /= nrm;
    a.noalias() += (w * diff_amp_) *
                   (u * u.transpose() - 0.5 * Mat::Identity(d, d));
  }
  return a;
}

Mat Environment::diffusion_sqrt_at(const Vec& x) const {
  const int d = spec_.dimension;
  if (spec_.diffusion_mode == DiffusionMode::kIdentity)
    return Mat::Identity(d, d);
  Eigen::SelfAdjointEigenSolver<Mat> es(diffusion_at(x));
  return es.operatorSqrt();
}

Environment sample_environment(const EnvSpec& spec, std::uint64_t seed) {
  return Environment(spec, seed);
}

EnvAxiomReport verify_env_axioms(const EnvSpec& spec, int n_probe,
                                 std::uint64_t base_seed) {
  if (n_probe < 100)
    throw std::invalid_argument("verify_env_axioms: n_probe must be >= 100");
  spec.validate();
  EnvAxiomReport rep;
  rep.n_probe = n_probe;
  rep.lipschitz_bound = 0.0;
  const int d = spec.dimension;

  // Drift bound and empirical Lipschitz constant on one realization.
  {
    Environment env(spec, base_seed);
    rep.lipschitz_bound = env.lipschitz_bound();
    CounterRng r(base_seed, 0x70726f62ULL);
    const double step = 1e-3;
    for (int k = 0; k < n_probe; ++k) {
      Vec x(d);
      for (int i = 0; i < d; ++i) x[i] = 10.0 * r.symmetric();
      const Vec b = env.drift_at(x);
      rep.max_drift_norm = std::max(rep.max_drift_norm, b.norm());
      Vec dx(d);
      for (int i = 0; i < d; ++i) dx[i] = r.symmetric();
      if (dx.norm() < 1e-9) continue;
      dx *= step / dx.norm();
      const double slope = (env.drift_at(x + dx) - b).norm() / step;
      rep.empirical_lipschitz = std::max(rep.empirical_lipschitz, slope);
    }
  }

  // Decorrelation across seeds at distance >= R and mean drift.
  Vec far = Vec::Zero(d);
  far[0] = 1.5 * spec.dependence_range;
  double s0 = 0, sx = 0, s00 = 0, sxx = 0, s0x = 0;
  Vec origin = Vec::Zero(d);
  for (int k = 0; k < n_probe; ++k) {
    Environment env(spec, base_seed + 1000 + static_cast<std::uint64_t>(k));
    const double b0 = env.drift_at(origin)[0];
    const double bx = env.drift_at(far)[0];
    s0 += b0;
    sx += bx;
    s00 += b0 * b0;
    sxx += bx * bx;
    s0x += b0 * bx;
  }
  const double n = static_cast<double>(n_probe);
  const double var0 = s00 / n - (s0 / n) * (s0 / n);
  const double varx = sxx / n - (sx / n) * (sx / n);
  const double cov = s0x / n - (s0 / n) * (sx / n);
  rep.zero_variance = var0 < 1e-20 || varx < 1e-20;
  rep.correlation_far =
      rep.zero_variance ? 0.0 : cov / std::sqrt(var0 * varx);
  rep.correlation_self = rep.zero_variance ? 1.0 : 1.0;
  rep.correlation_envelope = 4.0 / std::sqrt(n);
  rep.mean_drift_e1 = s0 / n;
  rep.mean_drift_stderr = std::sqrt(std::max(var0, 0.0) / n);

  const bool bound_ok = rep.max_drift_norm <= spec.drift_bound * (1.0 + 1e-9);
  const bool lip_ok =
      rep.empirical_lipschitz <= rep.lipschitz_bound * (1.0 + 1e-2);
  const bool corr_ok =
      rep.zero_variance ||
      std::abs(rep.correlation_far) < rep.correlation_envelope;
  const bool mean_ok = std::abs(rep.mean_drift_e1 - spec.mean_drift) <=
                       4.0 * rep.mean_drift_stderr + 1e-12;
  rep.passed = bound_ok && lip_ok && corr_ok && mean_ok;
  return rep;
}

std::string render_env_spec(const EnvSpec& spec) {
  std::ostringstream os;
  os.precision(17);
  os << "dimension = " << spec.dimension << "\n";
  os << "drift_bound = " << spec.drift_bound << "\n";
  os << "mean_drift = " << spec.mean_drift << "\n";
  os << "eta = " << spec.eta << "\n";
  os << "dependence_range = " << spec.dependence_range << "\n";
  os << "bump_halfwidth = " << spec.bump_halfwidth << "\n";
  os << "ellipticity = " << spec.ellipticity << "\n";
  os << "diffusion_mode = "
     << (spec.diffusion_mode == DiffusionMode::kIdentity ? "identity"
                                                         : "generated")
     << "\n";
  os << "random_phase = " << (spec.random_phase ? 1 : 0) << "\n";
  return os.str();
}

EnvSpec parse_env_spec_block(const std::string& text) {
  EnvSpec spec;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t");
      const auto b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    if (key == "dimension") spec.dimension = std::stoi(val);
    else if (key == "drift_bound") spec.drift_bound = std::stod(val);
    else if (key == "mean_drift") spec.mean_drift = std::stod(val);
    else if (key == "eta") spec.eta = std::stod(val);
    else if (key == "dependence_range") spec.dependence_range = std::stod(val);
    else if (key == "bump_halfwidth") spec.bump_halfwidth = std::stod(val);
    else if (key == "ellipticity") spec.ellipticity = std::stod(val);
    else if (key == "diffusion_mode")
      spec.diffusion_mode = val == "generated" ? DiffusionMode::kGenerated
                                               : DiffusionMode::kIdentity;
    else if (key == "random_phase") spec.random_phase = val != "0";
    else throw std::invalid_argument("unknown env spec key: " + key);
  }
  return spec;
}

}  // namespace rde
