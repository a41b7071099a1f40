#include "rde/cli.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <stdexcept>

#include "rde/criterion.hpp"
#include "rde/example.hpp"
#include "rde/greenslab.hpp"
#include "rde/oned.hpp"

namespace rde {
namespace {

using ojson = nlohmann::ordered_json;
namespace fs = std::filesystem;

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

std::string upper(std::string s) {
  for (char& c : s) c = static_cast<char>(std::toupper(c));
  return s;
}

// Universe of known keys; anything else is a hard error.
const std::vector<std::pair<std::string, std::vector<std::string>>> kSchema = {
    {"run", {"subcommand", "stage", "seed", "workers", "out"}},
    {"env",
     {"dimension", "drift_bound", "mean_drift", "eta", "dependence_range",
      "bump_halfwidth", "ellipticity", "diffusion_mode", "random_phase"}},
    {"geometry",
     {"L", "L_tilde", "L0", "L_tilde0", "x1", "b_back", "L_list", "L_probe"}},
    {"budgets", {"n_env", "n_path", "dt", "max_time", "timeout_tolerance"}},
    {"constants",
     {"kappa", "c3", "c7", "c12", "a_grid", "u0", "a0", "k_max", "eps", "eta",
      "lambda", "N", "c", "a"}},
};

const std::vector<std::string>* section_keys(const std::string& sec) {
  for (const auto& [name, keys] : kSchema)
    if (name == sec) return &keys;
  return nullptr;
}

void check_known(const std::string& sec, const std::string& key) {
  const auto* keys = section_keys(sec);
  if (!keys)
    throw std::invalid_argument("config: unknown section [" + sec + "]");
  if (std::find(keys->begin(), keys->end(), key) == keys->end())
    throw std::invalid_argument("config: unknown key '" + key +
                                "' in section [" + sec + "]");
}

std::string default_of(const std::string& sec, const std::string& key,
                       const std::string& subcommand) {
  static const std::vector<std::pair<std::string, std::string>> kDefaults = {
      {"run.seed", "1"},          {"run.workers", "1"},
      {"run.out", "out"},         {"env.dimension", "1"},
      {"env.drift_bound", "0"},   {"env.mean_drift", "0"},
      {"env.eta", "1"},           {"env.dependence_range", "2.5"},
      {"env.bump_halfwidth", "1"},{"env.ellipticity", "1"},
      {"env.diffusion_mode", "identity"}, {"env.random_phase", "true"},
      {"geometry.L", "5"},        {"geometry.L_tilde", "-1"},
      {"geometry.L0", "6"},       {"geometry.L_tilde0", "6"},
      {"geometry.x1", "0"},       {"geometry.b_back", "1"},
      {"geometry.L_list", "5,10,15"}, {"geometry.L_probe", "1"},
      {"budgets.n_env", "10"},    {"budgets.n_path", "200"},
      {"budgets.dt", "0.01"},     {"budgets.max_time", "0"},
      {"budgets.timeout_tolerance", "0.001"},
      {"constants.kappa", "0.5"}, {"constants.c3", "1"},
      {"constants.c7", "1"},      {"constants.c12", "1"},
      {"constants.a_grid", "0.25,0.5,1"}, {"constants.u0", "1"},
      {"constants.a0", "1"},      {"constants.k_max", "1"},
      {"constants.eps", "0.05"},  {"constants.eta", "0.5"},
      {"constants.lambda", "0.05"}, {"constants.N", "6"},
      {"constants.c", "1"},       {"constants.a", "0.5"},
  };
  if (sec == "run" && key == "stage") {
    if (subcommand == "env") return "axioms";
    if (subcommand == "sde") return "exit";
    if (subcommand == "criterion") return "evaluate";
    if (subcommand == "oned") return "identity";
    if (subcommand == "green") return "sums";
    return "delta";  // example
  }
  for (const auto& [k, v] : kDefaults)
    if (k == sec + "." + key) return v;
  return "";
}

double to_num(const std::string& sec, const std::string& key,
              const std::string& v) {
  try {
    size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument("trailing");
    return d;
  } catch (...) {
    throw std::invalid_argument("config: [" + sec + "] " + key + " = '" + v +
                                "' is not a number");
  }
}

std::vector<double> to_list(const std::string& sec, const std::string& key,
                            const std::string& v) {
  std::vector<double> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ','))
    out.push_back(to_num(sec, key, trim(item)));
  if (out.empty())
    throw std::invalid_argument("config: [" + sec + "] " + key + " is empty");
  return out;
}

// Typed view over the resolved config.
struct View {
  const ConfigFile& cfg;
  std::string str(const std::string& s, const std::string& k) const {
    return cfg.get(s, k, "");
  }
  double num(const std::string& s, const std::string& k) const {
    return to_num(s, k, str(s, k));
  }
  long long integer(const std::string& s, const std::string& k) const {
    return static_cast<long long>(num(s, k));
  }
  std::vector<double> list(const std::string& s, const std::string& k) const {
    return to_list(s, k, str(s, k));
  }
};

EnvSpec spec_of(const View& v) {
  EnvSpec sp;
  sp.dimension = static_cast<int>(v.integer("env", "dimension"));
  sp.drift_bound = v.num("env", "drift_bound");
  sp.mean_drift = v.num("env", "mean_drift");
  sp.eta = v.num("env", "eta");
  sp.dependence_range = v.num("env", "dependence_range");
  sp.bump_halfwidth = v.num("env", "bump_halfwidth");
  sp.ellipticity = v.num("env", "ellipticity");
  const std::string mode = v.str("env", "diffusion_mode");
  if (mode == "identity")
    sp.diffusion_mode = DiffusionMode::kIdentity;
  else if (mode == "generated")
    sp.diffusion_mode = DiffusionMode::kGenerated;
  else
    throw std::invalid_argument(
        "config: diffusion_mode must be identity or generated");
  const std::string rp = v.str("env", "random_phase");
  if (rp != "true" && rp != "false")
    throw std::invalid_argument("config: random_phase must be true or false");
  sp.random_phase = rp == "true";
  sp.validate();
  return sp;
}

SimPolicy policy_of(const View& v) {
  SimPolicy pol;
  pol.dt = v.num("budgets", "dt");
  pol.max_time = v.num("budgets", "max_time");
  pol.timeout_tolerance = v.num("budgets", "timeout_tolerance");
  pol.workers = static_cast<int>(v.integer("run", "workers"));
  return pol;
}

Vec probe_of(int d, double x1) {
  Vec x = Vec::Zero(d);
  x[0] = x1;
  return x;
}

ojson mc_json(const MCEstimate& e) {
  return ojson{{"mean", e.mean}, {"stderr", e.stderr_}, {"n", e.n}};
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

struct StageOutput {
  ojson results;
  std::string headline;
  std::vector<std::string> csv_columns;
  std::vector<std::vector<double>> csv_rows;
};

StageOutput run_stage(const View& v) {
  const std::string sub = v.str("run", "subcommand");
  const std::string stage = v.str("run", "stage");
  const std::uint64_t seed =
      static_cast<std::uint64_t>(v.integer("run", "seed"));
  const EnvSpec spec = spec_of(v);
  const SimPolicy pol = policy_of(v);
  const int n_env = static_cast<int>(v.integer("budgets", "n_env"));
  const long long n_path = v.integer("budgets", "n_path");
  const double L = v.num("geometry", "L");
  const double kappa = v.num("constants", "kappa");
  StageOutput out;

  if (sub == "env" && stage == "axioms") {
    const EnvAxiomReport rep = verify_env_axioms(spec, n_env, seed);
    out.results = {{"passed", rep.passed},
                   {"max_drift_norm", rep.max_drift_norm},
                   {"empirical_lipschitz", rep.empirical_lipschitz},
                   {"lipschitz_bound", rep.lipschitz_bound},
                   {"correlation_far", rep.correlation_far},
                   {"mean_drift_e1", rep.mean_drift_e1},
                   {"mean_drift_stderr", rep.mean_drift_stderr},
                   {"zero_variance", rep.zero_variance}};
    out.headline = "passed=" + std::to_string(rep.passed) +
                   " max|b|=" + fmt(rep.max_drift_norm);
    return out;
  }
  if (sub == "sde" && stage == "exit") {
    const Domain box = criterion_box(spec.dimension, L,
                                     v.num("geometry", "L_tilde"),
                                     spec.dependence_range);
    const Environment env = sample_environment(spec, seed);
    const ExitStats s = estimate_exit_stats(env, Vec::Zero(spec.dimension),
                                            box, n_path, kappa, L, pol);
    out.results = {{"p_hat", s.p_hat},       {"q_hat", s.q_hat},
                   {"rho_hat", s.rho_hat},   {"p_stderr", s.p_stderr},
                   {"n", s.n},               {"n_timeout", s.n_timeout},
                   {"rho_capped", s.rho_capped},
                   {"degenerate_counts", s.degenerate_counts}};
    out.headline = "p_hat=" + fmt(s.p_hat) + " rho_hat=" + fmt(s.rho_hat);
    return out;
  }
  if (sub == "criterion" && stage == "evaluate") {
    const CriterionReport rep = evaluate_effective_criterion(
        spec, L, v.num("geometry", "L_tilde"), v.list("constants", "a_grid"),
        kappa, v.num("constants", "c7"), n_env, n_path, seed, pol);
    ojson cands = ojson::array();
    for (const CriterionCandidate& c : rep.candidates)
      cands.push_back({{"a", c.a},
                       {"L_tilde", c.L_tilde},
                       {"moment", c.moment},
                       {"lhs", c.lhs}});
    out.results = {{"decision", rep.decision},
                   {"best_lhs", rep.best.lhs},
                   {"best_a", rep.best.a},
                   {"best_L_tilde", rep.best.L_tilde},
                   {"best_moment", rep.best.moment},
                   {"candidates", cands}};
    out.headline = "best_lhs=" + fmt(rep.best.lhs) +
                   " decision=" + std::to_string(rep.decision);
    return out;
  }
  if (sub == "criterion" && stage == "recursion") {
    const BoxHierarchy h = build_hierarchy(
        v.num("geometry", "L0"), v.num("geometry", "L_tilde0"),
        v.num("constants", "u0"), v.num("constants", "a0"),
        static_cast<int>(v.integer("constants", "k_max")),
        spec.dependence_range);
    RecursionBudgets bud;
    bud.n_env = n_env;
    bud.n_path = n_path;
    bud.c3 = v.num("constants", "c3");
    bud.kappa = kappa;
    const std::vector<LevelCheck> checks = check_recursion(
        spec, h, static_cast<int>(v.integer("constants", "k_max")), bud, seed,
        pol);
    ojson arr = ojson::array();
    for (const LevelCheck& c : checks)
      arr.push_back({{"k", c.k},
                     {"phi", c.phi},
                     {"target", c.target},
                     {"moment", c.moment},
                     {"feasible", c.feasible},
                     {"holds", c.holds},
                     {"note", c.note}});
    out.results = {{"levels", arr}};
    out.headline = "levels=" + std::to_string(checks.size()) + " holds0=" +
                   std::to_string(!checks.empty() && checks[0].holds);
    return out;
  }
  if (sub == "criterion" && stage == "decay") {
    const DecayFit fit = slab_exit_decay_scan(
        spec, v.num("geometry", "b_back"), v.list("geometry", "L_list"),
        n_env, n_path, seed, pol);
    out.results = {{"c", fit.c},
                   {"gamma", fit.gamma},
                   {"rate_linear", fit.rate_linear},
                   {"rejected", fit.rejected},
                   {"diagnostic", fit.diagnostic}};
    out.headline = "rate_linear=" + fmt(fit.rate_linear) +
                   " rejected=" + std::to_string(fit.rejected);
    out.csv_columns = {"L", "p_hat", "p_stderr", "n", "zero_count",
                       "upper_bound"};
    for (const DecayRow& r : fit.rows)
      out.csv_rows.push_back({r.L, r.p_hat, r.p_stderr,
                              static_cast<double>(r.n),
                              static_cast<double>(r.zero_count),
                              r.upper_bound});
    return out;
  }
  if (sub == "criterion" && stage == "kappa") {
    const KappaEstimate est = estimate_kappa(
        spec, v.num("geometry", "L_probe"), n_env, n_path, seed, pol);
    out.results = {{"kappa_hat", est.kappa_hat},
                   {"c_hat_worst", est.c_hat_worst},
                   {"c_hat_mean", est.c_hat_mean},
                   {"p_traverse", mc_json(est.p_traverse)},
                   {"anti_conservative", est.anti_conservative}};
    out.headline = "kappa_hat=" + fmt(est.kappa_hat);
    return out;
  }
  if (sub == "oned" && stage == "identity") {
    const IdentityReport rep =
        check_log_odds_identity(spec, L, n_env, 1e-3, seed);
    out.results = {{"lhs_mean", rep.lhs_mean},
                   {"lhs_stderr", rep.lhs_stderr},
                   {"rhs_mean", rep.rhs_mean},
                   {"diff_mean", rep.diff_mean},
                   {"diff_stderr", rep.diff_stderr},
                   {"passed", rep.passed}};
    out.headline = "lhs=" + fmt(rep.lhs_mean) + " rhs=" + fmt(rep.rhs_mean);
    return out;
  }
  if (sub == "oned" && stage == "dichotomy") {
    const double horizon = pol.max_time > 0.0 ? pol.max_time : 200.0;
    const DichotomyReport rep =
        solomon_dichotomy(spec, L, v.list("constants", "a_grid"), n_env,
                          horizon, seed, n_path, pol);
    const char* verdict =
        rep.verdict == DichotomyVerdict::kTransientPositive   ? "positive"
        : rep.verdict == DichotomyVerdict::kTransientNegative ? "negative"
                                                              : "inconclusive";
    out.results = {{"min_moment", rep.min_moment},
                   {"best_a", rep.best_a},
                   {"mean_log_rho", rep.mean_log_rho},
                   {"transient_fraction", rep.transient_fraction},
                   {"verdict", verdict},
                   {"signs_agree", rep.signs_agree}};
    out.headline = std::string("verdict=") + verdict;
    return out;
  }
  if (sub == "green" && stage == "sums") {
    SlabKernel kern;
    kern.d = spec.dimension;
    kern.L = L;
    const GammaSums gs =
        gamma_sums(kern, Vec::Zero(kern.d), spec.dependence_range);
    Vec y = Vec::Zero(kern.d);
    y[0] = v.num("geometry", "x1");
    y[1] = 1.0;
    const double g = green_function(kern, Vec::Zero(kern.d), y);
    out.results = {{"sum_gamma_sq", gs.sum_gamma_sq},
                   {"sum_gamma_tilde_sq", gs.sum_gamma_tilde_sq},
                   {"l2_gamma", gs.l2_gamma},
                   {"l2_gamma_tilde", gs.l2_gamma_tilde},
                   {"n_terms", gs.n_terms},
                   {"green_at_probe", g}};
    out.headline = "l2_gamma=" + fmt(gs.l2_gamma) +
                   " l2_gamma_tilde=" + fmt(gs.l2_gamma_tilde);
    return out;
  }
  if (sub == "example") {
    const ExampleParams par = ExampleParams::make(
        v.num("constants", "eps"), v.num("constants", "eta"),
        v.num("constants", "lambda"),
        static_cast<int>(v.integer("constants", "N")), spec.dependence_range,
        v.num("constants", "c12"));
    const double x1 = v.num("geometry", "x1");
    if (stage == "green") {
      const Environment env = sample_environment(spec, seed);
      const MCEstimate g = green_op_quenched(
          env, [](const Vec&) { return 1.0; }, probe_of(spec.dimension, x1),
          par.L, n_path, pol);
      out.results = {{"value", mc_json(g)}, {"L", par.L}};
      out.headline = "G1=" + fmt(g.mean);
      return out;
    }
    if (stage == "phat") {
      const Environment env = sample_environment(spec, seed);
      const PhatComparison c = phat_formula_vs_mc(
          env, probe_of(spec.dimension, x1), par.L, n_path, pol);
      out.results = {{"mc", c.mc},
                     {"mc_stderr", c.mc_stderr},
                     {"formula", c.formula},
                     {"formula_stderr", c.formula_stderr},
                     {"green_term", c.green_term},
                     {"within_3sigma", c.within_3sigma}};
      out.headline = "mc=" + fmt(c.mc) + " formula=" + fmt(c.formula);
      return out;
    }
    if (stage == "rhohat") {
      const RhohatReport rep =
          rhohat_estimate(spec, par, n_env, n_path,
                          default_v_grid(par, spec.dimension), seed, pol);
      out.results = {{"mean", mc_json(rep.mean)},
                     {"max_rhohat", rep.max_rhohat},
                     {"all_below_cap", rep.all_below_cap},
                     {"expectation_below_one", rep.expectation_below_one},
                     {"transverse_cap", rep.transverse_cap},
                     {"grid_sup_underestimates", rep.grid_sup_underestimates}};
      out.headline = "E[rhohat]=" + fmt(rep.mean.mean);
      out.csv_columns = {"rhohat", "argmax_x1", "green_at_argmax", "cap_ok"};
      for (const RhohatRow& r : rep.rows)
        out.csv_rows.push_back({r.rhohat, r.argmax[0], r.green_at_argmax,
                                static_cast<double>(r.cap_ok)});
      return out;
    }
    if (stage == "perturb") {
      const Environment env = sample_environment(spec, seed);
      const std::vector<Vec> xs = {probe_of(spec.dimension, -0.4 * par.L),
                                   probe_of(spec.dimension, x1),
                                   probe_of(spec.dimension, 0.3 * par.L)};
      const auto rows = check_perturbation_identity(
          env, [](double y) { return std::exp(-y * y); }, par.L, xs, n_path,
          pol);
      ojson arr = ojson::array();
      bool all = true;
      for (const PerturbRow& r : rows) {
        arr.push_back({{"x1", r.x[0]},
                       {"lhs", r.lhs},
                       {"rhs", r.rhs},
                       {"residual", r.residual},
                       {"within_3sigma", r.within_3sigma}});
        all = all && r.within_3sigma;
      }
      out.results = {{"rows", arr}, {"all_within_3sigma", all}};
      out.headline = "all_within_3sigma=" + std::to_string(all);
      return out;
    }
    if (stage == "displacement") {
      const Environment env = sample_environment(spec, seed);
      const auto rows = displacement_check(
          env, par, {probe_of(spec.dimension, x1)}, n_path, pol);
      const DisplacementRow& r = rows[0];
      out.results = {{"delta_e1", r.delta_e1},
                     {"delta_stderr", r.delta_stderr},
                     {"green", r.green},
                     {"green_stderr", r.green_stderr},
                     {"gap", r.gap},
                     {"lateral_fraction", r.lateral_fraction},
                     {"green_bound_ok", r.green_bound_ok}};
      out.headline = "delta_e1=" + fmt(r.delta_e1) + " gap=" + fmt(r.gap);
      return out;
    }
    if (stage == "delta") {
      const DeltaReport rep = delta_condition(par);
      out.results = {{"delta_inv", rep.delta_inv},
                     {"term1", rep.term1},
                     {"term2", rep.term2},
                     {"degenerate", rep.degenerate},
                     {"pass", rep.pass}};
      out.headline = "delta_inv=" + fmt(rep.delta_inv) +
                     " pass=" + std::to_string(rep.pass);
      return out;
    }
    if (stage == "assemble") {
      AssemblyBudgets bud;
      bud.n_env = n_env;
      bud.n_path = n_path;
      bud.kappa = kappa;
      bud.c = v.num("constants", "c");
      const AssemblyReport rep = assemble_moment_bound(spec, par, bud, seed, pol);
      out.results = {{"p_L", rep.p_L},
                     {"p_L_stderr", rep.p_L_stderr},
                     {"rhohat_moment_2a", rep.rhohat_moment_2a},
                     {"log10_term1", rep.log10_term1},
                     {"term2", rep.term2},
                     {"term1_vacuous", rep.term1_vacuous},
                     {"term2_finite", rep.term2_finite},
                     {"direct_moment", rep.direct_moment},
                     {"direct_below_bound", rep.direct_below_bound},
                     {"desk_scale", rep.desk_scale}};
      out.headline = "p_L=" + fmt(rep.p_L) +
                     " direct=" + fmt(rep.direct_moment);
      return out;
    }
  }
  throw std::invalid_argument("config: unknown subcommand/stage '" + sub +
                              "/" + stage + "'");
}

}  // namespace

bool ConfigFile::has(const std::string& sec, const std::string& key) const {
  for (const auto& [name, kv] : sections)
    if (name == sec)
      for (const auto& [k, v] : kv)
        if (k == key) return true;
  return false;
}

std::string ConfigFile::get(const std::string& sec, const std::string& key,
                            const std::string& fallback) const {
  for (const auto& [name, kv] : sections)
    if (name == sec)
      for (const auto& [k, v] : kv)
        if (k == key) return v;
  return fallback;
}

void ConfigFile::set(const std::string& sec, const std::string& key,
                     const std::string& value) {
  for (auto& [name, kv] : sections)
    if (name == sec) {
      for (auto& [k, v] : kv)
        if (k == key) {
          v = value;
          return;
        }
      kv.emplace_back(key, value);
      return;
    }
  sections.push_back({sec, {{key, value}}});
}

ConfigFile parse_config(const std::string& text) {
  ConfigFile cfg;
  std::string section;
  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    if (t.front() == '[') {
      if (t.back() != ']')
        throw std::invalid_argument("config line " + std::to_string(lineno) +
                                    ": malformed section header");
      section = trim(t.substr(1, t.size() - 2));
      if (!section_keys(section))
        throw std::invalid_argument("config: unknown section [" + section +
                                    "]");
      bool seen = false;
      for (const auto& [name, kv] : cfg.sections) seen = seen || name == section;
      if (!seen) cfg.sections.push_back({section, {}});
      continue;
    }
    const size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config line " + std::to_string(lineno) +
                                  ": expected key = value");
    if (section.empty())
      throw std::invalid_argument("config line " + std::to_string(lineno) +
                                  ": key outside any [section]");
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    check_known(section, key);
    if (cfg.has(section, key))
      throw std::invalid_argument("config: duplicate key '" + key +
                                  "' in section [" + section + "]");
    cfg.set(section, key, value);
  }
  return cfg;
}

std::string render_config(const ConfigFile& cfg) {
  std::ostringstream os;
  bool first = true;
  for (const auto& [name, kv] : cfg.sections) {
    if (!first) os << "\n";
    first = false;
    os << "[" << name << "]\n";
    for (const auto& [k, v] : kv) os << k << " = " << v << "\n";
  }
  return os.str();
}

std::uint64_t config_hash(const ConfigFile& cfg) {
  const std::string s = render_config(cfg);
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string hash_hex(std::uint64_t h) {
  static const char* kDigits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[i] = kDigits[h & 0xf];
    h >>= 4;
  }
  return s;
}

RunResult run_config(const ConfigFile& cfg) {
  RunResult res;
  try {
    // Re-validate keys (configs may be built programmatically).
    for (const auto& [name, kv] : cfg.sections)
      for (const auto& [k, value] : kv) check_known(name, k);
    const std::string sub = cfg.get("run", "subcommand", "");
    static const std::vector<std::string> kSubs = {"env",  "sde",   "criterion",
                                                   "oned", "green", "example"};
    if (std::find(kSubs.begin(), kSubs.end(), sub) == kSubs.end())
      throw std::invalid_argument(
          "config: [run] subcommand must be one of env, sde, criterion, "
          "oned, green, example");

    // Resolve: fill every known key with its default, then let environment
    // variables RDE_<SECTION>_<KEY> override.
    ConfigFile resolved;
    resolved.set("run", "subcommand", sub);
    for (const auto& [sec, keys] : kSchema)
      for (const std::string& key : keys) {
        if (sec == "run" && key == "subcommand") continue;
        resolved.set(sec, key,
                     cfg.get(sec, key, default_of(sec, key, sub)));
      }
    for (const auto& [sec, keys] : kSchema)
      for (const std::string& key : keys) {
        const std::string var = "RDE_" + upper(sec) + "_" + upper(key);
        if (const char* ov = std::getenv(var.c_str()))
          resolved.set(sec, key, ov);
      }

    const View v{resolved};
    if (v.integer("run", "workers") < 1)
      throw std::invalid_argument("config: workers must be >= 1");
    const std::uint64_t h = config_hash(resolved);
    res.hash = hash_hex(h);

    const StageOutput stage = run_stage(v);

    ojson report;
    report["schema"] = 1;
    report["hash"] = res.hash;
    report["subcommand"] = sub;
    report["stage"] = v.str("run", "stage");
    report["seed"] = v.integer("run", "seed");
    report["workers"] = v.integer("run", "workers");
    report["headline"] = stage.headline;
    report["results"] = stage.results;
    res.report_json = report.dump(2) + "\n";

    const fs::path dir(v.str("run", "out"));
    fs::create_directories(dir);
    // The config echo always lands before (and beside) any result file.
    const std::string base = res.hash;
    std::ofstream(dir / (base + ".config")) << render_config(resolved);
    res.artifacts.push_back(base + ".config");
    std::ofstream(dir / (base + ".json")) << res.report_json;
    res.artifacts.push_back(base + ".json");
    if (!stage.csv_columns.empty()) {
      std::ofstream csv(dir / (base + ".csv"));
      for (size_t i = 0; i < stage.csv_columns.size(); ++i)
        csv << (i ? "," : "") << stage.csv_columns[i];
      csv << "\n";
      csv.precision(17);
      for (const auto& row : stage.csv_rows) {
        for (size_t i = 0; i < row.size(); ++i) csv << (i ? "," : "") << row[i];
        csv << "\n";
      }
      res.artifacts.push_back(base + ".csv");
      std::ofstream schema(dir / (base + ".columns"));
      schema << "csv columns for " << sub << "/" << v.str("run", "stage")
             << ":\n";
      for (const std::string& c : stage.csv_columns) schema << c << "\n";
      res.artifacts.push_back(base + ".columns");
    }
    res.message = stage.headline;
    return res;
  } catch (const std::invalid_argument& e) {
    res.status = 2;
    res.message = e.what();
  } catch (const std::exception& e) {
    res.status = 3;  // estimator refusal: timeout excess, zero counts
    res.message = e.what();
  }
  return res;
}

std::vector<RegistryEntry> seed_registry(const std::string& dir) {
  std::vector<RegistryEntry> out;
  if (!fs::exists(dir)) return out;
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.path().extension() == ".json") files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  for (const fs::path& p : files) {
    RegistryEntry e;
    e.hash = p.stem().string();
    try {
      std::ifstream in(p);
      const ojson j = ojson::parse(in);
      e.subcommand = j.at("subcommand").get<std::string>();
      e.stage = j.at("stage").get<std::string>();
      e.seed = j.at("seed").get<std::uint64_t>();
      e.headline = j.at("headline").get<std::string>();
    } catch (...) {
      e.corrupt = true;
    }
    out.push_back(std::move(e));
  }
  return out;
}

RunResult rerun_by_hash(const std::string& dir, const std::string& hash) {
  const fs::path cfg_path = fs::path(dir) / (hash + ".config");
  RunResult res;
  if (!fs::exists(cfg_path)) {
    res.status = 2;
    res.message = "no config echo under hash " + hash;
    return res;
  }
  std::ifstream in(cfg_path);
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return run_config(parse_config(ss.str()));
  } catch (const std::exception& e) {
    res.status = 2;
    res.message = e.what();
    return res;
  }
}

}  // namespace rde
