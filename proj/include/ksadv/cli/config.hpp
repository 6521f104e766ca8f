#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "ksadv/flows.hpp"
#include "ksadv/integrator.hpp"

namespace ksadv::cli {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class Experiment { simulate, picard_verify, lemma_envelopes, dissipation_sweep, decay_study, global_advect };

inline std::string_view to_string(Experiment e) {
  switch (e) {
    case Experiment::simulate: return "simulate";
    case Experiment::picard_verify: return "picard-verify";
    case Experiment::lemma_envelopes: return "lemma-envelopes";
    case Experiment::dissipation_sweep: return "dissipation-sweep";
    case Experiment::decay_study: return "decay-study";
    case Experiment::global_advect: return "global-advect";
  }
  return "?";
}

inline Experiment experiment_from_string(std::string_view s) {
  for (auto e : {Experiment::simulate, Experiment::picard_verify, Experiment::lemma_envelopes,
                 Experiment::dissipation_sweep, Experiment::decay_study, Experiment::global_advect})
    if (to_string(e) == s) return e;
  throw ConfigError("unknown experiment '" + std::string(s) + "'");
}

struct GridSpec {
  double L1 = 2 * std::numbers::pi, L2 = 2 * std::numbers::pi;
  int N1 = 32, N2 = 32;
};

struct FlowSpec {
  FlowKind kind = FlowKind::zero;
  double amplitude = 0.0;
  double period = 1.0;
  double phase = 0.0, phase_b = 0.0;
  std::string file;
};

enum class InitialKind { zero, single_mode, random, file };

struct InitialSpec {
  InitialKind kind = InitialKind::random;
  int k1 = 1, k2 = 0;
  double amplitude = 0.1, phase = 0.0;
  double spectrum_decay = 0.05, l2 = 0.1;
  double mean = 0.0;
  std::string file;
};

struct ExperimentConfig {
  Experiment experiment = Experiment::simulate;
  std::uint64_t seed = 1;
  std::string output = "out";

  GridSpec grid;
  FlowSpec flow;
  StepperConfig stepper;
  Equation equation = Equation::full;
  std::size_t record_every = 10;
  double l2_ceiling = std::numeric_limits<double>::infinity();
  InitialSpec initial;

  int picard_nodes = 64, picard_max_iters = 200;
  double picard_tol = 1e-10;
  double picard_T = 0.0;  // 0: admissible_T from the measured constant
  std::size_t bilinear_pairs = 200;
  int bilinear_nodes = 96;

  double env_t_min = 1e-4, env_t_max = 0.99, env_global_t_max = 10.0;
  std::size_t env_count = 64;
  double env_s = 1.0, env_T1 = 1.0, env_T2 = 1.0;

  std::vector<double> amplitudes{0.0, 10.0, 50.0, 200.0};
  std::size_t s_per_period = 16, t_count = 64, probes = 64, power_max_iters = 50;
  double power_rtol = 1e-6, propagation_dt = 1e-2;

  double mu = 0.0;        // 0: default rate
  double tau_star = 0.0;  // 0: estimate from the flow

  double large_amplitude = 500.0;
  double growth_factor = 3.0, bounded_factor = 1.5;

  std::filesystem::path base_dir;  // relative file paths resolve here
  std::string text;                // verbatim config
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string_view::npos) return {};
  const auto b = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(a, b - a + 1));
}

inline double parse_number(std::string_view tok, const std::string& where) {
  const std::string t = trim(tok);
  if (t == "pi") return std::numbers::pi;
  double x = 0.0;
  const auto r = std::from_chars(t.data(), t.data() + t.size(), x);
  if (t.empty() || r.ec != std::errc{} || r.ptr != t.data() + t.size())
    throw ConfigError(where + ": '" + t + "' is not a number");
  return x;
}

}  // namespace detail

/// Real value: a number, "pi", or a product/quotient chain such as 4*pi or 3*pi/2.
inline double parse_real(std::string_view s, const std::string& where = "value") {
  const std::string t = detail::trim(s);
  if (t.empty()) throw ConfigError(where + ": empty value");
  double acc = 1.0;
  char op = '*';
  std::size_t start = 0;
  for (std::size_t i = 0; i <= t.size(); ++i) {
    // an exponent sign (1e-3) is not an operator
    if (i < t.size() && t[i] != '*' && t[i] != '/') continue;
    const double x = detail::parse_number(std::string_view(t).substr(start, i - start), where);
    acc = op == '*' ? acc * x : acc / x;
    if (i < t.size()) op = t[i];
    start = i + 1;
  }
  if (!std::isfinite(acc)) throw ConfigError(where + ": value is not finite");
  return acc;
}

inline long long parse_int(std::string_view s, const std::string& where) {
  const std::string t = detail::trim(s);
  long long x = 0;
  const auto r = std::from_chars(t.data(), t.data() + t.size(), x);
  if (t.empty() || r.ec != std::errc{} || r.ptr != t.data() + t.size())
    throw ConfigError(where + ": '" + t + "' is not an integer");
  return x;
}

inline bool parse_bool(std::string_view s, const std::string& where) {
  const std::string t = detail::trim(s);
  if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
  if (t == "false" || t == "0" || t == "no" || t == "off") return false;
  throw ConfigError(where + ": '" + t + "' is not a boolean");
}

inline std::vector<double> parse_real_list(std::string_view s, const std::string& where) {
  std::vector<double> out;
  std::stringstream ss{std::string(s)};
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_real(item, where));
  if (out.empty()) throw ConfigError(where + ": empty list");
  return out;
}

/// Accepted sections and keys.
inline const std::map<std::string, std::set<std::string>>& schema() {
  static const std::map<std::string, std::set<std::string>> s{
      {"experiment", {"name", "seed", "output"}},
      {"grid", {"L1", "L2", "N1", "N2"}},
      {"flow", {"kind", "amplitude", "period", "phase", "phase_b", "file"}},
      {"stepper", {"dt", "t_end", "scheme", "cfl_safety", "dealias", "equation", "record_every", "l2_ceiling"}},
      {"initial", {"kind", "k1", "k2", "amplitude", "phase", "spectrum_decay", "l2", "mean", "file"}},
      {"picard", {"nodes", "max_iters", "tol", "T", "bilinear_pairs", "bilinear_nodes"}},
      {"envelopes", {"t_min", "t_max", "global_t_max", "count", "s", "T1", "T2"}},
      {"dissipation", {"amplitudes", "s_per_period", "t_count", "probes", "max_iters", "rtol", "dt"}},
      {"decay", {"mu", "tau_star"}},
      {"global", {"amplitude", "growth_factor", "bounded_factor"}},
  };
  return s;
}

namespace detail {

template <class T>
void positive(T x, const std::string& where) {
  if (!(x > T{})) throw ConfigError(where + " must be positive");
}

}  // namespace detail

/// Parses and validates an INI-style config; nothing is computed here.
inline ExperimentConfig parse_config(const std::string& text, const std::filesystem::path& base_dir = ".") {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    std::istringstream in(text);
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config syntax: ") + e.what());
  }

  const auto& sch = schema();
  for (const auto& [section, body] : tree) {
    if (!body.data().empty()) throw ConfigError("key '" + section + "' outside any section");
    auto it = sch.find(section);
    if (it == sch.end()) throw ConfigError("unknown section [" + section + "]");
    for (const auto& [key, val] : body) {
      if (!it->second.count(key)) throw ConfigError("unknown key '" + key + "' in [" + section + "]");
      if (!val.empty()) throw ConfigError("nested value under " + section + "." + key);
    }
  }

  ExperimentConfig c;
  c.text = text;
  c.base_dir = base_dir;
  auto get = [&](const std::string& sec, const std::string& key) -> std::optional<std::string> {
    if (auto v = tree.get_optional<std::string>(pt::ptree::path_type(sec + "/" + key, '/'))) return detail::trim(*v);
    return std::nullopt;
  };
  auto real = [&](const std::string& sec, const std::string& key, double& dst) {
    if (auto v = get(sec, key)) dst = parse_real(*v, sec + "." + key);
  };
  auto integer = [&](const std::string& sec, const std::string& key, auto& dst) {
    if (auto v = get(sec, key)) {
      const long long x = parse_int(*v, sec + "." + key);
      using T = std::remove_reference_t<decltype(dst)>;
      if (x < 0 && std::is_unsigned_v<T>) throw ConfigError(sec + "." + key + " must be >= 0");
      dst = static_cast<T>(x);
    }
  };
  auto text_key = [&](const std::string& sec, const std::string& key, std::string& dst) {
    if (auto v = get(sec, key)) dst = *v;
  };

  if (auto v = get("experiment", "name")) c.experiment = experiment_from_string(*v);
  else throw ConfigError("missing experiment.name");
  integer("experiment", "seed", c.seed);
  text_key("experiment", "output", c.output);

  real("grid", "L1", c.grid.L1);
  real("grid", "L2", c.grid.L2);
  integer("grid", "N1", c.grid.N1);
  integer("grid", "N2", c.grid.N2);
  detail::positive(c.grid.L1, "grid.L1");
  detail::positive(c.grid.L2, "grid.L2");
  for (int n : {c.grid.N1, c.grid.N2})
    if (n < 8 || n % 2 != 0) throw ConfigError("grid.N1 and grid.N2 must be even and >= 8");

  if (auto v = get("flow", "kind")) {
    try {
      c.flow.kind = flow_kind_from_string(*v);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("flow.kind: ") + e.what());
    }
  }
  if (c.flow.kind == FlowKind::user_spectral) c.flow.amplitude = 1.0;  // multiplies the file's modes
  real("flow", "amplitude", c.flow.amplitude);
  real("flow", "period", c.flow.period);
  real("flow", "phase", c.flow.phase);
  real("flow", "phase_b", c.flow.phase_b);
  text_key("flow", "file", c.flow.file);
  detail::positive(c.flow.period, "flow.period");
  if (c.flow.kind == FlowKind::user_spectral && c.flow.file.empty())
    throw ConfigError("flow.kind = user_spectral needs flow.file");

  real("stepper", "dt", c.stepper.dt);
  real("stepper", "t_end", c.stepper.t_end);
  real("stepper", "cfl_safety", c.stepper.cfl_safety);
  real("stepper", "l2_ceiling", c.l2_ceiling);
  integer("stepper", "record_every", c.record_every);
  if (auto v = get("stepper", "dealias")) c.stepper.dealias = parse_bool(*v, "stepper.dealias");
  if (auto v = get("stepper", "scheme")) {
    if (*v == "IF_RK4") c.stepper.scheme = Scheme::IF_RK4;
    else if (*v == "IF_Euler") c.stepper.scheme = Scheme::IF_Euler;
    else throw ConfigError("stepper.scheme must be IF_RK4 or IF_Euler");
  }
  if (auto v = get("stepper", "equation")) {
    static const std::map<std::string, Equation> eqs{{"full", Equation::full},
                                                     {"projected", Equation::projected},
                                                     {"linear_ks", Equation::linear_ks},
                                                     {"advection_hyper", Equation::advection_hyper}};
    auto it = eqs.find(*v);
    if (it == eqs.end()) throw ConfigError("stepper.equation must be full, projected, linear_ks or advection_hyper");
    c.equation = it->second;
  }
  detail::positive(c.stepper.dt, "stepper.dt");
  if (!(c.stepper.t_end >= 0.0)) throw ConfigError("stepper.t_end must be >= 0");
  if (!(c.stepper.cfl_safety > 0.0 && c.stepper.cfl_safety <= 1.0))
    throw ConfigError("stepper.cfl_safety must lie in (0, 1]");
  detail::positive(c.l2_ceiling, "stepper.l2_ceiling");

  if (auto v = get("initial", "kind")) {
    if (*v == "zero") c.initial.kind = InitialKind::zero;
    else if (*v == "single_mode") c.initial.kind = InitialKind::single_mode;
    else if (*v == "random") c.initial.kind = InitialKind::random;
    else if (*v == "file") c.initial.kind = InitialKind::file;
    else throw ConfigError("initial.kind must be zero, single_mode, random or file");
  }
  integer("initial", "k1", c.initial.k1);
  integer("initial", "k2", c.initial.k2);
  real("initial", "amplitude", c.initial.amplitude);
  real("initial", "phase", c.initial.phase);
  real("initial", "spectrum_decay", c.initial.spectrum_decay);
  real("initial", "l2", c.initial.l2);
  real("initial", "mean", c.initial.mean);
  text_key("initial", "file", c.initial.file);
  if (c.initial.kind == InitialKind::file && c.initial.file.empty())
    throw ConfigError("initial.kind = file needs initial.file");
  if (!(c.initial.l2 >= 0.0)) throw ConfigError("initial.l2 must be >= 0");
  if (!(c.initial.spectrum_decay >= 0.0)) throw ConfigError("initial.spectrum_decay must be >= 0");
  if (c.initial.kind == InitialKind::single_mode) {
    if (std::abs(c.initial.k1) > (c.grid.N1 - 1) / 3 || std::abs(c.initial.k2) > (c.grid.N2 - 1) / 3)
      throw ConfigError("initial mode lies outside the retained lattice");
  }

  integer("picard", "nodes", c.picard_nodes);
  integer("picard", "max_iters", c.picard_max_iters);
  real("picard", "tol", c.picard_tol);
  real("picard", "T", c.picard_T);
  integer("picard", "bilinear_pairs", c.bilinear_pairs);
  integer("picard", "bilinear_nodes", c.bilinear_nodes);
  if (c.picard_nodes < 16) throw ConfigError("picard.nodes must be >= 16");
  detail::positive(c.picard_max_iters, "picard.max_iters");
  detail::positive(c.picard_tol, "picard.tol");
  if (!(c.picard_T >= 0.0 && c.picard_T <= 1.0)) throw ConfigError("picard.T must lie in [0, 1] (0: automatic)");
  detail::positive(c.bilinear_pairs, "picard.bilinear_pairs");
  if (c.bilinear_nodes < 16) throw ConfigError("picard.bilinear_nodes must be >= 16");

  real("envelopes", "t_min", c.env_t_min);
  real("envelopes", "t_max", c.env_t_max);
  real("envelopes", "global_t_max", c.env_global_t_max);
  integer("envelopes", "count", c.env_count);
  real("envelopes", "s", c.env_s);
  real("envelopes", "T1", c.env_T1);
  real("envelopes", "T2", c.env_T2);
  if (!(c.env_t_min > 0.0 && c.env_t_min < c.env_t_max && c.env_t_max < 1.0))
    throw ConfigError("envelopes: need 0 < t_min < t_max < 1");
  if (!(c.env_global_t_max > c.env_t_min)) throw ConfigError("envelopes.global_t_max must exceed t_min");
  if (c.env_count < 2) throw ConfigError("envelopes.count must be >= 2");
  detail::positive(c.env_s, "envelopes.s");
  detail::positive(c.env_T1, "envelopes.T1");
  detail::positive(c.env_T2, "envelopes.T2");

  if (auto v = get("dissipation", "amplitudes")) c.amplitudes = parse_real_list(*v, "dissipation.amplitudes");
  integer("dissipation", "s_per_period", c.s_per_period);
  integer("dissipation", "t_count", c.t_count);
  integer("dissipation", "probes", c.probes);
  integer("dissipation", "max_iters", c.power_max_iters);
  real("dissipation", "rtol", c.power_rtol);
  real("dissipation", "dt", c.propagation_dt);
  for (double a : c.amplitudes)
    if (!(a >= 0.0)) throw ConfigError("dissipation.amplitudes must be >= 0");
  detail::positive(c.s_per_period, "dissipation.s_per_period");
  if (c.t_count < 2) throw ConfigError("dissipation.t_count must be >= 2");
  if (c.probes < 64) throw ConfigError("dissipation.probes must be >= 64");
  detail::positive(c.power_max_iters, "dissipation.max_iters");
  detail::positive(c.power_rtol, "dissipation.rtol");
  detail::positive(c.propagation_dt, "dissipation.dt");

  real("decay", "mu", c.mu);
  real("decay", "tau_star", c.tau_star);
  if (!(c.mu >= 0.0)) throw ConfigError("decay.mu must be >= 0 (0: default)");
  if (!(c.tau_star >= 0.0)) throw ConfigError("decay.tau_star must be >= 0 (0: estimate)");

  real("global", "amplitude", c.large_amplitude);
  real("global", "growth_factor", c.growth_factor);
  real("global", "bounded_factor", c.bounded_factor);
  detail::positive(c.large_amplitude, "global.amplitude");
  detail::positive(c.growth_factor, "global.growth_factor");
  detail::positive(c.bounded_factor, "global.bounded_factor");
  return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.parent_path().empty() ? std::filesystem::path(".") : path.parent_path());
}

inline std::filesystem::path resolve(const ExperimentConfig& c, const std::string& p) {
  const std::filesystem::path q(p);
  return q.is_absolute() ? q : c.base_dir / q;
}

/// Velocity field for the configured flow kind at amplitude A.
inline VelocityField make_flow(const ExperimentConfig& c, double A) {
  switch (c.flow.kind) {
    case FlowKind::zero: return VelocityField::zero();
    case FlowKind::steady_shear: return VelocityField::steady_shear(A, c.flow.phase);
    case FlowKind::alternating_shear:
      return VelocityField::alternating_shear(A, c.flow.period, c.flow.phase, c.flow.phase_b);
    case FlowKind::cellular: return VelocityField::cellular(A);
    case FlowKind::user_spectral: {
      try {
        return load_user_flow(resolve(c, c.flow.file).string(), c.grid.L1, c.grid.L2).scaled(A);
      } catch (const std::exception& e) {
        throw ConfigError(std::string("flow.file: ") + e.what());
      }
    }
  }
  return VelocityField::zero();
}

inline VelocityField make_flow(const ExperimentConfig& c) { return make_flow(c, c.flow.amplitude); }

}  // namespace ksadv::cli
