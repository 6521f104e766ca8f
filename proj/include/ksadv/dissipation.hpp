#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "ksadv/field.hpp"
#include "ksadv/flows.hpp"
#include "ksadv/integrator.hpp"
#include "ksadv/parallel.hpp"
#include "ksadv/random.hpp"

namespace ksadv {

// ---------------------------------------------------------------------------
// Threshold times

/// T0(B) = int_{B^2}^{4B^2} dy / (C y + C y^3): time before ||psi|| can double.
inline double T0(double B, double C) {
  if (!(C > 0.0) || !(B >= 0.0)) throw std::invalid_argument("T0: need B >= 0, C > 0");
  const double b4 = B * B * B * B;
  // ln y - ln(1 + y^2)/2 between B^2 and 4 B^2
  return (std::log(16.0) + std::log1p(b4) - std::log1p(16.0 * b4)) / (2.0 * C);
}

inline double T1(double B, double C, double mu) {
  if (!(C > 0.0) || !(B >= 0.0) || !(mu >= 0.0)) throw std::invalid_argument("T1: need B >= 0, C > 0, mu >= 0");
  const double q = 2.0 * mu + 4.0 * C + 64.0 * C * std::pow(B, 4);
  return 1.0 / (4.0 * C * q * B + 4.0 * C * std::sqrt(q));
}

struct Thresholds {
  double T0 = 0.0, T1 = 0.0, quarter_inv_mu = 0.0;
  double min() const { return std::min({T0, T1, quarter_inv_mu}); }
};

inline Thresholds thresholds(double B, double C, double mu) {
  if (!(mu > 0.0)) throw std::invalid_argument("thresholds: mu must be positive");
  return {T0(B, C), T1(B, C, mu), 1.0 / (4.0 * mu)};
}

/// tau* <= min(T0(B), T1(B), 1/(4 mu)).
inline bool tau_star_condition(double B, double C, double mu, double tau_star) {
  return tau_star <= thresholds(B, C, mu).min();
}

// ---------------------------------------------------------------------------
// Dissipation time

enum class NormMethod { power_iteration, random_probe };

inline std::string_view to_string(NormMethod m) {
  return m == NormMethod::power_iteration ? "power_iteration" : "random_probe";
}

struct DissipationEstimate {
  std::string flow;
  double amplitude = 0.0;
  double tau_star = std::numeric_limits<double>::infinity();
  bool crossed = false;
  std::vector<double> s_samples;
  std::vector<double> t_grid;  // evaluated times, increasing, starting at 0
  // norm_curve[i][j]: estimate of ||S_{s_i, s_i + t_j}|| on mean-free L2
  std::vector<std::vector<double>> norm_curve;
  std::vector<double> max_curve;
  NormMethod method = NormMethod::power_iteration;
  std::size_t fallbacks = 0;
};

enum class TauSearch {
  bracket,  // bisection over the grid; the true norm is nonincreasing in t
  sweep     // every grid time in order
};

struct TauStarOptions {
  std::size_t probes = 64;
  std::size_t max_iters = 50;
  double rtol = 1e-6;
  /// Largest step; the CFL limit times cfl_fraction caps it further.
  double dt = 1e-2;
  double cfl_fraction = 0.5;
  std::uint64_t seed = 1;
  TauSearch search = TauSearch::bracket;
  /// sweep only: stop once the max over s has dropped to 1/2.
  bool stop_at_crossing = true;
};

/// ln 2 / kappa0^4: the dissipation time without a flow. Advection is skew,
/// so every divergence-free flow does at least as well.
inline double pure_hyper_tau(const TorusGrid& g) { return std::numbers::ln2 / std::pow(g.kappa0(), 4); }

/// Geometric grid from tau0/500 to 1.25 tau0 with tau0 = pure_hyper_tau; t = 0 prepended.
inline std::vector<double> default_t_grid(const TorusGrid& g, std::size_t count = 64) {
  const double hi = 1.25 * pure_hyper_tau(g), lo = pure_hyper_tau(g) / 500.0;
  std::vector<double> t{0.0};
  for (std::size_t i = 0; i < count; ++i)
    t.push_back(lo * std::pow(hi / lo, static_cast<double>(i) / static_cast<double>(count - 1)));
  return t;
}

/// One start time for autonomous flows, `per_period` evenly spaced ones otherwise.
inline std::vector<double> default_s_grid(const VelocityField& v, std::size_t per_period = 16) {
  if (!v.time_periodic()) return {0.0};
  std::vector<double> s;
  for (std::size_t i = 0; i < per_period; ++i)
    s.push_back(v.switching_period() * static_cast<double>(i) / static_cast<double>(per_period));
  return s;
}

inline double propagation_dt(const VelocityField& v, const TorusGrid& g, const TauStarOptions& opt) {
  StepperConfig c;
  c.cfl_safety = opt.cfl_fraction;
  return std::min(opt.dt, cfl_limit(c, g, v.amplitude()));
}

namespace detail {

inline SpectralField unit_probe(const GridPtr& g, std::mt19937_64& rng) { return random_field(g, rng, 0.0, 1.0); }

struct NormResult {
  double norm = 0.0;
  bool converged = false;
};

// Power iteration on S*S for S = S_{s, s+t}; x is the warm start and returns the last iterate.
inline NormResult power_norm(const VelocityField& v, double s, double t, SpectralField& x, double dt,
                             const TauStarOptions& opt) {
  double prev = -1.0;
  for (std::size_t k = 0; k < opt.max_iters; ++k) {
    const auto y = linear_propagator_S(s, s + t, x, v, dt);
    const double lam = inner(y, y);
    if (lam == 0.0) return {0.0, true};
    auto z = adjoint_propagator_S(s, s + t, y, v, dt);
    const double nz = l2_norm(z);
    if (nz == 0.0) return {std::sqrt(lam), true};
    x = (1.0 / nz) * z;
    if (prev >= 0.0 && std::abs(lam - prev) <= opt.rtol * lam) return {std::sqrt(lam), true};
    prev = lam;
  }
  return {std::sqrt(std::max(prev, 0.0)), false};
}

inline double probe_norm(const VelocityField& v, double s, double t, const GridPtr& g, double dt,
                         std::mt19937_64& rng, std::size_t probes) {
  double best = 0.0;
  for (std::size_t p = 0; p < probes; ++p)
    best = std::max(best, l2_norm(linear_propagator_S(s, s + t, unit_probe(g, rng), v, dt)));
  return best;
}

}  // namespace detail

/// Estimates tau* = inf{t : ||S_{s,s+t}|| <= 1/2 for all sampled s}.
/// Each norm comes from power iteration on S*S, warm-started from the
/// nearest time already evaluated; a non-converged iteration is replaced by
/// the best of `probes` random unit fields, which is only a lower bound.
/// tau* is interpolated linearly in log-norm between the last grid time
/// above 1/2 and the first one at or below it.
inline DissipationEstimate estimate_tau_star(const VelocityField& v, const GridPtr& grid, std::vector<double> t_grid = {},
                                             std::vector<double> s_grid = {}, TauStarOptions opt = {}) {
  if (t_grid.empty()) t_grid = default_t_grid(*grid);
  if (s_grid.empty()) s_grid = default_s_grid(v);
  if (t_grid.front() != 0.0) t_grid.insert(t_grid.begin(), 0.0);
  for (std::size_t j = 1; j < t_grid.size(); ++j)
    if (!(t_grid[j] > t_grid[j - 1])) throw std::invalid_argument("estimate_tau_star: t_grid must increase");
  if (opt.probes < 64) throw std::invalid_argument("estimate_tau_star: need at least 64 probes");

  DissipationEstimate est;
  est.flow = v.id();
  est.amplitude = v.amplitude();
  est.s_samples = s_grid;
  const double dt = propagation_dt(v, *grid, opt);
  const std::size_t ns = s_grid.size(), nt = t_grid.size();

  std::vector<std::mt19937_64> rngs;
  for (std::size_t i = 0; i < ns; ++i) rngs.push_back(stream_rng(opt.seed, i));
  // evaluated grid index -> (per-s norms, per-s final iterates)
  std::map<std::size_t, std::vector<double>> cols;
  std::map<std::size_t, std::vector<SpectralField>> vecs;
  cols[0] = std::vector<double>(ns, 1.0);
  vecs[0] = {};
  for (std::size_t i = 0; i < ns; ++i) vecs[0].push_back(detail::unit_probe(grid, rngs[i]));
  std::vector<char> fell_back(ns, 0);

  auto max_at = [&](std::size_t j) {
    if (!cols.count(j)) {
      auto near = vecs.lower_bound(j);
      if (near == vecs.end() || (near != vecs.begin() && j - std::prev(near)->first < near->first - j)) --near;
      std::vector<SpectralField> x = near->second;
      std::vector<double> col(ns);
      parallel_for(ns, [&](std::size_t i) {
        auto r = detail::power_norm(v, s_grid[i], t_grid[j], x[i], dt, opt);
        if (!r.converged) {
          r.norm = std::max(r.norm, detail::probe_norm(v, s_grid[i], t_grid[j], grid, dt, rngs[i], opt.probes));
          fell_back[i] = 1;
        }
        col[i] = r.norm;
      });
      cols[j] = std::move(col);
      vecs[j] = std::move(x);
    }
    return *std::max_element(cols[j].begin(), cols[j].end());
  };

  std::optional<std::size_t> first_below;
  if (opt.search == TauSearch::sweep) {
    for (std::size_t j = 1; j < nt; ++j)
      if (max_at(j) <= 0.5 && !first_below) {
        first_below = j;
        if (opt.stop_at_crossing) break;
      }
  } else if (t_grid.back() >= pure_hyper_tau(*grid) * (1 + 1e-12) || max_at(nt - 1) <= 0.5) {
    // ||S_{s,s+t}|| <= e^{-kappa0^4 t} drops below 1/2 by the pure hyperdiffusion time,
    // so the top of such a grid is a valid upper bracket without evaluating it.
    // invariant: max(lo) > 1/2 >= max(hi)
    std::size_t lo = 0, hi = nt - 1;
    while (hi - lo > 1) {
      const std::size_t mid = lo + (hi - lo) / 2;
      (max_at(mid) <= 0.5 ? hi : lo) = mid;
    }
    max_at(hi - 1);
    first_below = hi;
  }

  for (const auto& [j, col] : cols) {
    est.t_grid.push_back(t_grid[j]);
    est.max_curve.push_back(*std::max_element(col.begin(), col.end()));
  }
  est.norm_curve.assign(ns, {});
  for (std::size_t i = 0; i < ns; ++i)
    for (const auto& [j, col] : cols) est.norm_curve[i].push_back(col[i]);

  if (first_below) {
    const std::size_t j = *first_below;
    est.crossed = true;
    const double m0 = max_at(j - 1), m = max_at(j), t0 = t_grid[j - 1], t = t_grid[j];
    if (m <= 0.0 || m0 <= 0.5) {
      est.tau_star = m0 <= 0.5 ? t0 : t;
    } else {
      const double a = std::log(m0), b = std::log(m);
      est.tau_star = t0 + (std::log(0.5) - a) / (b - a) * (t - t0);
    }
  }
  for (char f : fell_back) est.fallbacks += f;
  if (est.fallbacks > 0) est.method = NormMethod::random_probe;
  return est;
}

// ---------------------------------------------------------------------------
// Constant of the energy estimate for N

struct NConstant {
  double C = 0.0;
  double argmax_l2 = 0.0;
  std::size_t samples = 0;
};

struct NConstantOptions {
  std::size_t fields = 48;
  std::size_t amplitudes = 25;
  double min_l2 = 1e-3, max_l2 = 1e3;
  std::uint64_t seed = 1;
};

/// |int psi N(psi)| for mean-free psi, with N(psi) = |grad psi|^2/2 - ||grad psi||^2/2 + Delta psi.
/// The constant term integrates against a mean-free psi to zero.
inline double psi_N_pairing(const SpectralField& psi) {
  const double g2 = std::pow(hs_seminorm(psi, 1.0), 2);
  return std::abs(0.5 * detail::cubic_integral(psi) - g2);
}

/// Smallest C compatible with
///   |int psi N(psi)| <= ||Delta psi||^2 / 2 + C ||psi||^2 + C ||psi||^6
/// over a randomized family: single lattice modes and random fields at
/// log-spaced amplitudes. This is a measured lower bound on the admissible C.
inline NConstant measure_N_constant(const GridPtr& grid, NConstantOptions opt = {}) {
  NConstant out;
  std::vector<SpectralField> shapes;
  for (int k1 = 0; k1 <= 3; ++k1)
    for (int k2 = -3; k2 <= 3; ++k2) {
      if (k1 == 0 && k2 <= 0) continue;
      if (std::abs(k1) > grid->cutoff1() || std::abs(k2) > grid->cutoff2()) continue;
      auto f = single_mode(grid, k1, k2, 1.0);
      shapes.push_back((1.0 / l2_norm(f)) * f);
    }
  auto rng = stream_rng(opt.seed, 0);
  std::uniform_real_distribution<double> udecay(0.0, 0.5);
  for (std::size_t i = 0; i < opt.fields; ++i) shapes.push_back(random_field(grid, rng, udecay(rng), 1.0));

  for (const auto& shape : shapes) {
    const double g2 = std::pow(hs_seminorm(shape, 1.0), 2), l2 = std::pow(hs_seminorm(shape, 2.0), 2);
    const double cub = detail::cubic_integral(shape);
    for (std::size_t a = 0; a < opt.amplitudes; ++a) {
      const double r = opt.min_l2 * std::pow(opt.max_l2 / opt.min_l2,
                                             static_cast<double>(a) / static_cast<double>(opt.amplitudes - 1));
      // psi = r * shape: quadratic terms scale by r^2, the cubic one by r^3
      const double pair = std::abs(0.5 * r * r * r * cub - r * r * g2);
      const double need = (pair - 0.5 * r * r * l2) / (r * r + std::pow(r, 6));
      ++out.samples;
      if (need > out.C) {
        out.C = need;
        out.argmax_l2 = r;
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Windowed decay certificates

enum class DecayBranch { h2_large, h2_small, inapplicable };

inline std::string_view to_string(DecayBranch b) {
  switch (b) {
    case DecayBranch::h2_large: return "h2_large";
    case DecayBranch::h2_small: return "h2_small";
    default: return "inapplicable";
  }
}

struct DecayCertificate {
  double t0 = 0.0;
  double B = 0.0;
  double T0_B = 0.0, T1_B = 0.0;
  double tau_star = 0.0;
  DecayBranch branch = DecayBranch::inapplicable;
  double mu = 0.0;
  double C = 0.0;
  double observed_factor = 0.0;
  double predicted_factor = 0.0;  // e^{-mu tau*}
  double h2_average = 0.0;        // (1/tau*) int ||Delta psi||^2 over the window
  double h2_threshold = 0.0;      // 2 mu B^2 + 4 C B^2 + 64 C B^6
  bool no_doubling = true;        // ||psi|| <= 2 B on the covered part of [t0, t0 + T0(B)]
  bool certified = false;
  std::string reason;
};

namespace detail {

// Index of the last step time <= t (times sorted).
inline std::size_t bracket(const std::vector<double>& times, double t) {
  auto it = std::upper_bound(times.begin(), times.end(), t);
  return it == times.begin() ? 0 : static_cast<std::size_t>(it - times.begin()) - 1;
}

// ||psi(t)|| between step times, log-linear in the squared norm.
inline double l2_at(const RunResult& r, double t) {
  const std::size_t i = bracket(r.times, t);
  if (i + 1 >= r.times.size() || t <= r.times[i]) return std::sqrt(r.l2sq[i]);
  const double a = r.l2sq[i], b = r.l2sq[i + 1];
  const double w = (t - r.times[i]) / (r.times[i + 1] - r.times[i]);
  if (a > 0.0 && b > 0.0) return std::sqrt(std::exp((1.0 - w) * std::log(a) + w * std::log(b)));
  return std::sqrt((1.0 - w) * a + w * b);
}

// int_0^t ||Delta psi||^2, trapezoid on the step grid and linear inside a step.
inline double cum_h2(const RunResult& r, double t) {
  double s = 0.0;
  for (std::size_t k = 1; k < r.times.size(); ++k) {
    const double a = r.times[k - 1], b = r.times[k];
    if (t <= a) break;
    if (t >= b) {
      s += 0.5 * (b - a) * (r.lap2[k - 1] + r.lap2[k]);
    } else {
      const double w = (t - a) / (b - a);
      const double mid = (1.0 - w) * r.lap2[k - 1] + w * r.lap2[k];
      s += 0.5 * (t - a) * (r.lap2[k - 1] + mid);
    }
  }
  return s;
}

inline void require_projected(const RunResult& r) {
  if (r.times.empty()) throw std::invalid_argument("certificate: empty run");
  if (std::abs(r.final_state.mean()) > 1e-10 * std::max(1.0, r.final_state.max_abs()))
    throw std::invalid_argument("certificate: run must be of the mean-free (projected) equation");
}

}  // namespace detail

/// Certificate for the window [t0, t0 + tau*] of a mean-free run.
inline DecayCertificate certify_window(const RunResult& run, double t0, double mu, double C, double tau_star,
                                       double tol = 1e-12) {
  detail::require_projected(run);
  DecayCertificate c;
  c.t0 = t0;
  c.mu = mu;
  c.C = C;
  c.tau_star = tau_star;
  c.B = detail::l2_at(run, t0);
  const auto th = thresholds(c.B, C, mu);
  c.T0_B = th.T0;
  c.T1_B = th.T1;
  c.predicted_factor = std::exp(-mu * tau_star);
  const double t1 = t0 + tau_star;
  if (t1 > run.times.back() + 1e-12) {
    c.reason = "trajectory ends before the window does";
    return c;
  }
  const double end = detail::l2_at(run, t1);
  c.observed_factor = c.B > 0.0 ? end / c.B : 0.0;
  c.h2_average = (detail::cum_h2(run, t1) - detail::cum_h2(run, t0)) / tau_star;
  const double B2 = c.B * c.B;
  c.h2_threshold = 2.0 * mu * B2 + 4.0 * C * B2 + 64.0 * C * B2 * B2 * B2;

  const double horizon = std::min(t0 + th.T0, run.times.back());
  for (std::size_t k = detail::bracket(run.times, t0); k < run.times.size() && run.times[k] <= horizon; ++k)
    if (run.times[k] >= t0 && std::sqrt(run.l2sq[k]) > 2.0 * c.B * (1.0 + tol)) c.no_doubling = false;

  if (!(tau_star <= th.min())) {
    c.reason = "tau* = " + std::to_string(tau_star) + " exceeds min(T0, T1, 1/(4 mu)) = " + std::to_string(th.min());
    return c;
  }
  c.branch = c.h2_average >= c.h2_threshold ? DecayBranch::h2_large : DecayBranch::h2_small;
  if (c.B == 0.0) {
    c.certified = true;
    c.reason = "zero data";
    return c;
  }
  const bool decays = c.observed_factor <= c.predicted_factor + tol;
  c.certified = decays && c.no_doubling;
  if (!decays) c.reason = "observed factor above e^{-mu tau*}";
  else if (!c.no_doubling) c.reason = "norm doubled within T0(B)";
  return c;
}

struct CertificateChain {
  std::vector<DecayCertificate> windows;
  bool all_certified = false;
  double factor_product = 1.0;  // product of observed factors
  double end_ratio = 0.0;       // ||psi(t0 + n tau*)|| / ||psi(t0)||
  double C0 = std::exp(0.25);
  // sup over covered t of ||psi(t0 + t)|| / (C0 e^{-mu t} ||psi(t0)||); <= 1 when the global bound holds
  double envelope_ratio = 0.0;
};

/// Consecutive windows [t0 + k tau*, t0 + (k + 1) tau*] for as long as the run covers them.
inline CertificateChain certify_chain(const RunResult& run, double t0, double mu, double C, double tau_star,
                                      std::size_t max_windows = std::numeric_limits<std::size_t>::max()) {
  detail::require_projected(run);
  if (!(tau_star > 0.0)) throw std::invalid_argument("certify_chain: tau* must be positive");
  CertificateChain ch;
  const double eps = 1e-9 * tau_star;
  for (std::size_t k = 0; k < max_windows; ++k) {
    const double s = t0 + static_cast<double>(k) * tau_star;
    if (s + tau_star > run.times.back() + eps) break;
    ch.windows.push_back(certify_window(run, s, mu, C, tau_star));
    ch.factor_product *= ch.windows.back().observed_factor;
  }
  ch.all_certified = !ch.windows.empty() &&
                     std::all_of(ch.windows.begin(), ch.windows.end(), [](const auto& w) { return w.certified; });
  const double B0 = detail::l2_at(run, t0);
  if (!ch.windows.empty() && B0 > 0.0) {
    ch.end_ratio = detail::l2_at(run, t0 + static_cast<double>(ch.windows.size()) * tau_star) / B0;
    for (std::size_t k = detail::bracket(run.times, t0); k < run.times.size(); ++k) {
      if (run.times[k] < t0) continue;
      const double env = ch.C0 * std::exp(-mu * (run.times[k] - t0)) * B0;
      ch.envelope_ratio = std::max(ch.envelope_ratio, std::sqrt(run.l2sq[k]) / env);
    }
  }
  return ch;
}

// ---------------------------------------------------------------------------
// A-priori bound on phi

struct GlobalBound {
  double C1 = 0.0;
  double sup_phi = 0.0;
  bool holds = false;
  double psi_term = 0.0, mean_term = 0.0;
};

/// For a projected run of psi with initial mean `mean0` of phi:
///   C1 = C0 ||psi0|| + sqrt(|T|) (|mean0| + int ||Delta psi||^2 / (2 lambda1 |T|))
/// with lambda1 = kappa0^2 and the measured dissipation integral, against
/// sup_t ||phi(t)|| where the mean is rebuilt from d/dt int phi = -||grad psi||^2 / 2.
inline GlobalBound global_bound(const RunResult& run, double mean0, double C0 = std::exp(0.25)) {
  detail::require_projected(run);
  const auto& g = run.final_state.grid();
  const double area = g.area(), lambda1 = g.kappa0() * g.kappa0();
  GlobalBound gb;
  const double diss = detail::cum_h2(run, run.times.back());
  gb.psi_term = C0 * std::sqrt(run.l2sq.front());
  gb.mean_term = std::sqrt(area) * (std::abs(mean0) + diss / (2.0 * lambda1 * area));
  gb.C1 = gb.psi_term + gb.mean_term;
  const auto mp = evolve_mean(run, mean0);
  for (std::size_t k = 0; k < run.times.size(); ++k)
    gb.sup_phi = std::max(gb.sup_phi, std::sqrt(run.l2sq[k] + area * mp.average[k] * mp.average[k]));
  gb.holds = gb.sup_phi <= gb.C1 * (1.0 + 1e-12);
  return gb;
}

}  // namespace ksadv
