// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.
// Optional arguments select criteria by number, e.g. `acceptance 1 8 12`.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "ksadv/dissipation.hpp"
#include "ksadv/fit.hpp"
#include "ksadv/mild.hpp"
#include "ksadv/random.hpp"

using namespace ksadv;

namespace {
constexpr double pi = std::numbers::pi;

struct Verdict {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

SpectralField rand_field(const GridPtr& g, std::uint64_t seed, double l2, double decay = 0.05) {
  auto rng = stream_rng(seed, 0);
  return random_field(g, rng, decay, l2);
}

StepperConfig stepper(double dt, double t_end) {
  StepperConfig c;
  c.dt = dt;
  c.t_end = t_end;
  return c;
}

// 1. one linear IF-RK4 step is the exact multiplier
Verdict exact_semigroup_step() {
  const auto t0 = Clock::now();
  auto g = make_grid(4 * pi, 3 * pi, 32, 32);
  double worst = 0.0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto f = rand_field(g, 100 + s, 1.0, 0.01);
    const auto a = step(f, VelocityField::zero(), 0.0, stepper(0.05, 1.0), Equation::linear_ks);
    const auto b = apply_semigroup(SymbolKind::full_L, 0.05, f);
    worst = std::max(worst, l2_norm(a - b) / l2_norm(b));
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-13 && secs < 60.0, fmt("max relative error %.2e over 20 fields (<= 1e-13), %.1f s", worst, secs)};
}

// 2. the (1,0) mode on the 4 pi box grows at -sigma(1/2) = 3/16
Verdict growing_mode_rate() {
  auto g = make_grid(4 * pi, 4 * pi, 32, 32);
  RunOptions opt;
  opt.keep_states = true;
  const auto r = simulate(rand_field(g, 2, 1e-3), VelocityField::zero(), stepper(0.05, 5.0), Equation::linear_ks, opt);
  std::vector<double> amp;
  for (const auto& s : r.states) amp.push_back(std::abs(s.at(1, 0)));
  const double rate = exp_rate(r.times, amp, 0.0, 5.0);
  const double rel = std::abs(rate - 3.0 / 16.0) / (3.0 / 16.0);
  return {rel <= 5e-3, fmt("fitted rate %.10f vs 3/16, relative error %.2e (<= 5e-3)", rate, rel)};
}

// 3. linear decay on the pi box at beta = 12
Verdict decay_rate_pi_box() {
  auto g = make_grid(pi, pi, 32, 32);
  const auto r = simulate(rand_field(g, 3, 1.0, 0.0), VelocityField::zero(), stepper(0.01, 1.0), Equation::linear_ks);
  std::vector<double> t, y;
  for (const auto& rec : r.records) {
    t.push_back(rec.t);
    y.push_back(rec.l2);
  }
  const double rate = -exp_rate(t, y, 0.5, 1.0);
  const double rel = std::abs(rate - 12.0) / 12.0;
  return {rate >= 12.0 * (1 - 0.02) && rel <= 0.02,
          fmt("fitted decay rate %.8f vs beta = 12, relative deviation %.2e (<= 2e-2)", rate, rel)};
}

// 4. energy identity for a resolved nonlinear run
Verdict energy_identity() {
  const auto t0 = Clock::now();
  auto g = make_grid(2 * pi, 2 * pi, 64, 64);
  const auto psi0 = rand_field(g, 4, 0.1, 0.3);
  RunOptions opt;
  opt.record_every = 100;
  const auto r = simulate(psi0, VelocityField::zero(), stepper(1e-4, 1.0), Equation::full, opt);
  double worst = 0.0;
  for (const auto& rec : r.records) worst = std::max(worst, std::abs(rec.energy_residual));
  const double tol = 1e-6 * std::max(1.0, std::pow(l2_norm(psi0), 2));
  const double secs = seconds_since(t0);
  return {!r.diverged && worst <= tol && secs < 60.0,
          fmt("max |residual| %.2e (<= %.0e) over [0,1] at N=64, dt=1e-4, %.1f s", worst, tol, secs)};
}

// 5. simulated mean vs. the mean ODE driven by the projected run
Verdict mean_ode() {
  auto g = make_grid(2 * pi, 2 * pi, 32, 32);
  auto psi0 = rand_field(g, 5, 0.4, 0.3);
  auto phi0 = psi0;
  phi0[0] = 0.7;
  const auto v = VelocityField::alternating_shear(1.0, 0.3);
  const auto full = simulate(phi0, v, stepper(2.5e-4, 1.0), Equation::full);
  const auto proj = simulate(psi0, v, stepper(2.5e-4, 1.0), Equation::projected);
  const auto mean = evolve_mean(proj, 0.7);
  if (mean.t.size() != full.records.size()) return {false, "sample times differ"};
  double worst = 0.0;
  for (std::size_t i = 0; i < mean.t.size(); ++i)
    worst = std::max(worst, std::abs(mean.average[i] - full.records[i].mean));
  return {worst <= 1e-8, fmt("max |mean difference| %.2e (<= 1e-8) over %zu times in [0,1], mean drops %.4f -> %.4f",
                             worst, mean.t.size(), mean.average.front(), mean.average.back())};
}

// 6. Picard fixed point vs. the time stepper on the admissible interval
Verdict picard_cross_validation() {
  auto g = make_grid(pi, pi, 32, 32);
  const double C = measured_mild_constant(*g);
  const auto v = VelocityField::steady_shear(1.0);
  auto phi0 = rand_field(g, 6, 0.5);
  phi0[0] = 0.2;
  const double T = admissible_T(l2_norm(phi0), sup_norms(v, *g).l2_sup, C);
  const auto st = picard_iterate(phi0, v, T, {.n_nodes = 128});
  const auto run = simulate(phi0, v, stepper(T / 1000, T));
  const double gap = l2_norm(st.final_state() - run.final_state);
  return {st.converged && st.contraction_ratio < 1.0 && gap <= 1e-6,
          fmt("T = %.5g (C = %.4f), contraction_ratio %.3e, %d iterations, L2 gap %.2e (<= 1e-6)", T, C,
              st.contraction_ratio, st.iterations, gap)};
}

// 7. dissipation time without a flow
Verdict tau_star_no_flow() {
  bool ok = true;
  std::string detail;
  for (double L : {pi, 1.5 * pi}) {
    const auto t0 = Clock::now();
    auto g = make_grid(L, L, 32, 32);
    const auto e = estimate_tau_star(VelocityField::zero(), g);
    const double secs = seconds_since(t0);
    const double want = std::numbers::ln2 / std::pow(2 * pi / L, 4);
    const double rel = std::abs(e.tau_star - want) / want;
    ok = ok && e.crossed && rel <= 0.01 && secs < 60.0;
    detail += fmt("L=%.4f: tau* %.6f vs ln2/kappa0^4 %.6f (rel %.1e, %s, %.1f s); ", L, e.tau_star, want, rel,
                  std::string(to_string(e.method)).c_str(), secs);
  }
  return {ok, detail.substr(0, detail.size() - 2)};
}

// 8. threshold formulas
Verdict threshold_formulas() {
  auto f = [](double y) { return 1.0 / (y + y * y * y); };
  const double quad = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, 1.0, 4.0, 15, 1e-15);
  const double t0 = T0(1.0, 1.0), t1 = T1(1.0, 1.0, 1.0);
  const double e0 = std::max(std::abs(t0 - 0.5 * std::log(32.0 / 17.0)), std::abs(t0 - quad));
  const double e1 = std::abs(t1 - 1.0 / (280.0 + 4.0 * std::sqrt(70.0)));
  return {e0 <= 1e-12 && e1 <= 1e-12,
          fmt("T0(1,1) = %.15f (closed form and quadrature within %.1e), T1(1,1,1) = %.15f (within %.1e)", t0, e0, t1,
              e1)};
}

// 9. enhanced dissipation trend for alternating shear on the 4 pi box
Verdict enhanced_dissipation_trend() {
  const auto t0 = Clock::now();
  auto g = make_grid(4 * pi, 4 * pi, 32, 32);
  std::vector<double> amps{0.0, 10.0, 50.0, 200.0}, taus;
  std::string detail;
  for (double A : amps) {
    const auto v = VelocityField::alternating_shear(A, 0.5);
    const auto e = estimate_tau_star(v, g);
    taus.push_back(e.tau_star);
    detail += fmt("tau*(%g) = %.4g [%s]; ", A, e.tau_star, std::string(to_string(e.method)).c_str());
  }
  bool monotone = true;
  for (std::size_t i = 1; i < taus.size(); ++i) monotone = monotone && taus[i] <= taus[i - 1];
  const double ratio = taus.front() / taus.back();
  const double secs = seconds_since(t0);
  return {ratio >= 5.0 && secs <= 1800.0,
          detail + fmt("reduction %.1fx (>= 5), %s, %.0f s (<= 1800)", ratio, monotone ? "monotone" : "not monotone", secs)};
}

// 10. growth without a flow, bounded and certified with a strong fast flow
Verdict global_existence_with_advection() {
  auto g = make_grid(4 * pi, 4 * pi, 32, 32);
  const auto psi0 = rand_field(g, 7, 0.1);
  const double l0 = l2_norm(psi0), t_end = 50.0;
  RunOptions opt;
  opt.record_every = 0;

  const auto still = simulate(psi0, VelocityField::zero(), stepper(1e-2, t_end), Equation::full, opt);
  double t_grow = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < still.times.size(); ++k)
    if (std::sqrt(still.l2sq[k]) > 3.0 * l0) {
      t_grow = still.times[k];
      break;
    }

  const auto v = VelocityField::alternating_shear(500.0, 0.05);
  const auto est = estimate_tau_star(v, g);
  if (!est.crossed) return {false, "no dissipation time for the stirred flow"};
  const double tau = est.tau_star;
  const double C = measure_N_constant(g).C;
  const double mu = 1.0 / (8.0 * tau);
  StepperConfig sc;
  sc.t_end = t_end;
  sc.dt = tau / std::ceil(tau / cfl_limit(sc, *g, v.amplitude()));
  const auto stirred = simulate(psi0, v, sc, Equation::full, opt);
  double max_ratio = 0.0;
  for (double q : stirred.l2sq) max_ratio = std::max(max_ratio, std::sqrt(q) / l0);
  const auto proj = simulate(psi0, v, sc, Equation::projected, opt);
  const auto ch = certify_chain(proj, 0.0, mu, C, tau);
  const auto gb = global_bound(proj, 0.0, ch.C0);

  const bool grows = t_grow <= t_end;
  const bool bounded = !stirred.diverged && stirred.t_stop == t_end && max_ratio < 1.5;
  const bool certified = ch.all_certified && ch.envelope_ratio <= 1.0 && gb.holds;
  return {grows && bounded && certified,
          fmt("A=0 exceeds 3x at t = %.2f (max %.0fx); A=500 max ratio %.4f (< 1.5); tau* = %.4f, mu = %.4f, C = %.3f; "
              "%zu/%zu windows certified, envelope ratio %.4f (C0 = e^{1/4}), global bound %s",
              t_grow, std::sqrt(*std::max_element(still.l2sq.begin(), still.l2sq.end())) / l0, max_ratio, tau, mu, C,
              static_cast<std::size_t>(std::count_if(ch.windows.begin(), ch.windows.end(),
                                                     [](const auto& w) { return w.certified; })),
              ch.windows.size(), ch.envelope_ratio, gb.holds ? "holds" : "fails")};
}

// 11. small-data decay without a flow on the pi box
Verdict small_data_decay() {
  auto g = make_grid(pi, pi, 32, 32);
  const auto bc = measure_bilinear_constants(g);
  const auto psi0 = rand_field(g, 11, 0.9 * bc.delta);
  RunOptions opt;
  opt.record_every = 10;
  const auto r = simulate(psi0, VelocityField::zero(), stepper(1e-3, 10.0), Equation::projected, opt);
  bool monotone = !r.diverged;
  double prev = std::numeric_limits<double>::infinity();
  for (const auto& rec : r.records) {
    if (rec.t < 0.1 - 1e-12) continue;
    monotone = monotone && rec.l2 <= prev;
    prev = rec.l2;
  }
  const double last = r.records.back().l2;
  return {monotone && last < 1e-6,
          fmt("delta = %.4g (eta = %.4g over %zu pairs), ||psi0|| = %.4g; %s after t=0.1, ||psi(10)|| = %.2e (< 1e-6)",
              bc.delta, bc.eta, bc.pairs, l2_norm(psi0), monotone ? "nonincreasing" : "NOT nonincreasing", last)};
}

// 12. randomized invariant batteries
Verdict invariant_batteries() {
  constexpr int cases = 100;
  std::mt19937_64 rng = stream_rng(12, 0);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  std::normal_distribution<double> nd;
  std::vector<std::string> failed;
  std::ostringstream summary;

  // Plancherel: grid quadrature of f^2 equals the coefficient sum (<= 1e-10 relative)
  double plancherel = 0.0;
  for (int c = 0; c < cases; ++c) {
    const int n1 = 8 + 4 * static_cast<int>(U(rng) * 8), n2 = 8 + 4 * static_cast<int>(U(rng) * 8);
    auto g = make_grid(1.0 + 12.0 * U(rng), 1.0 + 12.0 * U(rng), n1, n2);
    std::vector<double> vals(g->size());
    double sq = 0.0;
    for (auto& x : vals) {
      x = nd(rng);
      sq += x * x;
    }
    const auto f = SpectralField::from_real(g, vals, false);
    const double want = std::sqrt(sq * g->area() / static_cast<double>(vals.size()));
    plancherel = std::max(plancherel, std::abs(l2_norm(f) - want) / want);
  }
  if (plancherel > 1e-10) failed.push_back("Plancherel");
  summary << fmt("Plancherel %.1e; ", plancherel);

  // Hermitian symmetry of transforms of real data and of nonlinear products
  double herm = 0.0;
  for (int c = 0; c < cases; ++c) {
    auto g = make_grid(2 * pi * (0.5 + U(rng)), 2 * pi * (0.5 + U(rng)), 16, 24);
    std::vector<double> vals(g->size());
    for (auto& x : vals) x = nd(rng);
    const auto f = SpectralField::from_real(g, vals);
    herm = std::max(herm, f.hermitian_defect() / f.max_abs());
    const auto p = dealiased_product(rand_field(g, 1000 + c, 1.0), rand_field(g, 2000 + c, 1.0));
    herm = std::max(herm, p.hermitian_defect() / p.max_abs());
    const auto r = rhs_nonlinear(rand_field(g, 3000 + c, 1.0), VelocityField::cellular(1.0), 0.0);
    herm = std::max(herm, r.hermitian_defect() / r.max_abs());
  }
  if (herm > 1e-14) failed.push_back("Hermitian symmetry");
  summary << fmt("Hermitian defect %.1e; ", herm);

  // projection is idempotent and commutes with gradient and multipliers (exactly)
  bool proj_ok = true;
  for (int c = 0; c < cases; ++c) {
    auto g = make_grid(2 * pi * (0.3 + U(rng)), 2 * pi * (0.3 + U(rng)), 16, 16);
    auto f = rand_field(g, 4000 + c, 1.0);
    f[0] = nd(rng);
    const auto p = project_mean_free(f);
    proj_ok = proj_ok && p.mean() == 0.0 && (project_mean_free(p) - p).max_abs() == 0.0;
    for (std::size_t i = 1; i < f.size(); ++i) proj_ok = proj_ok && p[i] == f[i];
    const auto [gx, gy] = gradient(f);
    const auto [px, py] = gradient(p);
    proj_ok = proj_ok && (project_mean_free(gx) - px).max_abs() == 0.0 && (project_mean_free(gy) - py).max_abs() == 0.0;
    const double t = U(rng);
    proj_ok = proj_ok && (project_mean_free(apply_semigroup(SymbolKind::full_L, t, f)) -
                          apply_semigroup(SymbolKind::full_L, t, p)).max_abs() == 0.0;
  }
  if (!proj_ok) failed.push_back("projection idempotence");
  summary << (proj_ok ? "projection exact; " : "projection FAILED; ");

  // semiflow of S: S_{s,t} S_{r,s} = S_{r,t} (<= 1e-10 relative)
  auto gS = make_grid(2 * pi, 2 * pi, 16, 16);
  const std::vector<VelocityField> flows{VelocityField::steady_shear(2.0), VelocityField::alternating_shear(2.0, 0.3),
                                         VelocityField::cellular(2.0)};
  const double dt = 0.01;
  double semiflow = 0.0;
  for (int c = 0; c < cases; ++c) {
    const auto& v = flows[c % 3];
    const int i = static_cast<int>(U(rng) * 20), j = i + 1 + static_cast<int>(U(rng) * 20),
              k = j + 1 + static_cast<int>(U(rng) * 20);
    const double r = i * dt, s = j * dt, t = k * dt;
    const auto f = rand_field(gS, 5000 + c, 1.0, 0.02);
    const auto a = linear_propagator_S(s, t, linear_propagator_S(r, s, f, v, dt), v, dt);
    const auto b = linear_propagator_S(r, t, f, v, dt);
    semiflow = std::max(semiflow, l2_norm(a - b) / l2_norm(f));
  }
  if (semiflow > 1e-10) failed.push_back("semiflow");
  summary << fmt("semiflow %.1e; ", semiflow);

  // S does not grow L2 norms: 100 inputs per flow
  double growth = 0.0;
  for (const auto& v : flows)
    for (int c = 0; c < cases; ++c) {
      const auto f = rand_field(gS, 6000 + c, 1.0, 0.1 * U(rng));
      const double s = U(rng), t = s + 0.3 * U(rng);
      growth = std::max(growth, l2_norm(linear_propagator_S(s, t, f, v, dt)) / l2_norm(f) - 1.0);
    }
  if (growth > 1e-10) failed.push_back("S-contraction");
  summary << fmt("max ||Sf||/||f|| - 1 = %.1e; ", growth);

  // adjoint pairing <S f, h> = <f, S* h> (<= 1e-8 relative to ||f|| ||h||)
  double adj = 0.0;
  for (int c = 0; c < cases; ++c) {
    const auto& v = flows[c % 3];
    const auto f = rand_field(gS, 7000 + c, 1.0, 0.02), h = rand_field(gS, 8000 + c, 1.0, 0.02);
    const double s = U(rng), t = s + 0.05 + 0.25 * U(rng);
    const double lhs = inner(linear_propagator_S(s, t, f, v, 1e-3), h);
    const double rhs = inner(f, adjoint_propagator_S(s, t, h, v, 1e-3));
    adj = std::max(adj, std::abs(lhs - rhs) / (l2_norm(f) * l2_norm(h)));
  }
  if (adj > 1e-8) failed.push_back("adjoint pairing");
  summary << fmt("adjoint %.1e; ", adj);

  // B is bilinear at quadrature level (<= 1e-12)
  auto gB = make_grid(pi, pi, 16, 16);
  const auto nodes = graded_nodes(0.2, 24);
  const DuhamelQuadrature quad(gB, nodes);
  auto path = [&](const SpectralField& f) {
    std::vector<SpectralField> p;
    for (double t : nodes) p.push_back(apply_semigroup(SymbolKind::full_L, t, f));
    return p;
  };
  double bilin = 0.0;
  for (int c = 0; c < cases; ++c) {
    const double a = 4.0 * U(rng) - 2.0;
    const auto p1 = path(rand_field(gB, 9000 + c, 1.0)), p2 = path(rand_field(gB, 9100 + c, 1.0)),
               p3 = path(rand_field(gB, 9200 + c, 1.0));
    std::vector<SpectralField> comb;
    for (std::size_t i = 0; i < nodes.size(); ++i) comb.push_back(a * p1[i] + p3[i]);
    const auto lhs = bilinear_B(quad, comb, p2);
    const auto b12 = bilinear_B(quad, p1, p2), b32 = bilinear_B(quad, p3, p2);
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      const auto rhs = a * b12[i] + b32[i];
      bilin = std::max(bilin, (lhs[i] - rhs).max_abs() / std::max(1.0, rhs.max_abs()));
    }
  }
  if (bilin > 1e-12) failed.push_back("bilinearity of B");
  summary << fmt("bilinearity %.1e", bilin);

  std::string head = failed.empty() ? "all 7 batteries pass (100 cases each): " : "failed:";
  for (const auto& f : failed) head += " " + f;
  if (!failed.empty()) head += "; ";
  return {failed.empty(), head + summary.str()};
}
}  // namespace

int main(int argc, char** argv) {
  std::setvbuf(stdout, nullptr, _IOLBF, 0);
  const std::vector<std::pair<const char*, std::function<Verdict()>>> criteria{
      {"exact semigroup step", exact_semigroup_step},
      {"growing-mode rate on the 4pi box", growing_mode_rate},
      {"decay rate on the pi box", decay_rate_pi_box},
      {"energy identity", energy_identity},
      {"mean ODE", mean_ode},
      {"Picard vs integrator", picard_cross_validation},
      {"dissipation time without flow", tau_star_no_flow},
      {"threshold formulas", threshold_formulas},
      {"enhanced dissipation trend", enhanced_dissipation_trend},
      {"global existence with advection", global_existence_with_advection},
      {"small-data decay", small_data_decay},
      {"invariant batteries", invariant_batteries},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i + 1);
    if (!only.empty() && !only.count(id)) continue;
    Verdict v;
    const auto t0 = Clock::now();
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    failures += !v.pass;
    std::printf("%s  criterion %2d  %s: %s [%.1f s]\n", v.pass ? "PASS" : "FAIL", id, criteria[i].first,
                v.detail.c_str(), seconds_since(t0));
  }
  return failures == 0 ? 0 : 1;
}
