#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ksadv/cli/config.hpp"
#include "ksadv/cli/manifest.hpp"
#include "ksadv/cli/report.hpp"
#include "ksadv/dissipation.hpp"
#include "ksadv/io.hpp"
#include "ksadv/mild.hpp"
#include "ksadv/random.hpp"
#include "ksadv/semigroup.hpp"

namespace ksadv::cli {

enum ExitCode : int { exit_ok = 0, exit_unexpected = 1, exit_config = 2, exit_divergence = 3, exit_inapplicable = 4 };

using ojson = nlohmann::ordered_json;

// Sub-streams of the global seed.
enum Stream : std::uint64_t { stream_initial = 1, stream_n_constant = 2, stream_bilinear = 3, stream_tau = 16 };

inline std::uint64_t sub_seed(const ExperimentConfig& c, std::uint64_t stream) { return splitmix64(c.seed, stream); }

struct RunOutcome {
  int code = exit_ok;
  std::string message;
  std::vector<std::string> files;  // relative to the output directory
  std::vector<ReportSection> report;
};

class Artifacts {
 public:
  Artifacts(std::filesystem::path dir, RunOutcome& out) : dir_(std::move(dir)), out_(out) {}

  std::string path(const std::string& name) {
    out_.files.push_back(name);
    return (dir_ / name).string();
  }

  void text(const std::string& name, const std::string& body) {
    std::ofstream f(path(name), std::ios::binary);
    f << body;
    if (!f) throw std::runtime_error("cannot write " + name);
  }

  void json(const std::string& name, const ojson& j) { text(name, j.dump(2) + "\n"); }

 private:
  std::filesystem::path dir_;
  RunOutcome& out_;
};

inline std::string fmt(double x) { return format_double(x); }

inline ojson num(double x) { return std::isfinite(x) ? ojson(x) : ojson(nullptr); }

inline GridPtr grid_of(const ExperimentConfig& c) { return make_grid(c.grid.L1, c.grid.L2, c.grid.N1, c.grid.N2); }

/// Initial data phi0, including its mean.
inline SpectralField make_initial(const ExperimentConfig& c, const GridPtr& g) {
  SpectralField f(g);
  switch (c.initial.kind) {
    case InitialKind::zero: break;
    case InitialKind::single_mode:
      f = single_mode(g, c.initial.k1, c.initial.k2, c.initial.amplitude, c.initial.phase);
      break;
    case InitialKind::random: {
      auto rng = stream_rng(c.seed, stream_initial);
      f = random_field(g, rng, c.initial.spectrum_decay, c.initial.l2);
      break;
    }
    case InitialKind::file:
      try {
        f = load_field_coefficients(resolve(c, c.initial.file).string(), g);
      } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("initial.file: ") + e.what());
      }
      break;
  }
  f[0] += c.initial.mean;
  return f;
}

/// Stepper settings checked against the CFL limit of the flow.
inline StepperConfig checked_stepper(const ExperimentConfig& c, const TorusGrid& g, const VelocityField& v) {
  try {
    validate(c.stepper, g, v);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return c.stepper;
}

/// Step that divides `window` and respects both the configured dt and the CFL limit.
inline double dividing_dt(const ExperimentConfig& c, const TorusGrid& g, double amplitude, double window) {
  const double cap = std::min(c.stepper.dt, cfl_limit(c.stepper, g, amplitude));
  return window / std::ceil(window / cap * (1.0 - 1e-12));
}

inline void write_trajectory(const std::string& path, const RunResult& r, const MeanPath* mean = nullptr) {
  CsvWriter w(path, {"t", "l2", "h1dot", "h2dot", "mean", "energy_residual", "cum_h2"});
  for (const auto& rec : r.records) {
    double m = rec.mean;
    if (mean) {
      auto it = std::lower_bound(mean->t.begin(), mean->t.end(), rec.t);
      if (it != mean->t.end()) m = mean->average[static_cast<std::size_t>(it - mean->t.begin())];
    }
    w.cell(rec.t).cell(rec.l2).cell(rec.h1dot).cell(rec.h2dot).cell(m).cell(rec.energy_residual).cell(rec.cum_h2);
    w.row_end();
  }
}

inline ReportTable trajectory_table(const RunResult& r) {
  ReportTable t{{"t", "l2", "h1dot", "h2dot", "energy_residual"}, {}};
  if (r.records.empty()) return t;
  for (const auto* rec : {&r.records.front(), &r.records.back()})
    t.rows.push_back({fmt(rec->t), fmt(rec->l2), fmt(rec->h1dot), fmt(rec->h2dot), fmt(rec->energy_residual)});
  return t;
}

inline double max_energy_residual(const RunResult& r) {
  double m = 0.0;
  for (const auto& rec : r.records) m = std::max(m, std::abs(rec.energy_residual));
  return m;
}

inline ojson certificate_json(const DecayCertificate& w) {
  return {{"t0", w.t0},
          {"B", w.B},
          {"T0_B", num(w.T0_B)},
          {"T1_B", num(w.T1_B)},
          {"tau_star", w.tau_star},
          {"branch", to_string(w.branch)},
          {"mu", w.mu},
          {"C", w.C},
          {"observed_factor", w.observed_factor},
          {"predicted_factor", w.predicted_factor},
          {"h2_average", w.h2_average},
          {"h2_threshold", w.h2_threshold},
          {"no_doubling", w.no_doubling},
          {"certified", w.certified},
          {"reason", w.reason}};
}

inline ojson chain_json(const CertificateChain& ch) {
  ojson windows = ojson::array();
  for (const auto& w : ch.windows) windows.push_back(certificate_json(w));
  return {{"all_certified", ch.all_certified},
          {"window_count", ch.windows.size()},
          {"factor_product", ch.factor_product},
          {"end_ratio", ch.end_ratio},
          {"C0", ch.C0},
          {"envelope_ratio", ch.envelope_ratio},
          {"windows", std::move(windows)}};
}

// ---------------------------------------------------------------------------

inline void run_simulate(const ExperimentConfig& c, Artifacts& art, RunOutcome& out) {
  const auto g = grid_of(c);
  const auto v = make_flow(c);
  const auto cfg = checked_stepper(c, *g, v);
  const auto phi0 = make_initial(c, g);
  const bool projected = c.equation == Equation::projected;
  RunOptions opt;
  opt.record_every = c.record_every;
  opt.l2_ceiling = c.l2_ceiling;
  const auto r = simulate(projected ? project_mean_free(phi0) : phi0, v, cfg, c.equation, opt);
  if (projected) {
    const auto mp = evolve_mean(r, phi0.mean());
    write_trajectory(art.path("trajectory.csv"), r, &mp);
  } else {
    write_trajectory(art.path("trajectory.csv"), r);
  }

  ReportSection sec{"simulate",
                    "energy identity and mean evolution of the advective Kuramoto-Sivashinsky equation",
                    {},
                    {trajectory_table(r)}};
  sec.notes.push_back("Largest energy-identity residual: " + fmt(max_energy_residual(r)) + ".");
  if (r.diverged || r.ceiling_hit) {
    out.code = exit_divergence;
    out.message = (r.diverged ? "run diverged at t = " : "L2 ceiling exceeded at t = ") + fmt(r.t_stop);
    sec.notes.push_back("Blow-up flagged: " + out.message + ".");
  }
  out.report.push_back(std::move(sec));
}

inline void run_picard_verify(const ExperimentConfig& c, Artifacts& art, RunOutcome& out) {
  const auto g = grid_of(c);
  const auto v = make_flow(c);
  const auto phi0 = make_initial(c, g);
  const double C = measured_mild_constant(*g);
  const double v_sup = sup_norms(v, *g).l2_sup;
  const double T_adm = admissible_T(l2_norm(phi0), v_sup, C);
  const double T = c.picard_T > 0.0 ? c.picard_T : T_adm;
  PicardOptions po;
  po.n_nodes = c.picard_nodes;
  po.max_iters = c.picard_max_iters;
  po.tol = c.picard_tol;
  po.dealias = c.stepper.dealias;
  const auto st = picard_iterate(phi0, v, T, po);

  // time-stepped solution at t = T
  StepperConfig sc = c.stepper;
  sc.dt = dividing_dt(c, *g, v.amplitude(), T);
  sc.t_end = T;
  RunOptions ro;
  ro.record_every = 0;
  const auto run = simulate(phi0, v, sc, Equation::full, ro);
  const double gap = run.diverged ? std::numeric_limits<double>::infinity()
                                  : l2_norm(st.final_state() - run.final_state);

  ojson j{{"T", T},
          {"iterations", st.iterations},
          {"contraction_ratio", num(st.contraction_ratio)},
          {"residual", num(st.residual)},
          {"eta1", nullptr},
          {"eta2", nullptr},
          {"delta", nullptr},
          {"converged", st.converged},
          {"non_contraction", st.non_contraction},
          {"xT_norm", num(st.xT_norm)},
          {"C", C},
          {"v_l2_sup", v_sup},
          {"admissible_T", T_adm},
          {"T_from_bound", c.picard_T == 0.0},
          {"integrator_dt", sc.dt},
          {"integrator_gap", num(gap)},
          {"note", st.note}};
  ReportTable consts{{"quantity", "value"},
                     {{"T", fmt(T)},
                      {"iterations", std::to_string(st.iterations)},
                      {"contraction_ratio", fmt(st.contraction_ratio)},
                      {"residual", fmt(st.residual)},
                      {"measured C", fmt(C)},
                      {"L2 gap to integrator at T", fmt(gap)}}};
  if (g->strictly_dissipative()) {
    BilinearOptions bo;
    bo.pairs = c.bilinear_pairs;
    bo.n_nodes = c.bilinear_nodes;
    bo.crossover = c.env_T2;
    bo.seed = sub_seed(c, stream_bilinear);
    const auto bc = measure_bilinear_constants(g, bo);
    j["eta1"] = bc.eta1;
    j["eta2"] = bc.eta2;
    j["delta"] = bc.delta;
    j["gamma2"] = bc.gamma2;
    j["bilinear_pairs"] = bc.pairs;
    consts.rows.push_back({"eta1 (measured over family)", fmt(bc.eta1)});
    consts.rows.push_back({"eta2 (measured over family)", fmt(bc.eta2)});
    consts.rows.push_back({"delta", fmt(bc.delta)});
  }
  art.json("picard.json", j);
  CsvWriter w(art.path("picard_gaps.csv"), {"iteration", "gap"});
  for (std::size_t i = 0; i < st.gaps.size(); ++i) {
    w.cell(static_cast<long long>(i + 1)).cell(st.gaps[i]);
    w.row_end();
  }

  ReportSection sec{"picard-verify",
                    "local existence of mild solutions by contraction on a short interval, and the bilinear "
                    "bounds behind small-data global existence",
                    {},
                    {consts}};
  if (c.picard_T == 0.0) sec.notes.push_back("T comes from the contraction-time bound with the measured constant; it is empirical, not certified.");
  out.report.push_back(std::move(sec));
  if (st.non_contraction) {
    out.code = exit_inapplicable;
    out.message = "Picard iteration does not contract (ratio " + fmt(st.contraction_ratio) + ")";
  }
}

inline void run_lemma_envelopes(const ExperimentConfig& c, Artifacts& art, RunOutcome& out) {
  const auto g = grid_of(c);
  const auto local_t = log_time_grid(c.env_t_min, c.env_t_max, c.env_count);
  const auto global_t = log_time_grid(c.env_t_min, c.env_global_t_max, c.env_count);
  std::vector<LemmaEnvelope> envs{
      measure_lemma_envelope(LemmaId::L2L1_local, *g, local_t),
      measure_lemma_envelope(LemmaId::GRAD_local, *g, local_t, {.s = c.env_s}),
      measure_lemma_envelope(LemmaId::L2L1_global, *g, global_t, {.s = 0.0, .crossover = c.env_T1}),
      measure_lemma_envelope(LemmaId::HS_global, *g, global_t, {.s = c.env_s, .crossover = c.env_T2}),
  };

  CsvWriter w(art.path("envelopes.csv"), {"lemma", "s", "t", "measured", "bound"});
  ojson lemmas = ojson::array();
  ReportTable tab{{"lemma", "s", "fitted constant", "applicable"}, {}};
  bool inapplicable = false;
  for (const auto& e : envs) {
    for (std::size_t i = 0; i < e.measured.size(); ++i) {
      w.cell(to_string(e.lemma_id)).cell(e.s).cell(e.time_grid[i]).cell(e.measured[i]).cell(e.bound[i]);
      w.row_end();
    }
    lemmas.push_back({{"lemma", to_string(e.lemma_id)},
                      {"s", e.s},
                      {"crossover", e.crossover},
                      {"applicable", e.applicable},
                      {"fitted_constant", e.applicable ? num(e.fitted_constant) : ojson(nullptr)},
                      {"note", e.note}});
    tab.rows.push_back({std::string(to_string(e.lemma_id)), fmt(e.s), e.applicable ? fmt(e.fitted_constant) : "-",
                        e.applicable ? "yes" : "no"});
    inapplicable = inapplicable || !e.applicable;
  }
  ojson growing = ojson::array();
  for (const auto& m : growing_modes(*g)) growing.push_back({{"k1", m.k1}, {"k2", m.k2}, {"sigma", m.sigma}});
  ojson j{{"beta", g->beta()},
          {"kappa0", g->kappa0()},
          {"gamma1", envs[2].applicable ? num(envs[2].fitted_constant) : ojson(nullptr)},
          {"gamma2", envs[3].applicable ? num(envs[3].fitted_constant) : ojson(nullptr)},
          {"lemmas", std::move(lemmas)},
          {"growing_modes", std::move(growing)}};
  art.json("constants.json", j);

  tab.rows.push_back({"beta", "-", fmt(g->beta()), "-"});
  ReportSection sec{"lemma-envelopes",
                    "smoothing and decay estimates for the linear semigroup, local in time and global on boxes "
                    "without growing modes",
                    {},
                    {tab}};
  if (inapplicable) {
    sec.notes.push_back("The box has growing modes, so the global envelopes do not apply.");
    out.code = exit_inapplicable;
    out.message = "global envelopes inapplicable: box has modes with sigma <= 0";
  }
  out.report.push_back(std::move(sec));
}

inline TauStarOptions tau_options(const ExperimentConfig& c, std::uint64_t index) {
  TauStarOptions o;
  o.probes = c.probes;
  o.max_iters = c.power_max_iters;
  o.rtol = c.power_rtol;
  o.dt = c.propagation_dt;
  o.cfl_fraction = c.stepper.cfl_safety;
  o.seed = sub_seed(c, stream_tau + index);
  return o;
}

inline DissipationEstimate tau_star_of(const ExperimentConfig& c, const GridPtr& g, const VelocityField& v,
                                       std::uint64_t index) {
  return estimate_tau_star(v, g, default_t_grid(*g, c.t_count), default_s_grid(v, c.s_per_period),
                           tau_options(c, index));
}

inline void run_dissipation_sweep(const ExperimentConfig& c, Artifacts& art, RunOutcome& out) {
  const auto g = grid_of(c);
  CsvWriter sweep(art.path("sweep.csv"), {"flow", "amplitude", "s", "t", "norm_estimate"});
  CsvWriter summary(art.path("summary.csv"), {"flow", "amplitude", "tau_star", "method"});
  ReportTable tab{{"flow", "amplitude", "tau*", "method"}, {}};
  for (std::size_t a = 0; a < c.amplitudes.size(); ++a) {
    const auto v = make_flow(c, c.amplitudes[a]);
    const auto est = tau_star_of(c, g, v, a);
    for (std::size_t i = 0; i < est.s_samples.size(); ++i)
      for (std::size_t j = 0; j < est.t_grid.size(); ++j) {
        sweep.cell(est.flow).cell(est.amplitude).cell(est.s_samples[i]).cell(est.t_grid[j]).cell(est.norm_curve[i][j]);
        sweep.row_end();
      }
    summary.cell(est.flow).cell(est.amplitude).cell(est.tau_star).cell(to_string(est.method));
    summary.row_end();
    tab.rows.push_back({est.flow, fmt(est.amplitude), fmt(est.tau_star), std::string(to_string(est.method))});
  }
  ReportSection sec{"dissipation-sweep",
                    "dissipation time of the advection-hyperdiffusion propagator, which strong flows can make "
                    "arbitrarily small",
                    {},
                    {tab}};
  sec.notes.push_back("random_probe marks lower-bound estimates where power iteration did not converge.");
  out.report.push_back(std::move(sec));
}

struct DecayInputs {
  double tau_star = 0.0, mu = 0.0, C = 0.0;
  std::string tau_method;
};

/// tau* (estimated unless configured), the measured N-constant and the rate mu.
inline DecayInputs decay_inputs(const ExperimentConfig& c, const GridPtr& g, const VelocityField& v) {
  DecayInputs d;
  if (c.tau_star > 0.0) {
    d.tau_star = c.tau_star;
    d.tau_method = "configured";
  } else {
    const auto est = tau_star_of(c, g, v, 0);
    d.tau_star = est.tau_star;
    d.tau_method = std::string(to_string(est.method));
  }
  NConstantOptions no;
  no.seed = sub_seed(c, stream_n_constant);
  d.C = measure_N_constant(g, no).C;
  if (c.mu > 0.0) d.mu = c.mu;
  else if (g->beta() > 0.0) d.mu = g->beta() / 4.0;
  else d.mu = 1.0 / (8.0 * d.tau_star);
  return d;
}

inline ojson decay_inputs_json(const DecayInputs& d) {
  const auto th = thresholds(0.0, d.C, d.mu);
  return {{"tau_star", d.tau_star}, {"tau_star_method", d.tau_method}, {"mu", d.mu}, {"C", d.C},
          {"quarter_inv_mu", th.quarter_inv_mu}};
}

inline ReportTable chain_table(const DecayInputs& d, const CertificateChain& ch, const GlobalBound& gb) {
  std::size_t certified = 0;
  for (const auto& w : ch.windows) certified += w.certified;
  return {{"quantity", "value"},
          {{"tau*", fmt(d.tau_star)},
           {"mu", fmt(d.mu)},
           {"C (measured)", fmt(d.C)},
           {"windows certified", std::to_string(certified) + " / " + std::to_string(ch.windows.size())},
           {"product of observed factors", fmt(ch.factor_product)},
           {"max of L2(psi) / (C0 e^{-mu t} L2(psi0))", fmt(ch.envelope_ratio)},
           {"C1", fmt(gb.C1)},
           {"max L2(phi)", fmt(gb.sup_phi)}}};
}

inline void run_decay_study(const ExperimentConfig& c, Artifacts& art, RunOutcome& out) {
  const auto g = grid_of(c);
  const auto v = make_flow(c);
  const auto phi0 = make_initial(c, g);
  const auto d = decay_inputs(c, g, v);
  if (!(std::isfinite(d.tau_star) && d.tau_star > 0.0)) {
    out.code = exit_inapplicable;
    out.message = "no dissipation time found on the sampled grid";
    out.report.push_back({"decay-study", "decay in windows of one dissipation time", {out.message}, {}});
    return;
  }
  StepperConfig sc = c.stepper;
  sc.dt = dividing_dt(c, *g, v.amplitude(), d.tau_star);
  RunOptions ro;
  ro.record_every = c.record_every;
  ro.l2_ceiling = c.l2_ceiling;
  const auto run = simulate(project_mean_free(phi0), v, sc, Equation::projected, ro);
  const auto mp = evolve_mean(run, phi0.mean());
  write_trajectory(art.path("trajectory.csv"), run, &mp);

  const auto ch = certify_chain(run, 0.0, d.mu, d.C, d.tau_star);
  const auto gb = global_bound(run, phi0.mean(), ch.C0);
  ojson j = decay_inputs_json(d);
  j["run_dt"] = sc.dt;
  j["chain"] = chain_json(ch);
  j["global_bound"] = {{"C1", gb.C1}, {"sup_phi", gb.sup_phi}, {"holds", gb.holds}, {"psi_term", gb.psi_term},
                       {"mean_term", gb.mean_term}};
  art.json("certificates.json", j);

  ReportSection sec{"decay-study",
                    "exponential decay of the mean-free part over windows of one dissipation time, and the "
                    "resulting a-priori bound on the solution",
                    {},
                    {chain_table(d, ch, gb)}};
  if (run.diverged || run.ceiling_hit) {
    out.code = exit_divergence;
    out.message = "run stopped at t = " + fmt(run.t_stop);
  } else if (!ch.all_certified) {
    out.code = exit_inapplicable;
    out.message = ch.windows.empty() ? "run shorter than one dissipation time"
                                     : "not every window certified: " + ch.windows.front().reason;
    for (const auto& w : ch.windows)
      if (!w.certified) {
        out.message = "window at t0 = " + fmt(w.t0) + " not certified: " + w.reason;
        break;
      }
    sec.notes.push_back(out.message);
  }
  out.report.push_back(std::move(sec));
}

inline void run_global_advect(const ExperimentConfig& c, Artifacts& art, RunOutcome& out) {
  if (c.flow.kind == FlowKind::zero) throw ConfigError("global-advect needs a nonzero flow kind");
  const auto g = grid_of(c);
  const auto v = make_flow(c, c.large_amplitude);
  const auto phi0 = make_initial(c, g);
  const double l2_0 = l2_norm(phi0);
  if (!(l2_0 > 0.0)) throw ConfigError("global-advect needs nonzero initial data");
  const auto d = decay_inputs(c, g, v);
  if (!(std::isfinite(d.tau_star) && d.tau_star > 0.0)) {
    out.code = exit_inapplicable;
    out.message = "no dissipation time found for the stirred flow";
    return;
  }

  RunOptions ro;
  ro.record_every = c.record_every;
  ro.l2_ceiling = c.l2_ceiling;
  StepperConfig still = c.stepper;
  still.dt = std::min(c.stepper.dt, cfl_limit(c.stepper, *g, 0.0));
  const auto r0 = simulate(phi0, VelocityField::zero(), still, Equation::full, ro);
  StepperConfig stir = c.stepper;
  stir.dt = dividing_dt(c, *g, v.amplitude(), d.tau_star);
  const auto r1 = simulate(phi0, v, stir, Equation::full, ro);
  const auto rp = simulate(project_mean_free(phi0), v, stir, Equation::projected, ro);
  write_trajectory(art.path("trajectory_still.csv"), r0);
  write_trajectory(art.path("trajectory_stirred.csv"), r1);

  auto ratio_stats = [&](const RunResult& r) {
    double mx = 0.0, t_cross = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < r.times.size(); ++k) {
      const double q = std::sqrt(r.l2sq[k]) / l2_0;
      mx = std::max(mx, q);
      if (q > c.growth_factor && !std::isfinite(t_cross)) t_cross = r.times[k];
    }
    return std::pair{mx, t_cross};
  };
  const auto [max0, cross0] = ratio_stats(r0);
  const auto [max1, cross1] = ratio_stats(r1);
  (void)cross1;
  const bool grows = std::isfinite(cross0);
  const bool bounded = !r1.diverged && !r1.ceiling_hit && max1 < c.bounded_factor;

  const auto ch = certify_chain(rp, 0.0, d.mu, d.C, d.tau_star);
  const auto gb = global_bound(rp, phi0.mean(), ch.C0);
  ojson cert = decay_inputs_json(d);
  cert["run_dt"] = stir.dt;
  cert["chain"] = chain_json(ch);
  cert["global_bound"] = {{"C1", gb.C1}, {"sup_phi", gb.sup_phi}, {"holds", gb.holds}};
  art.json("certificates.json", cert);
  ojson sum{{"initial_l2", l2_0},
            {"still", {{"amplitude", 0.0}, {"max_ratio", max0}, {"t_exceeds_growth_factor", num(cross0)},
                       {"grows", grows}, {"diverged", r0.diverged}, {"t_end", r0.t_stop}}},
            {"stirred", {{"flow", v.id()}, {"amplitude", v.amplitude()}, {"max_ratio", max1},
                         {"bounded", bounded}, {"diverged", r1.diverged}, {"t_end", r1.t_stop}}},
            {"growth_factor", c.growth_factor},
            {"bounded_factor", c.bounded_factor},
            {"all_certified", ch.all_certified}};
  art.json("summary.json", sum);

  ReportTable tab{{"run", "amplitude", "max L2(phi) / L2(phi0)"},
                  {{"still", "0", fmt(max0)}, {"stirred", fmt(v.amplitude()), fmt(max1)}}};
  ReportSection sec{"global-advect",
                    "global existence for the advective equation on boxes with growing modes once the flow's "
                    "dissipation time is small enough",
                    {},
                    {tab, chain_table(d, ch, gb)}};
  if (r1.diverged || r0.diverged) {
    out.code = exit_divergence;
    out.message = r1.diverged ? "stirred run diverged" : "unstirred run diverged";
  } else if (!ch.all_certified) {
    out.code = exit_inapplicable;
    out.message = "not every decay window of the stirred run certified";
  }
  if (!out.message.empty()) sec.notes.push_back(out.message);
  out.report.push_back(std::move(sec));
}

/// Runs the configured experiment into `dir`, then writes the config echo,
/// report.md and manifest.json. Config problems surface as ConfigError
/// before anything is written.
inline RunOutcome run_experiment(const ExperimentConfig& c, const std::filesystem::path& dir) {
  RunOutcome out;
  make_flow(c);  // flow files are read before any compute
  if (c.initial.kind == InitialKind::file) make_initial(c, grid_of(c));
  std::filesystem::create_directories(dir);
  Artifacts art(dir, out);
  art.text("config.ini", c.text);
  switch (c.experiment) {
    case Experiment::simulate: run_simulate(c, art, out); break;
    case Experiment::picard_verify: run_picard_verify(c, art, out); break;
    case Experiment::lemma_envelopes: run_lemma_envelopes(c, art, out); break;
    case Experiment::dissipation_sweep: run_dissipation_sweep(c, art, out); break;
    case Experiment::decay_study: run_decay_study(c, art, out); break;
    case Experiment::global_advect: run_global_advect(c, art, out); break;
  }
  art.text("report.md", emit_report(out.report));
  ojson header{{"experiment", to_string(c.experiment)},
               {"seed", c.seed},
               {"exit_code", out.code},
               {"message", out.message},
               {"config_sha256", sha256_hex(c.text)}};
  write_manifest(dir, out.files, header);
  return out;
}

}  // namespace ksadv::cli
