#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <cmath>
#include <cstddef>
#include <limits>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "ksadv/field.hpp"
#include "ksadv/integrator.hpp"
#include "ksadv/parallel.hpp"
#include "ksadv/semigroup.hpp"

namespace ksadv {

namespace detail {

// Moments m_k(z) = int_0^1 u^k e^{-zu} du for k = 0, 1, 2; series near z = 0.
struct Moments {
  double m0, m1, m2;
};

inline Moments exp_moments(double z) {
  if (std::abs(z) < 0.5) {
    Moments m{0.0, 0.0, 0.0};
    double term = 1.0;  // (-z)^n / n!
    for (int n = 0; n < 24; ++n) {
      m.m0 += term / (n + 1);
      m.m1 += term / (n + 2);
      m.m2 += term / (n + 3);
      term *= -z / (n + 1);
    }
    return m;
  }
  const double e = std::exp(-z);
  const double m0 = -std::expm1(-z) / z;
  const double m1 = (m0 - e) / z;
  const double m2 = (2.0 * m1 - e) / z;
  return {m0, m1, m2};
}

// int_0^1 l_k(u) e^{-zu} du for the Lagrange basis through abscissae p[0..2].
inline std::array<double, 3> lagrange_weights(const std::array<double, 3>& p, const Moments& m) {
  std::array<double, 3> w{};
  for (int k = 0; k < 3; ++k) {
    const double a = p[(k + 1) % 3], b = p[(k + 2) % 3];
    const double den = (p[k] - a) * (p[k] - b);
    w[k] = (m.m2 - (a + b) * m.m1 + a * b * m.m0) / den;
  }
  return w;
}

}  // namespace detail

/// Graded nodes tau_i = T (i/n)^{4/3}, i = 0..n.
inline std::vector<double> graded_nodes(double T, int n) {
  if (!(T > 0.0) || n < 2) throw std::invalid_argument("graded_nodes: need T > 0 and n >= 2");
  std::vector<double> t(n + 1);
  for (int i = 0; i <= n; ++i) t[i] = T * std::pow(static_cast<double>(i) / n, 4.0 / 3.0);
  t[n] = T;
  return t;
}

/// Product integration of Duhamel integrals
///   I(t) = int_0^t e^{-(t - tau) L} G(tau) dtau
/// with G interpolated quadratically through three neighbouring nodes and
/// the exponential integrated exactly against the interpolant.
class DuhamelQuadrature {
 public:
  DuhamelQuadrature(GridPtr grid, std::vector<double> nodes, SymbolKind kind = SymbolKind::full_L)
      : grid_(std::move(grid)), nodes_(std::move(nodes)), kind_(kind) {
    if (nodes_.size() < 3 || nodes_.front() != 0.0) throw std::invalid_argument("DuhamelQuadrature: bad nodes");
    const std::size_t n = grid_->size();
    for (std::size_t j = 1; j < nodes_.size(); ++j) {
      const double h = nodes_[j] - nodes_[j - 1];
      if (!(h > 0.0)) throw std::invalid_argument("DuhamelQuadrature: nodes must increase");
      const auto idx = stencil(j);
      std::array<double, 3> p;
      for (int k = 0; k < 3; ++k) p[k] = (nodes_[j] - nodes_[idx[k]]) / h;
      Interval iv;
      iv.idx = idx;
      iv.decay.resize(n);
      for (auto& w : iv.w) w.resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        const double z = h * symbol_value(*grid_, i, kind_);
        iv.decay[i] = std::exp(-z);
        const auto w = detail::lagrange_weights(p, detail::exp_moments(z));
        for (int k = 0; k < 3; ++k) iv.w[k][i] = h * w[k];
      }
      intervals_.push_back(std::move(iv));
    }
  }

  const std::vector<double>& nodes() const { return nodes_; }
  const GridPtr& grid_ptr() const { return grid_; }
  SymbolKind kind() const { return kind_; }

  /// I at every node from G at every node.
  std::vector<SpectralField> integrate(const std::vector<SpectralField>& G) const {
    if (G.size() != nodes_.size()) throw std::invalid_argument("DuhamelQuadrature: forcing size mismatch");
    std::vector<SpectralField> I;
    I.reserve(nodes_.size());
    I.emplace_back(grid_);
    for (const auto& iv : intervals_) {
      SpectralField next(grid_);
      const auto& prev = I.back();
      const auto &g0 = G[iv.idx[0]], &g1 = G[iv.idx[1]], &g2 = G[iv.idx[2]];
      for (std::size_t i = 0; i < next.size(); ++i)
        next[i] = iv.decay[i] * prev[i] + iv.w[0][i] * g0[i] + iv.w[1][i] * g1[i] + iv.w[2][i] * g2[i];
      I.push_back(std::move(next));
    }
    return I;
  }

  /// I(t) for t in [0, T] from the nodal values of I and G.
  SpectralField integrate_to(double t, const std::vector<SpectralField>& I, const std::vector<SpectralField>& G) const {
    if (!(t >= 0.0) || t > nodes_.back() * (1 + 1e-14))
      throw std::invalid_argument("DuhamelQuadrature: time outside the node range");
    auto it = std::upper_bound(nodes_.begin(), nodes_.end(), t);
    std::size_t j = static_cast<std::size_t>(it - nodes_.begin());
    if (j == 0) j = 1;
    if (j >= nodes_.size()) j = nodes_.size() - 1;
    const double s = t - nodes_[j - 1];
    if (s <= 0.0) return I[j - 1];
    const auto idx = stencil(j);
    std::array<double, 3> p;
    for (int k = 0; k < 3; ++k) p[k] = (t - nodes_[idx[k]]) / s;
    SpectralField out(grid_);
    for (std::size_t i = 0; i < out.size(); ++i) {
      const double z = s * symbol_value(*grid_, i, kind_);
      const auto w = detail::lagrange_weights(p, detail::exp_moments(z));
      out[i] = std::exp(-z) * I[j - 1][i] + s * (w[0] * G[idx[0]][i] + w[1] * G[idx[1]][i] + w[2] * G[idx[2]][i]);
    }
    return out;
  }

 private:
  struct Interval {
    std::array<std::size_t, 3> idx;
    std::vector<double> decay;
    std::array<std::vector<double>, 3> w;
  };

  // Nodes used to interpolate G on [tau_{j-1}, tau_j].
  std::array<std::size_t, 3> stencil(std::size_t j) const {
    if (j == 1) return {0, 1, 2};
    return {j - 2, j - 1, j};
  }

  GridPtr grid_;
  std::vector<double> nodes_;
  SymbolKind kind_;
  std::vector<Interval> intervals_;
};

/// max over nodes of max(||f||_{L2}, t^{1/4} ||grad f||_{L2})
inline double adapted_norm(const std::vector<double>& nodes, const std::vector<SpectralField>& f) {
  double m = 0.0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const auto nr = norms(f[i]);
    m = std::max({m, nr.l2, std::pow(nodes[i], 0.25) * nr.h1dot});
  }
  return m;
}

struct PicardOptions {
  int n_nodes = 64;
  int max_iters = 200;
  double tol = 1e-10;
  bool dealias = true;
};

struct PicardState {
  double T = 0.0;
  std::vector<double> nodes;
  std::vector<SpectralField> iterate;  // phi at the nodes
  std::vector<SpectralField> forcing;  // G(phi) at the nodes
  std::vector<SpectralField> duhamel;  // Duhamel integral at the nodes
  double xT_norm = 0.0;
  double contraction_ratio = 0.0;  // largest ratio of successive gaps above round-off
  std::vector<double> gaps;
  int iterations = 0;
  bool converged = false;
  bool non_contraction = false;
  double residual = 0.0;  // max over nodes of ||N(phi) - phi||_{L2}
  std::string note;

  std::shared_ptr<const DuhamelQuadrature> quadrature;
  std::shared_ptr<const SpectralField> phi0;

  /// The mild solution at any t in [0, T].
  SpectralField evaluate_at(double t) const {
    auto free = apply_semigroup(quadrature->kind(), t, *phi0);
    return free + quadrature->integrate_to(t, duhamel, forcing);
  }
  const SpectralField& final_state() const { return iterate.back(); }
};

/// Fixed-point iteration of the Duhamel map
///   N(phi)(t) = e^{-tL} phi0 + int_0^t e^{-(t-tau)L} (-|grad phi|^2 / 2 - v.grad phi)(tau) dtau
/// on graded nodes, starting from the free evolution.
inline PicardState picard_iterate(const SpectralField& phi0, const VelocityField& v, double T,
                                  PicardOptions opt = {}) {
  if (!(T > 0.0) || T > 1.0) throw std::invalid_argument("picard_iterate: need 0 < T <= 1");
  if (opt.n_nodes < 16) throw std::invalid_argument("picard_iterate: need at least 16 nodes");
  PicardState st;
  st.T = T;
  st.nodes = graded_nodes(T, opt.n_nodes);
  auto quad = std::make_shared<DuhamelQuadrature>(phi0.grid_ptr(), st.nodes, SymbolKind::full_L);
  st.quadrature = quad;
  st.phi0 = std::make_shared<SpectralField>(phi0);
  const std::size_t m = st.nodes.size();

  std::vector<SpectralField> free;
  free.reserve(m);
  for (double t : st.nodes) free.push_back(apply_semigroup(SymbolKind::full_L, t, phi0));

  NonlinearOperator G(phi0.grid_ptr(), Equation::full, FlowView(v), opt.dealias);
  auto apply_map = [&](const std::vector<SpectralField>& phi, std::vector<SpectralField>& forcing,
                       std::vector<SpectralField>& duh) {
    forcing.clear();
    for (std::size_t i = 0; i < m; ++i) forcing.push_back(G(phi[i], st.nodes[i]));
    duh = quad->integrate(forcing);
    std::vector<SpectralField> out;
    out.reserve(m);
    for (std::size_t i = 0; i < m; ++i) out.push_back(free[i] + duh[i]);
    return out;
  };

  std::vector<SpectralField> phi = free;
  int above_one = 0;
  double prev_gap = -1.0;
  const double floor = 1e-13 * std::max(1.0, adapted_norm(st.nodes, free));
  for (int it = 1; it <= opt.max_iters; ++it) {
    auto next = apply_map(phi, st.forcing, st.duhamel);
    std::vector<SpectralField> diff;
    diff.reserve(m);
    for (std::size_t i = 0; i < m; ++i) diff.push_back(next[i] - phi[i]);
    const double gap = adapted_norm(st.nodes, diff);
    st.gaps.push_back(gap);
    st.iterations = it;
    phi = std::move(next);
    if (!std::isfinite(gap)) {
      st.non_contraction = true;
      st.note = "iterates diverged";
      break;
    }
    if (prev_gap > floor) {
      const double ratio = gap / prev_gap;
      st.contraction_ratio = std::max(st.contraction_ratio, ratio);
      above_one = ratio >= 1.0 ? above_one + 1 : 0;
      if (above_one >= 3) {
        st.non_contraction = true;
        st.note = "gap ratio >= 1 for 3 consecutive iterations (ratio " + std::to_string(ratio) + ")";
        break;
      }
    }
    if (gap < opt.tol) {
      st.converged = true;
      break;
    }
    prev_gap = gap;
  }
  st.iterate = std::move(phi);
  st.xT_norm = adapted_norm(st.nodes, st.iterate);

  // one more application of the map measures the mild-equation residual
  std::vector<SpectralField> f2, d2;
  const auto again = apply_map(st.iterate, f2, d2);
  for (std::size_t i = 0; i < m; ++i) st.residual = std::max(st.residual, l2_norm(again[i] - st.iterate[i]));
  st.forcing = std::move(f2);
  st.duhamel = std::move(d2);
  st.iterate = again;
  return st;
}

/// Contraction time T <= min(1, 1 / (16 (C M + C ||v||)^4)) with M = 2 C ||phi0||.
inline double admissible_T(double phi0_l2, double v_l2_sup, double C) {
  if (!(C > 0.0)) throw std::invalid_argument("admissible_T: C must be positive");
  const double M = 2.0 * C * phi0_l2;
  const double den = 16.0 * std::pow(C * M + C * v_l2_sup, 4);
  if (den <= 1.0) return 1.0;
  return 1.0 / den;
}

/// Stand-in for the proof constant in the contraction-time bound: the
/// larger of the fitted local L1->L2 and gradient envelope constants.
inline double measured_mild_constant(const TorusGrid& g) {
  const auto t = log_time_grid(1e-5, 0.999, 80);
  const auto a = measure_lemma_envelope(LemmaId::L2L1_local, g, t);
  const auto b = measure_lemma_envelope(LemmaId::GRAD_local, g, t, {.s = 1.0});
  return std::max(a.fitted_constant, b.fitted_constant);
}

struct ContinuationReport {
  bool continues = true;
  bool blowup_flagged = false;
  double t_star = std::numeric_limits<double>::infinity();
  double max_l2 = 0.0;
  std::string reason;
};

/// Flags a run whose L2 norm passes `ceiling` or whose coefficients diverged.
inline ContinuationReport continuation_monitor(const RunResult& run, double ceiling) {
  ContinuationReport rep;
  for (std::size_t i = 0; i < run.times.size(); ++i) {
    const double l2 = std::sqrt(run.l2sq[i]);
    rep.max_l2 = std::max(rep.max_l2, l2);
    if (l2 > ceiling && rep.continues) {
      rep.continues = false;
      rep.blowup_flagged = true;
      rep.t_star = run.times[i];
      rep.reason = "L2 norm exceeded ceiling " + std::to_string(ceiling);
    }
  }
  if (run.diverged && rep.continues) {
    rep.continues = false;
    rep.blowup_flagged = true;
    rep.t_star = run.t_stop;
    rep.reason = "coefficients diverged";
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Bilinear Duhamel term of the projected equation

/// B(psi1, psi2)(t) = -1/2 int_0^t e^{-(t-tau)L} P(grad psi1 . grad psi2)(tau) dtau
/// at every node, from both arguments sampled at the nodes.
inline std::vector<SpectralField> bilinear_B(const DuhamelQuadrature& quad, const std::vector<SpectralField>& psi1,
                                             const std::vector<SpectralField>& psi2) {
  const std::size_t m = quad.nodes().size();
  if (psi1.size() != m || psi2.size() != m) throw std::invalid_argument("bilinear_B: path size mismatch");
  std::vector<SpectralField> G;
  G.reserve(m);
  for (std::size_t i = 0; i < m; ++i) {
    auto [ax, ay] = gradient(psi1[i]);
    auto [bx, by] = gradient(psi2[i]);
    auto p = dealiased_product(ax, bx) + dealiased_product(ay, by);
    p *= -0.5;
    p[0] = 0.0;
    G.push_back(std::move(p));
  }
  return quad.integrate(G);
}

struct BilinearConstants {
  double eta1 = 0.0;
  double eta2 = 0.0;
  double eta = 0.0;
  double gamma2 = 0.0;  // HS_global (s = 1) envelope constant
  double delta = 0.0;
  std::size_t pairs = 0;
  double horizon = 0.0;
};

struct BilinearOptions {
  std::size_t pairs = 200;
  int n_nodes = 96;
  double horizon = 2.0;
  double crossover = 1.0;
  std::uint64_t seed = 1;
};

/// Randomized lower-bound estimate of the bilinear constants over pairs of
/// free evolutions psi_i(t) = e^{-tL} psi_i0:
///   eta1 = max ||B(t)|| / (||psi1||_X ||psi2||_X),
///   eta2 = max t^{1/4} ||grad B(t)|| / (||psi1||_X ||psi2||_X),
/// with delta = 1 / (4 eta max(1, gamma2)).
inline BilinearConstants measure_bilinear_constants(const GridPtr& grid, BilinearOptions opt = {}) {
  if (!grid->strictly_dissipative())
    throw std::invalid_argument("measure_bilinear_constants: box has non-decaying modes (needs L1, L2 < 2 pi)");
  if (opt.pairs == 0) throw std::invalid_argument("measure_bilinear_constants: need at least one pair");
  const auto nodes = graded_nodes(opt.horizon, opt.n_nodes);
  const DuhamelQuadrature quad(grid, nodes, SymbolKind::full_L);

  // Fields are generated up front from one stream so results do not depend on the thread count.
  std::mt19937_64 rng(opt.seed);
  std::uniform_real_distribution<double> udecay(0.0, 0.3);
  std::vector<SpectralField> data;
  for (std::size_t p = 0; p < 2 * opt.pairs; ++p) {
    if (p % 10 == 0) {
      // lowest modes, where the semigroup decays slowest
      data.push_back(single_mode(grid, p % 20 == 0 ? 1 : 0, p % 20 == 0 ? 0 : 1, 1.0, 0.3 * p));
    } else {
      data.push_back(random_field(grid, rng, udecay(rng), 1.0));
    }
  }
  auto path_of = [&](const SpectralField& f) {
    std::vector<SpectralField> path;
    path.reserve(nodes.size());
    for (double t : nodes) path.push_back(apply_semigroup(SymbolKind::full_L, t, f));
    return path;
  };

  std::vector<double> r1(opt.pairs), r2(opt.pairs);
  parallel_for(opt.pairs, [&](std::size_t p) {
    const auto a = path_of(data[2 * p]);
    const auto b = path_of(data[2 * p + 1]);
    const auto B = bilinear_B(quad, a, b);
    const double den = adapted_norm(nodes, a) * adapted_norm(nodes, b);
    double m1 = 0.0, m2 = 0.0;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      const auto nr = norms(B[i]);
      m1 = std::max(m1, nr.l2);
      m2 = std::max(m2, std::pow(nodes[i], 0.25) * nr.h1dot);
    }
    r1[p] = m1 / den;
    r2[p] = m2 / den;
  });

  BilinearConstants c;
  c.pairs = opt.pairs;
  c.horizon = opt.horizon;
  c.eta1 = *std::max_element(r1.begin(), r1.end());
  c.eta2 = *std::max_element(r2.begin(), r2.end());
  c.eta = std::max(c.eta1, c.eta2);
  const auto env = measure_lemma_envelope(LemmaId::HS_global, *grid, log_time_grid(1e-5, 10.0, 120),
                                          {.s = 1.0, .crossover = opt.crossover});
  c.gamma2 = env.fitted_constant;
  c.delta = 1.0 / (4.0 * c.eta * std::max(1.0, c.gamma2));
  return c;
}

}  // namespace ksadv
