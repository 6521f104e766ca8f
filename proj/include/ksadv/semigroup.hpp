#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "ksadv/field.hpp"
#include "ksadv/parallel.hpp"

namespace ksadv {

/// Linear symbols: full_L is kappa^4 - kappa^2 (Delta^2 + Delta),
/// hyper is kappa^4 (Delta^2 alone).
enum class SymbolKind { full_L, hyper };

inline double symbol_value(const TorusGrid& g, std::size_t i, SymbolKind kind) {
  return kind == SymbolKind::full_L ? g.sigma(i) : std::pow(g.kappa(i), 4);
}

/// Per-mode weights exp(-t * symbol) for a fixed t.
class MultiplierKernel {
 public:
  MultiplierKernel(GridPtr grid, SymbolKind kind, double t) : grid_(std::move(grid)), kind_(kind), t_(t) {
    if (!(t >= 0.0)) throw std::invalid_argument("MultiplierKernel: negative time (the flow is forward-only)");
    weights_.resize(grid_->size());
    for (std::size_t i = 0; i < weights_.size(); ++i) {
      const double w = std::exp(-t * symbol_value(*grid_, i, kind));
      weights_[i] = w < 1e-300 ? 0.0 : w;  // keep subnormals out of later arithmetic
    }
  }

  SymbolKind kind() const { return kind_; }
  double t() const { return t_; }
  std::span<const double> weights() const { return weights_; }

  SpectralField apply(SpectralField f) const {
    if (!grid_->same_shape(f.grid())) throw std::invalid_argument("MultiplierKernel: grid mismatch");
    if (t_ == 0.0) return f;
    for (std::size_t i = 0; i < f.size(); ++i) f[i] *= weights_[i];
    return f;
  }

 private:
  GridPtr grid_;
  SymbolKind kind_;
  double t_;
  std::vector<double> weights_;
};

inline SpectralField apply_semigroup(SymbolKind kind, double t, const SpectralField& f) {
  return MultiplierKernel(f.grid_ptr(), kind, t).apply(f);
}

struct GrowingMode {
  int k1 = 0;
  int k2 = 0;
  double kappa = 0.0;
  double sigma = 0.0;  // negative: the mode grows as exp(-sigma t)
};

/// Retained modes whose linear symbol is negative, fastest growing first.
inline std::vector<GrowingMode> growing_modes(const TorusGrid& g) {
  std::vector<GrowingMode> out;
  for (std::size_t i : g.retained_modes()) {
    if (i == 0 || g.sigma(i) >= 0.0) continue;
    out.push_back({g.k1_of(i), g.k2_of(i), g.kappa(i), g.sigma(i)});
  }
  std::sort(out.begin(), out.end(), [](const GrowingMode& a, const GrowingMode& b) {
    if (a.sigma != b.sigma) return a.sigma < b.sigma;
    if (a.k1 != b.k1) return a.k1 < b.k1;
    return a.k2 < b.k2;
  });
  return out;
}

// ---------------------------------------------------------------------------
// Operator-norm envelopes of exp(-t L)

enum class LemmaId { L2L1_local, GRAD_local, L2L1_global, HS_global };

inline std::string_view to_string(LemmaId id) {
  switch (id) {
    case LemmaId::L2L1_local: return "L2L1_local";
    case LemmaId::GRAD_local: return "GRAD_local";
    case LemmaId::L2L1_global: return "L2L1_global";
    case LemmaId::HS_global: return "HS_global";
  }
  return "?";
}

inline LemmaId lemma_from_string(std::string_view s) {
  for (auto id : {LemmaId::L2L1_local, LemmaId::GRAD_local, LemmaId::L2L1_global, LemmaId::HS_global})
    if (to_string(id) == s) return id;
  throw std::invalid_argument("unknown lemma id: " + std::string(s));
}

struct EnvelopeOptions {
  double s = 1.0;          // Sobolev index for GRAD_local / HS_global
  double crossover = 1.0;  // T1 (L2L1_global) or T2 (HS_global)
};

struct LemmaEnvelope {
  LemmaId lemma_id = LemmaId::L2L1_local;
  double s = 0.0;
  double crossover = 1.0;
  bool applicable = true;
  std::string note;
  std::vector<double> time_grid;
  std::vector<double> measured;
  std::vector<double> bound;  // envelope h(t) without its constant
  double fitted_constant = 0.0;

  /// Index where measured / bound is largest (where the fit is tight).
  std::size_t tight_index() const {
    std::size_t best = 0;
    double r = -1.0;
    for (std::size_t i = 0; i < measured.size(); ++i) {
      const double q = measured[i] / bound[i];
      if (q > r) {
        r = q;
        best = i;
      }
    }
    return best;
  }
};

namespace detail {

// L1 -> L2 constant on the retained lattice: |fhat(k)| <= ||f||_1 / area,
// hence ||e^{-tL} f||_2 <= area^{-1/2} ||(e^{-t sigma})_{k != 0}||_{l2} ||f||_1.
inline double l2l1_measure(const TorusGrid& g, double t) {
  double s = 0.0;
  for (std::size_t i : g.retained_modes())
    if (i != 0) s += std::exp(-2.0 * t * g.sigma(i));
  return std::sqrt(s / g.area());
}

// sup_{k != 0} kappa^s e^{-t sigma}: the exact L2 -> H^s operator norm.
inline double hs_measure(const TorusGrid& g, double t, double s) {
  double m = 0.0;
  for (std::size_t i : g.retained_modes())
    if (i != 0) m = std::max(m, std::pow(g.kappa(i), s) * std::exp(-t * g.sigma(i)));
  return m;
}

}  // namespace detail

/// Measures the operator quantity a semigroup lemma controls on every
/// sampled time and fits the least admissible constant in front of the
/// lemma's envelope function.
inline LemmaEnvelope measure_lemma_envelope(LemmaId id, const TorusGrid& grid, std::span<const double> time_grid,
                                            EnvelopeOptions opt = {}) {
  LemmaEnvelope env;
  env.lemma_id = id;
  env.s = opt.s;
  env.crossover = opt.crossover;
  env.time_grid.assign(time_grid.begin(), time_grid.end());
  if (time_grid.empty()) throw std::invalid_argument("measure_lemma_envelope: empty time grid");

  const bool local = id == LemmaId::L2L1_local || id == LemmaId::GRAD_local;
  for (double t : time_grid) {
    if (!(t > 0.0)) throw std::invalid_argument("measure_lemma_envelope: times must be positive");
    if (local && !(t < 1.0)) throw std::invalid_argument("measure_lemma_envelope: local lemmas need t in (0,1)");
  }
  if (!local && !grid.strictly_dissipative()) {
    env.applicable = false;
    env.note = "box has modes with sigma <= 0; global envelopes need both periods < 2*pi";
    return env;
  }
  if (!local && !(opt.crossover > 0.0)) throw std::invalid_argument("measure_lemma_envelope: crossover must be > 0");

  const std::size_t n = time_grid.size();
  env.measured.resize(n);
  env.bound.resize(n);
  const double beta = grid.beta();
  parallel_for(n, [&](std::size_t j) {
    const double t = time_grid[j];
    switch (id) {
      case LemmaId::L2L1_local:
        env.measured[j] = detail::l2l1_measure(grid, t);
        env.bound[j] = std::pow(t, -0.25);
        break;
      case LemmaId::GRAD_local:
        env.measured[j] = detail::hs_measure(grid, t, opt.s);
        env.bound[j] = std::pow(t, -opt.s / 4.0);
        break;
      case LemmaId::L2L1_global:
        env.measured[j] = detail::l2l1_measure(grid, t);
        env.bound[j] = t <= opt.crossover ? std::pow(t, -0.25) : std::exp(-beta * t) / std::sqrt(t);
        break;
      case LemmaId::HS_global:
        env.measured[j] = detail::hs_measure(grid, t, opt.s);
        env.bound[j] = t <= opt.crossover ? std::pow(t, -opt.s / 4.0) : std::exp(-beta * t);
        break;
    }
  });
  for (std::size_t j = 0; j < n; ++j)
    env.fitted_constant = std::max(env.fitted_constant, env.measured[j] / env.bound[j]);
  return env;
}

/// Log-spaced times in [lo, hi].
inline std::vector<double> log_time_grid(double lo, double hi, std::size_t count) {
  if (!(lo > 0.0) || !(hi > lo) || count < 2) throw std::invalid_argument("log_time_grid: bad range");
  std::vector<double> t(count);
  const double a = std::log(lo), b = std::log(hi);
  for (std::size_t i = 0; i < count; ++i) t[i] = std::exp(a + (b - a) * static_cast<double>(i) / (count - 1));
  return t;
}

}  // namespace ksadv
