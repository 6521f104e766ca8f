#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ksadv/field.hpp"
#include "ksadv/flows.hpp"
#include "ksadv/semigroup.hpp"

namespace ksadv {

enum class Scheme { IF_RK4, IF_Euler };

/// Which evolution equation a run advances.
///   full             d_t phi + v.grad phi + |grad phi|^2 / 2 = -Delta^2 phi - Delta phi
///   projected        the mean-free part psi of the above, with the mean drain removed
///   linear_ks        full without the quadratic term
///   advection_hyper  d_t f + v.grad f + Delta^2 f = 0
enum class Equation { full, projected, linear_ks, advection_hyper };

struct StepperConfig {
  double dt = 1e-3;
  Scheme scheme = Scheme::IF_RK4;
  double t_end = 1.0;
  double cfl_safety = 1.0;
  bool dealias = true;
};

inline double cfl_limit(const StepperConfig& cfg, const TorusGrid& g, double amplitude) {
  return cfg.cfl_safety * g.h_min() / std::max(1.0, std::abs(amplitude));
}

inline void validate(const StepperConfig& cfg, const TorusGrid& g, const VelocityField& v) {
  if (!(cfg.dt > 0.0) || !std::isfinite(cfg.dt)) throw std::invalid_argument("stepper: dt must be positive");
  if (!(cfg.t_end >= 0.0) || !std::isfinite(cfg.t_end)) throw std::invalid_argument("stepper: t_end must be >= 0");
  if (!(cfg.cfl_safety > 0.0 && cfg.cfl_safety <= 1.0))
    throw std::invalid_argument("stepper: cfl_safety must lie in (0, 1]");
  const double lim = cfl_limit(cfg, g, v.amplitude());
  if (cfg.dt > lim)
    throw std::invalid_argument("stepper: dt = " + std::to_string(cfg.dt) + " exceeds the CFL limit " +
                                std::to_string(lim));
}

/// Largest coefficient magnitude tolerated before a run is declared diverged.
inline constexpr double divergence_threshold = 1e12;

inline bool diverged(const SpectralField& f) {
  for (const auto& c : f.coeffs()) {
    if (!std::isfinite(c.real()) || !std::isfinite(c.imag())) return true;
    if (std::abs(c) > divergence_threshold) return true;
  }
  return false;
}

/// The advecting velocity as a run sees it in local time tau:
/// sign * v(origin + tau), or sign * v(origin - tau) when reversed.
class FlowView {
 public:
  FlowView() = default;
  explicit FlowView(const VelocityField& v, double origin = 0.0, bool reversed = false, double sign = 1.0)
      : v_(v), origin_(origin), reversed_(reversed), sign_(sign) {}

  const VelocityField& field() const { return v_; }
  bool active() const { return !v_.is_zero(); }
  double sign() const { return sign_; }

  double original_time(double tau) const { return reversed_ ? origin_ - tau : origin_ + tau; }
  Side original_side(Side s) const {
    if (!reversed_) return s;
    return s == Side::right ? Side::left : Side::right;
  }
  long segment(double tau, Side s) const { return v_.segment(original_time(tau), original_side(s)); }

  /// Local time of the first switch strictly after tau.
  double next_break(double tau) const {
    if (!reversed_) return v_.next_switch_after(origin_ + tau) - origin_;
    return origin_ - v_.prev_switch_before(origin_ - tau);
  }

  std::pair<SpectralField, SpectralField> sample(double tau, const GridPtr& grid, Side s) const {
    auto [vx, vy] = v_.sample(original_time(tau), grid, original_side(s));
    vx *= sign_;
    vy *= sign_;
    return {std::move(vx), std::move(vy)};
  }

 private:
  VelocityField v_;
  double origin_ = 0.0;
  bool reversed_ = false;
  double sign_ = 1.0;
};

/// Nonlinear and advective part of the right-hand side, evaluated
/// pseudo-spectrally: gradients in Fourier space, products on the grid,
/// 2/3-rule truncation of inputs and output. Grid velocities are cached per
/// steady piece of the flow.
class NonlinearOperator {
 public:
  NonlinearOperator(GridPtr grid, Equation eq, FlowView flow = {}, bool dealias = true)
      : grid_(std::move(grid)), eq_(eq), flow_(std::move(flow)), dealias_(dealias) {
    const std::size_t n = grid_->size();
    gx_.resize(n);
    rx_.resize(n);
  }

  Equation equation() const { return eq_; }
  const FlowView& flow() const { return flow_; }
  const GridPtr& grid_ptr() const { return grid_; }

  bool has_quadratic() const { return eq_ == Equation::full || eq_ == Equation::projected; }
  bool is_zero() const { return !has_quadratic() && !flow_.active(); }

  SpectralField operator()(const SpectralField& u, double tau, Side side = Side::right) {
    const auto& g = *grid_;
    const std::size_t n = g.size();
    SpectralField out(grid_);
    if (is_zero()) return out;
    if (eq_ == Equation::projected) require_mean_free(u);

    // both derivatives are real on the grid, so one transform of
    // d_x u + i d_y u carries them as real and imaginary parts
    for (std::size_t i = 0; i < n; ++i) {
      const cplx c = (dealias_ && !g.retained(i)) ? cplx{} : u[i];
      gx_[i] = cplx(0.0, g.kx(i)) * c - g.ky(i) * c;
    }
    const auto& plan = detail::plan_for(g.N1(), g.N2());
    plan.backward(gx_, rx_);

    const bool quad = has_quadratic();
    const VelocityCache* vel = flow_.active() ? &velocity(tau, side) : nullptr;
    for (std::size_t i = 0; i < n; ++i) {
      const double ax = rx_[i].real(), ay = rx_[i].imag();
      double r = 0.0;
      if (quad) r -= 0.5 * (ax * ax + ay * ay);
      if (vel) r -= vel->vx[i] * ax + vel->vy[i] * ay;
      gx_[i] = r;
    }
    plan.forward(gx_, out.coeffs());
    const double scale = 1.0 / static_cast<double>(n);
    for (auto& c : out.coeffs()) c *= scale;
    if (dealias_) out.truncate();
    out.enforce_hermitian();

    if (eq_ == Equation::projected) {
      // add back the spatial average of |grad psi|^2 / 2
      double grad2 = 0.0;
      for (std::size_t i = 0; i < n; ++i)
        if (!dealias_ || g.retained(i)) grad2 += g.kappa(i) * g.kappa(i) * std::norm(u[i]);
      const double m = out[0].real() + 0.5 * grad2;
      if (std::abs(m) > 1e-12 * std::max(1.0, grad2))
        throw std::logic_error("rhs_projected: counterterm failed to cancel the mean");
      out[0] = 0.0;
    }
    return out;
  }

 private:
  struct VelocityCache {
    long segment = 0;
    std::vector<double> vx, vy;
  };

  static void require_mean_free(const SpectralField& u) {
    if (std::abs(u[0]) > 1e-12 * std::max(1.0, u.max_abs()))
      throw std::invalid_argument("rhs_projected: input is not mean-free");
  }

  const VelocityCache& velocity(double tau, Side side) {
    const long seg = flow_.segment(tau, side);
    if (!cache_ || cache_->segment != seg) {
      auto [vx, vy] = flow_.sample(tau, grid_, side);
      cache_ = VelocityCache{seg, vx.to_real(), vy.to_real()};
    }
    return *cache_;
  }

  GridPtr grid_;
  Equation eq_;
  FlowView flow_;
  bool dealias_;
  std::vector<cplx> gx_, rx_;
  std::optional<VelocityCache> cache_;
};

/// -|grad phi|^2 / 2 - v(t).grad phi
inline SpectralField rhs_nonlinear(const SpectralField& phi, const VelocityField& v, double t, bool dealias = true) {
  NonlinearOperator op(phi.grid_ptr(), Equation::full, FlowView(v), dealias);
  return op(phi, t);
}

/// Mean-free part of the projected equation's nonlinearity:
/// -|grad psi|^2 / 2 + mean(|grad psi|^2) / 2 - v(t).grad psi
inline SpectralField rhs_projected(const SpectralField& psi, const VelocityField& v, double t, bool dealias = true) {
  NonlinearOperator op(psi.grid_ptr(), Equation::projected, FlowView(v), dealias);
  return op(psi, t);
}

inline SymbolKind symbol_of(Equation eq) {
  return eq == Equation::advection_hyper ? SymbolKind::hyper : SymbolKind::full_L;
}

/// Integrating-factor time stepper. The linear part is applied through the
/// exact multipliers exp(-h sigma) and exp(-h sigma / 2).
class Stepper {
 public:
  Stepper(NonlinearOperator op, Scheme scheme) : op_(std::move(op)), scheme_(scheme) {}

  NonlinearOperator& op() { return op_; }
  Scheme scheme() const { return scheme_; }

  /// Advances u from local time tau by h. The step must not cross a flow
  /// switch. Every stage takes the flow segment at the step midpoint, so
  /// round-off in tau + h cannot select the neighbouring segment.
  SpectralField step(const SpectralField& u, double tau, double h) {
    const auto& [E, E2] = weights(h);
    const std::size_t n = u.size();
    if (op_.is_zero()) return E.apply(u);

    if (scheme_ == Scheme::IF_Euler) {
      SpectralField k1 = op_(u, tau + 0.5 * h, Side::right);
      SpectralField out = u;
      out.axpy(h, k1);
      out = E.apply(std::move(out));
      flush_tiny(out);
      return out;
    }

    const auto e = E.weights();
    const auto e2 = E2.weights();
    const double mid = tau + 0.5 * h;
    SpectralField k1 = op_(u, mid, Side::right);

    SpectralField a(u.grid_ptr());
    for (std::size_t i = 0; i < n; ++i) a[i] = e2[i] * (u[i] + 0.5 * h * k1[i]);
    SpectralField k2 = op_(a, mid, Side::right);

    SpectralField b(u.grid_ptr());
    for (std::size_t i = 0; i < n; ++i) b[i] = e2[i] * u[i] + 0.5 * h * k2[i];
    SpectralField k3 = op_(b, mid, Side::right);

    SpectralField c(u.grid_ptr());
    for (std::size_t i = 0; i < n; ++i) c[i] = e[i] * u[i] + h * e2[i] * k3[i];
    SpectralField k4 = op_(c, mid, Side::right);

    SpectralField out(u.grid_ptr());
    for (std::size_t i = 0; i < n; ++i)
      out[i] = e[i] * u[i] + (h / 6.0) * (e[i] * k1[i] + 2.0 * e2[i] * (k2[i] + k3[i]) + k4[i]);
    if (op_.equation() == Equation::projected) out[0] = 0.0;
    flush_tiny(out);
    return out;
  }

 private:
  // Coefficients this small only ever turn into subnormals, which are slow.
  static void flush_tiny(SpectralField& f) {
    for (auto& c : f.coeffs())
      if (std::abs(c.real()) < 1e-250 && std::abs(c.imag()) < 1e-250) c = 0.0;
  }

  using KernelPair = std::pair<MultiplierKernel, MultiplierKernel>;

  const KernelPair& weights(double h) {
    auto it = kernels_.find(h);
    if (it == kernels_.end()) {
      if (kernels_.size() > 8) kernels_.clear();
      const auto kind = symbol_of(op_.equation());
      it = kernels_
               .emplace(h, KernelPair{MultiplierKernel(op_.grid_ptr(), kind, h),
                                      MultiplierKernel(op_.grid_ptr(), kind, 0.5 * h)})
               .first;
    }
    return it->second;
  }

  NonlinearOperator op_;
  Scheme scheme_;
  std::map<double, KernelPair> kernels_;
};

/// One step of the full equation from time t.
inline SpectralField step(const SpectralField& phi, const VelocityField& v, double t, const StepperConfig& cfg,
                          Equation eq = Equation::full) {
  validate(cfg, phi.grid(), v);
  Stepper st(NonlinearOperator(phi.grid_ptr(), eq, FlowView(v), cfg.dealias), cfg.scheme);
  return st.step(phi, t, cfg.dt);
}

struct TrajectoryRecord {
  double t = 0.0;
  double l2 = 0.0;
  double h1dot = 0.0;
  double h2dot = 0.0;
  double mean = 0.0;
  double energy_residual = 0.0;
  double cum_h2 = 0.0;
};

struct RunOptions {
  /// Emit a record every `record_every` steps (0: only first and last).
  std::size_t record_every = 1;
  /// Keep the state at every step time (needed by certificates and Picard checks).
  bool keep_states = false;
  /// Stop and flag a blow-up once ||u||_{L2} exceeds this.
  double l2_ceiling = std::numeric_limits<double>::infinity();
};

struct RunResult {
  std::vector<TrajectoryRecord> records;
  SpectralField final_state;
  bool diverged = false;
  bool ceiling_hit = false;
  double t_stop = 0.0;
  // per step time: t, ||u||^2, ||grad u||^2, ||Delta u||^2
  std::vector<double> times, l2sq, grad2, lap2;
  std::vector<SpectralField> states;

  explicit RunResult(GridPtr g) : final_state(std::move(g)) {}
};

namespace detail {

// int u |grad u|^2 dx by grid quadrature (exact for fields on the retained lattice).
inline double cubic_integral(const SpectralField& u) {
  auto [gx, gy] = gradient(u);
  const auto a = u.to_real(), bx = gx.to_real(), by = gy.to_real();
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * (bx[i] * bx[i] + by[i] * by[i]);
  return s * u.grid().area() / static_cast<double>(a.size());
}

}  // namespace detail

/// Advances u0 over [0, t_end] (local time) and records norms and the
/// energy-identity defect
///   ||u(t)||^2 + 2 int ||Delta u||^2 - ||u0||^2 - 2 int ||grad u||^2 + int int u |grad u|^2
/// (terms absent from the equation are dropped), with trapezoidal time quadrature.
/// Steps are shortened to land on flow switch times.
inline RunResult run(const SpectralField& u0, NonlinearOperator op, const StepperConfig& cfg, RunOptions opt = {}) {
  if (!(cfg.dt > 0.0)) throw std::invalid_argument("run: dt must be positive");
  if (!(cfg.t_end >= 0.0)) throw std::invalid_argument("run: t_end must be >= 0");
  const Equation eq = op.equation();
  const bool with_grad = eq != Equation::advection_hyper;
  const bool with_cubic = op.has_quadratic();
  const FlowView flow = op.flow();
  Stepper st(std::move(op), cfg.scheme);

  RunResult res(u0.grid_ptr());
  SpectralField u = u0;
  if (eq == Equation::projected && std::abs(u[0]) > 1e-12 * std::max(1.0, u.max_abs()))
    throw std::invalid_argument("run: projected equation needs mean-free data");

  double int_h2 = 0.0, int_g2 = 0.0, int_cubic = 0.0;
  double prev_h2 = 0.0, prev_g2 = 0.0, prev_cubic = 0.0;
  const double l20 = std::pow(l2_norm(u), 2);

  auto observe = [&](double t, bool force_record, std::size_t step_index) {
    const NormReport nr = norms(u);
    const double h2 = nr.h2dot * nr.h2dot, g2 = nr.h1dot * nr.h1dot;
    const double cub = with_cubic ? detail::cubic_integral(u) : 0.0;
    if (step_index > 0) {
      const double dt = t - res.times.back();
      int_h2 += 0.5 * dt * (prev_h2 + h2);
      int_g2 += 0.5 * dt * (prev_g2 + g2);
      int_cubic += 0.5 * dt * (prev_cubic + cub);
    }
    prev_h2 = h2;
    prev_g2 = g2;
    prev_cubic = cub;
    res.times.push_back(t);
    res.l2sq.push_back(nr.l2 * nr.l2);
    res.grad2.push_back(g2);
    res.lap2.push_back(h2);
    if (opt.keep_states) res.states.push_back(u);
    const bool every = opt.record_every > 0 && step_index % opt.record_every == 0;
    if (force_record || every) {
      double resid = nr.l2 * nr.l2 + 2.0 * int_h2 - l20;
      if (with_grad) resid -= 2.0 * int_g2;
      if (with_cubic) resid += int_cubic;
      res.records.push_back({t, nr.l2, nr.h1dot, nr.h2dot, nr.mean, resid, int_h2});
    }
  };

  observe(0.0, true, 0);
  double t = 0.0;
  std::size_t k = 0;
  const double eps = 1e-8 * cfg.dt;  // absorbs round-off accumulated in t
  while (cfg.t_end - t > eps) {
    double target = std::min(t + cfg.dt, cfg.t_end);
    if (cfg.t_end - target < eps) target = cfg.t_end;
    if (flow.active()) {
      const double br = flow.next_break(t);
      if (br < target + eps) target = std::max(br, t + eps);
    }
    u = st.step(u, t, target - t);
    t = target;
    ++k;
    if (diverged(u)) {
      res.diverged = true;
      res.t_stop = t;
      break;
    }
    const bool over = l2_norm(u) > opt.l2_ceiling;
    observe(t, over || cfg.t_end - t <= eps, k);
    if (over) {
      res.ceiling_hit = true;
      res.t_stop = t;
      break;
    }
  }
  if (!res.diverged && !res.ceiling_hit) res.t_stop = t;
  res.final_state = u;
  return res;
}

/// Runs `eq` for the data phi0 under the flow v with the given config.
inline RunResult simulate(const SpectralField& phi0, const VelocityField& v, const StepperConfig& cfg,
                          Equation eq = Equation::full, RunOptions opt = {}) {
  validate(cfg, phi0.grid(), v);
  return run(phi0, NonlinearOperator(phi0.grid_ptr(), eq, FlowView(v), cfg.dealias), cfg, opt);
}

struct MeanPath {
  std::vector<double> t;
  std::vector<double> average;   // the stored mean coefficient
  std::vector<double> integral;  // L1 L2 times the average
};

/// Mean of phi reconstructed from the projected run: the spatial integral
/// obeys d/dt int phi = -||grad psi||^2 / 2, integrated by the trapezoid rule.
inline MeanPath evolve_mean(std::span<const double> times, std::span<const double> grad2, double mean0,
                            double area) {
  if (times.size() != grad2.size()) throw std::invalid_argument("evolve_mean: size mismatch");
  MeanPath p;
  double integ = mean0 * area;
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (i > 0) integ -= 0.25 * (times[i] - times[i - 1]) * (grad2[i] + grad2[i - 1]);
    p.t.push_back(times[i]);
    p.integral.push_back(integ);
    p.average.push_back(integ / area);
  }
  return p;
}

inline MeanPath evolve_mean(const RunResult& r, double mean0) {
  return evolve_mean(r.times, r.grad2, mean0, r.final_state.grid().area());
}

/// Solution operator S_{s,t} of d_t f + v.grad f + Delta^2 f = 0.
/// Without a flow this is the exact hyperdiffusion multiplier.
inline SpectralField linear_propagator_S(double s, double t, const SpectralField& f, const VelocityField& v,
                                         double dt) {
  if (!(t >= s)) throw std::invalid_argument("linear_propagator_S: need t >= s");
  if (std::abs(f[0]) > 1e-12 * std::max(1.0, f.max_abs()))
    throw std::invalid_argument("linear_propagator_S: data must be mean-free");
  if (t == s) return f;
  if (v.is_zero()) return apply_semigroup(SymbolKind::hyper, t - s, f);
  StepperConfig cfg;
  cfg.dt = dt;
  cfg.t_end = t - s;
  RunOptions opt;
  opt.record_every = 0;
  auto r = run(f, NonlinearOperator(f.grid_ptr(), Equation::advection_hyper, FlowView(v, s)), cfg, opt);
  if (r.diverged) throw std::runtime_error("linear_propagator_S: diverged");
  r.final_state[0] = 0.0;
  return r.final_state;
}

/// Adjoint S_{s,t}^*: maps data at time t back to time s by solving the
/// equation with advection -v(t - tau) forward in tau over [0, t - s].
inline SpectralField adjoint_propagator_S(double s, double t, const SpectralField& g, const VelocityField& v,
                                          double dt) {
  if (!(t >= s)) throw std::invalid_argument("adjoint_propagator_S: need t >= s");
  if (t == s) return g;
  if (v.is_zero()) return apply_semigroup(SymbolKind::hyper, t - s, g);
  StepperConfig cfg;
  cfg.dt = dt;
  cfg.t_end = t - s;
  RunOptions opt;
  opt.record_every = 0;
  auto r = run(g, NonlinearOperator(g.grid_ptr(), Equation::advection_hyper, FlowView(v, t, true, -1.0)), cfg, opt);
  if (r.diverged) throw std::runtime_error("adjoint_propagator_S: diverged");
  r.final_state[0] = 0.0;
  return r.final_state;
}

}  // namespace ksadv
