#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <random>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "ksadv/fft.hpp"
#include "ksadv/grid.hpp"

namespace ksadv {

using cplx = std::complex<double>;

/// Real periodic scalar field stored as its Fourier-series coefficients
///   f(x) = sum_k fhat(k) exp(i k~ . x),
/// so fhat(0) is the spatial average. Storage is the full N1 x N2 lattice
/// in FFT order; real-valuedness is the Hermitian symmetry
/// fhat(-k) = conj(fhat(k)).
class SpectralField {
 public:
  explicit SpectralField(GridPtr grid) : grid_(std::move(grid)), c_(grid_->size()) {}

  const TorusGrid& grid() const { return *grid_; }
  const GridPtr& grid_ptr() const { return grid_; }
  std::size_t size() const { return c_.size(); }

  std::span<cplx> coeffs() { return c_; }
  std::span<const cplx> coeffs() const { return c_; }
  cplx& operator[](std::size_t i) { return c_[i]; }
  const cplx& operator[](std::size_t i) const { return c_[i]; }
  cplx& at(int k1, int k2) { return c_[grid_->index(k1, k2)]; }
  const cplx& at(int k1, int k2) const { return c_[grid_->index(k1, k2)]; }

  /// Spatial average (the k = 0 coefficient, real part).
  double mean() const { return c_[0].real(); }
  /// Spatial integral, i.e. L1*L2 times the average.
  double integral() const { return grid_->area() * c_[0].real(); }

  SpectralField& operator+=(const SpectralField& o) {
    check_same_grid(o);
    for (std::size_t i = 0; i < c_.size(); ++i) c_[i] += o.c_[i];
    return *this;
  }
  SpectralField& operator-=(const SpectralField& o) {
    check_same_grid(o);
    for (std::size_t i = 0; i < c_.size(); ++i) c_[i] -= o.c_[i];
    return *this;
  }
  SpectralField& operator*=(double a) {
    for (auto& v : c_) v *= a;
    return *this;
  }
  /// this += a * o
  SpectralField& axpy(double a, const SpectralField& o) {
    check_same_grid(o);
    for (std::size_t i = 0; i < c_.size(); ++i) c_[i] += a * o.c_[i];
    return *this;
  }

  friend SpectralField operator+(SpectralField a, const SpectralField& b) { return a += b; }
  friend SpectralField operator-(SpectralField a, const SpectralField& b) { return a -= b; }
  friend SpectralField operator*(double s, SpectralField a) { return a *= s; }

  /// Zero every mode outside the 2/3-rule cutoff.
  SpectralField& truncate() {
    for (std::size_t i = 0; i < c_.size(); ++i)
      if (!grid_->retained(i)) c_[i] = 0.0;
    return *this;
  }

  /// Replace each pair (k, -k) by its Hermitian average.
  SpectralField& enforce_hermitian() {
    for (std::size_t i = 0; i < c_.size(); ++i) {
      const std::size_t j = grid_->negated(i);
      if (j < i) continue;
      if (j == i) {
        c_[i] = c_[i].real();
      } else {
        const cplx avg = 0.5 * (c_[i] + std::conj(c_[j]));
        c_[i] = avg;
        c_[j] = std::conj(avg);
      }
    }
    return *this;
  }

  /// Largest deviation from Hermitian symmetry.
  double hermitian_defect() const {
    double d = 0.0;
    for (std::size_t i = 0; i < c_.size(); ++i)
      d = std::max(d, std::abs(c_[i] - std::conj(c_[grid_->negated(i)])));
    return d;
  }

  double max_abs() const {
    double m = 0.0;
    for (const auto& v : c_) m = std::max(m, std::abs(v));
    return m;
  }

  bool all_finite() const {
    return std::all_of(c_.begin(), c_.end(),
                       [](const cplx& v) { return std::isfinite(v.real()) && std::isfinite(v.imag()); });
  }

  /// Grid values, row-major (i1 * N2 + i2).
  std::vector<double> to_real() const {
    std::vector<cplx> out(c_.size());
    detail::plan_for(grid_->N1(), grid_->N2()).backward(c_, out);
    std::vector<double> r(c_.size());
    for (std::size_t i = 0; i < r.size(); ++i) r[i] = out[i].real();
    return r;
  }

  /// Coefficients of grid values; Hermitian by construction. With
  /// `truncate` the result is restricted to the retained lattice.
  static SpectralField from_real(GridPtr grid, std::span<const double> values, bool truncate = true) {
    SpectralField f(std::move(grid));
    if (values.size() != f.size()) throw std::invalid_argument("from_real: size mismatch");
    std::vector<cplx> in(values.begin(), values.end());
    detail::plan_for(f.grid().N1(), f.grid().N2()).forward(in, f.c_);
    const double scale = 1.0 / static_cast<double>(f.size());
    for (auto& v : f.c_) v *= scale;
    if (truncate) f.truncate();
    f.enforce_hermitian();
    return f;
  }

  void check_same_grid(const SpectralField& o) const {
    if (grid_ != o.grid_ && !grid_->same_shape(*o.grid_))
      throw std::invalid_argument("SpectralField: grid mismatch");
  }

 private:
  GridPtr grid_;
  std::vector<cplx> c_;
};

struct NormReport {
  double l2 = 0.0;
  double h1dot = 0.0;
  double h2dot = 0.0;
  double mean = 0.0;
};

namespace detail {

inline double weighted_sum(const SpectralField& f, double power) {
  const auto& g = f.grid();
  double s = 0.0;
  for (std::size_t i = 1; i < f.size(); ++i) {
    const double w = power == 0.0 ? 1.0 : std::pow(g.kappa(i), 2.0 * power);
    s += w * std::norm(f[i]);
  }
  return s;
}

}  // namespace detail

/// Homogeneous Sobolev seminorm ||(-Delta)^{s/2} f||_{L2}.
inline double hs_seminorm(const SpectralField& f, double s) {
  return std::sqrt(f.grid().area() * detail::weighted_sum(f, s));
}

inline double l2_norm(const SpectralField& f) {
  double s = 0.0;
  for (const auto& v : f.coeffs()) s += std::norm(v);
  return std::sqrt(f.grid().area() * s);
}

inline NormReport norms(const SpectralField& f) {
  const auto& g = f.grid();
  double s0 = 0.0, s1 = 0.0, s2 = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    const double a = std::norm(f[i]);
    const double k2 = g.kappa(i) * g.kappa(i);
    s0 += a;
    s1 += k2 * a;
    s2 += k2 * k2 * a;
  }
  const double area = g.area();
  return {std::sqrt(area * s0), std::sqrt(area * s1), std::sqrt(area * s2), f.mean()};
}

/// Real L2 inner product  int f g dx  for real fields.
inline double inner(const SpectralField& f, const SpectralField& g) {
  f.check_same_grid(g);
  double s = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) s += (std::conj(f[i]) * g[i]).real();
  return f.grid().area() * s;
}

inline SpectralField project_mean_free(SpectralField f) {
  f[0] = 0.0;
  return f;
}

/// Spectral gradient: component j has coefficients i k~_j fhat.
inline std::pair<SpectralField, SpectralField> gradient(const SpectralField& f) {
  const auto& g = f.grid();
  SpectralField dx(f.grid_ptr()), dy(f.grid_ptr());
  for (std::size_t i = 0; i < f.size(); ++i) {
    dx[i] = cplx(0.0, g.kx(i)) * f[i];
    dy[i] = cplx(0.0, g.ky(i)) * f[i];
  }
  return {std::move(dx), std::move(dy)};
}

inline SpectralField laplacian(const SpectralField& f) {
  const auto& g = f.grid();
  SpectralField out(f.grid_ptr());
  for (std::size_t i = 0; i < f.size(); ++i) out[i] = -(g.kappa(i) * g.kappa(i)) * f[i];
  return out;
}

inline SpectralField divergence(const SpectralField& vx, const SpectralField& vy) {
  vx.check_same_grid(vy);
  const auto& g = vx.grid();
  SpectralField out(vx.grid_ptr());
  for (std::size_t i = 0; i < vx.size(); ++i)
    out[i] = cplx(0.0, g.kx(i)) * vx[i] + cplx(0.0, g.ky(i)) * vy[i];
  return out;
}

/// Pointwise product of two fields. With `dealias` both inputs are
/// truncated to the retained lattice and the result is re-truncated, which
/// makes it the exact Fourier product restricted to the retained modes.
inline SpectralField dealiased_product(const SpectralField& f, const SpectralField& g, bool dealias = true) {
  f.check_same_grid(g);
  const auto& grid = f.grid();
  const auto& plan = detail::plan_for(grid.N1(), grid.N2());
  const std::size_t n = f.size();
  std::vector<cplx> a(f.coeffs().begin(), f.coeffs().end());
  std::vector<cplx> b(g.coeffs().begin(), g.coeffs().end());
  if (dealias) {
    for (std::size_t i = 0; i < n; ++i)
      if (!grid.retained(i)) a[i] = b[i] = 0.0;
  }
  std::vector<cplx> ra(n), rb(n);
  plan.backward(a, ra);
  plan.backward(b, rb);
  for (std::size_t i = 0; i < n; ++i) ra[i] = ra[i].real() * rb[i].real();
  SpectralField out(f.grid_ptr());
  plan.forward(ra, out.coeffs());
  const double scale = 1.0 / static_cast<double>(n);
  for (auto& v : out.coeffs()) v *= scale;
  if (dealias) out.truncate();
  out.enforce_hermitian();
  return out;
}

/// a * cos(k~ . x + phase) for signed wavenumber (k1, k2).
inline SpectralField single_mode(const GridPtr& grid, int k1, int k2, double amplitude, double phase = 0.0) {
  SpectralField f(grid);
  if (k1 == 0 && k2 == 0) {
    f[0] = amplitude * std::cos(phase);
    return f;
  }
  const cplx half = 0.5 * amplitude * std::polar(1.0, phase);
  f.at(k1, k2) += half;
  f.at(-k1, -k2) += std::conj(half);
  return f;
}

inline SpectralField constant_field(const GridPtr& grid, double value) {
  SpectralField f(grid);
  f[0] = value;
  return f;
}

/// Mean-free random field on the retained lattice: independent complex
/// Gaussian coefficients shaped by exp(-decay * kappa^2), Hermitian
/// symmetrized and rescaled to the requested L2 norm.
template <class Rng>
SpectralField random_field(const GridPtr& grid, Rng& rng, double spectrum_decay, double target_l2) {
  std::normal_distribution<double> normal(0.0, 1.0);
  SpectralField f(grid);
  for (std::size_t i : grid->retained_modes()) {
    if (i == 0) continue;
    const double env = std::exp(-spectrum_decay * grid->kappa(i) * grid->kappa(i));
    const double re = normal(rng);
    const double im = normal(rng);
    f[i] = env * cplx(re, im);
  }
  f.enforce_hermitian();
  f[0] = 0.0;
  const double n = l2_norm(f);
  if (n > 0.0) f *= target_l2 / n;
  return f;
}

}  // namespace ksadv
