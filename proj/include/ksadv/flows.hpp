#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ksadv/field.hpp"

namespace ksadv {

enum class FlowKind { zero, steady_shear, alternating_shear, cellular, user_spectral };

inline std::string_view to_string(FlowKind k) {
  switch (k) {
    case FlowKind::zero: return "zero";
    case FlowKind::steady_shear: return "steady_shear";
    case FlowKind::alternating_shear: return "alternating_shear";
    case FlowKind::cellular: return "cellular";
    case FlowKind::user_spectral: return "user_spectral";
  }
  return "?";
}

inline FlowKind flow_kind_from_string(std::string_view s) {
  for (auto k : {FlowKind::zero, FlowKind::steady_shear, FlowKind::alternating_shear, FlowKind::cellular,
                 FlowKind::user_spectral})
    if (to_string(k) == s) return k;
  throw std::invalid_argument("unknown flow kind: " + std::string(s));
}

/// Which one-sided limit to take at a switch time of a piecewise-steady flow.
enum class Side { right, left };

/// One Fourier mode of a user-supplied steady velocity field.
struct VelocityMode {
  int k1 = 0;
  int k2 = 0;
  std::complex<double> v1;
  std::complex<double> v2;
};

/// Divergence-free advecting velocity on the L1 x L2 box.
///
///   steady_shear       A (sin(2 pi y / L2 + phase_a), 0)
///   alternating_shear  the steady shear on [n T, n T + T/2), then
///                      A (0, sin(2 pi x / L1 + phase_b)) on [n T + T/2, (n+1) T)
///   cellular           stream function (A / k) sin(a x) sin(b y), a = 2 pi / L1,
///                      b = 2 pi / L2, k = |(a, b)|
///   user_spectral      steady, given by Fourier coefficients on the lattice
///
/// Every catalog flow is piecewise constant in time, so a time step that
/// does not cross a switch sees a single velocity field.
class VelocityField {
 public:
  VelocityField() = default;

  static VelocityField zero() { return {}; }

  static VelocityField steady_shear(double amplitude, double phase = 0.0) {
    VelocityField v;
    v.kind_ = FlowKind::steady_shear;
    v.amplitude_ = amplitude;
    v.phase_a_ = phase;
    return v;
  }

  static VelocityField alternating_shear(double amplitude, double period, double phase_a = 0.0,
                                         double phase_b = 0.0) {
    if (!(period > 0.0)) throw std::invalid_argument("alternating_shear: switching period must be > 0");
    VelocityField v;
    v.kind_ = FlowKind::alternating_shear;
    v.amplitude_ = amplitude;
    v.period_ = period;
    v.phase_a_ = phase_a;
    v.phase_b_ = phase_b;
    return v;
  }

  static VelocityField cellular(double amplitude) {
    VelocityField v;
    v.kind_ = FlowKind::cellular;
    v.amplitude_ = amplitude;
    return v;
  }

  /// Steady flow from Fourier modes on the L1 x L2 box. Missing conjugate
  /// partners are filled in; a mode with k~ . vhat != 0 is rejected.
  static VelocityField user_spectral(std::vector<VelocityMode> modes, double L1, double L2) {
    if (!(L1 > 0.0) || !(L2 > 0.0)) throw std::invalid_argument("user_spectral: box periods must be positive");
    double scale = 0.0;
    for (const auto& m : modes) scale = std::max({scale, std::abs(m.v1), std::abs(m.v2)});
    for (const auto& m : modes) {
      const double kx = 2.0 * std::numbers::pi * m.k1 / L1;
      const double ky = 2.0 * std::numbers::pi * m.k2 / L2;
      const double div = std::abs(kx * m.v1 + ky * m.v2);
      if (div > 1e-12 * std::max(1.0, scale * std::hypot(kx, ky)))
        throw std::invalid_argument("user_spectral: mode (" + std::to_string(m.k1) + "," + std::to_string(m.k2) +
                                    ") is not divergence-free");
      if (m.k1 == 0 && m.k2 == 0 && (m.v1.imag() != 0.0 || m.v2.imag() != 0.0))
        throw std::invalid_argument("user_spectral: mean velocity must be real");
    }
    VelocityField v;
    v.kind_ = FlowKind::user_spectral;
    v.amplitude_ = 1.0;
    v.modes_ = std::move(modes);
    v.box_L1_ = L1;
    v.box_L2_ = L2;
    return v;
  }

  FlowKind kind() const { return kind_; }
  double amplitude() const { return amplitude_; }
  double switching_period() const { return period_; }
  bool time_periodic() const { return kind_ == FlowKind::alternating_shear; }
  bool is_zero() const { return kind_ == FlowKind::zero || amplitude_ == 0.0; }
  const std::vector<VelocityMode>& modes() const { return modes_; }

  /// Same flow with amplitude multiplied by `factor`.
  VelocityField scaled(double factor) const {
    VelocityField v = *this;
    v.amplitude_ *= factor;
    return v;
  }

  /// Index of the steady piece containing t (one-sided at switch times).
  long segment(double t, Side side = Side::right) const {
    if (kind_ != FlowKind::alternating_shear) return 0;
    const double half = 0.5 * period_;
    const double q = t / half;
    double s = std::floor(q);
    if (side == Side::left && s == q) s -= 1.0;
    return static_cast<long>(s);
  }

  /// First switch time strictly after t (infinity for steady flows).
  double next_switch_after(double t) const {
    if (kind_ != FlowKind::alternating_shear) return std::numeric_limits<double>::infinity();
    const double half = 0.5 * period_;
    return half * (static_cast<double>(segment(t, Side::right)) + 1.0);
  }

  /// Last switch time strictly before t (minus infinity for steady flows).
  double prev_switch_before(double t) const {
    if (kind_ != FlowKind::alternating_shear) return -std::numeric_limits<double>::infinity();
    return 0.5 * period_ * static_cast<double>(segment(t, Side::left));
  }

  /// Both velocity components on `grid` at time t, truncated to the retained lattice.
  std::pair<SpectralField, SpectralField> sample(double t, const GridPtr& grid, Side side = Side::right) const {
    return sample_segment(segment(t, side), grid);
  }

  std::pair<SpectralField, SpectralField> sample_segment(long seg, const GridPtr& grid) const {
    SpectralField vx(grid), vy(grid);
    const double A = amplitude_;
    if (kind_ == FlowKind::zero || A == 0.0) return {std::move(vx), std::move(vy)};
    const auto& g = *grid;
    // sin(theta + p) = cos(theta + p - pi/2)
    const double q = std::numbers::pi / 2.0;
    switch (kind_) {
      case FlowKind::steady_shear:
        vx = single_mode(grid, 0, 1, A, phase_a_ - q);
        break;
      case FlowKind::alternating_shear:
        if (((seg % 2) + 2) % 2 == 0)
          vx = single_mode(grid, 0, 1, A, phase_a_ - q);
        else
          vy = single_mode(grid, 1, 0, A, phase_b_ - q);
        break;
      case FlowKind::cellular: {
        const double a = 2.0 * std::numbers::pi / g.L1();
        const double b = 2.0 * std::numbers::pi / g.L2();
        const double k = std::hypot(a, b);
        // vx = (A b / k) sin(ax) cos(by), vy = -(A a / k) cos(ax) sin(by)
        const double cx = A * b / k / 4.0, cy = A * a / k / 4.0;
        const std::complex<double> I(0.0, 1.0);
        for (int s1 : {-1, 1})
          for (int s2 : {-1, 1}) {
            vx.at(s1, s2) += -I * static_cast<double>(s1) * cx;
            vy.at(s1, s2) += I * static_cast<double>(s2) * cy;
          }
        break;
      }
      case FlowKind::user_spectral: {
        if (std::abs(g.L1() - box_L1_) > 1e-12 * box_L1_ || std::abs(g.L2() - box_L2_) > 1e-12 * box_L2_)
          throw std::invalid_argument("user_spectral flow sampled on a box it was not defined for");
        for (const auto& m : modes_) {
          vx.at(m.k1, m.k2) = A * m.v1;
          vy.at(m.k1, m.k2) = A * m.v2;
          if (m.k1 != 0 || m.k2 != 0) {
            vx.at(-m.k1, -m.k2) = A * std::conj(m.v1);
            vy.at(-m.k1, -m.k2) = A * std::conj(m.v2);
          }
        }
        vx.truncate();
        vy.truncate();
        break;
      }
      case FlowKind::zero:
        break;
    }
    return {std::move(vx), std::move(vy)};
  }

  /// Short identifier used in output files.
  std::string id() const { return std::string(to_string(kind_)); }

 private:
  FlowKind kind_ = FlowKind::zero;
  double amplitude_ = 0.0;
  double period_ = 0.0;
  double phase_a_ = 0.0;
  double phase_b_ = 0.0;
  std::vector<VelocityMode> modes_;
  double box_L1_ = 0.0;
  double box_L2_ = 0.0;
};

/// Reads a steady flow: one mode per line, "k1 k2 Re(v1) Im(v1) Re(v2) Im(v2)".
/// Blank lines and lines starting with '#' are ignored.
inline VelocityField load_user_flow(std::istream& in, double L1, double L2) {
  std::vector<VelocityMode> modes;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ss(line);
    VelocityMode m;
    double a, b, c, d;
    if (!(ss >> m.k1 >> m.k2 >> a >> b >> c >> d))
      throw std::invalid_argument("flow file line " + std::to_string(lineno) + ": expected k1 k2 re1 im1 re2 im2");
    std::string extra;
    if (ss >> extra) throw std::invalid_argument("flow file line " + std::to_string(lineno) + ": trailing tokens");
    m.v1 = {a, b};
    m.v2 = {c, d};
    modes.push_back(m);
  }
  return VelocityField::user_spectral(std::move(modes), L1, L2);
}

inline VelocityField load_user_flow(const std::string& path, double L1, double L2) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open flow file: " + path);
  return load_user_flow(in, L1, L2);
}

struct FlowSupNorms {
  double l2_sup = 0.0;   // sup_t ||v(t)||_{L2}
  double lip_sup = 0.0;  // sup_t sup_x |grad v(t, x)| (spectral norm of the Jacobian)
};

namespace detail {

// Max over a fine grid of the Jacobian's largest singular value.
inline double jacobian_sup(const VelocityField& v, double L1, double L2) {
  auto fine = make_grid(L1, L2, 256, 256);
  auto [vx, vy] = v.sample_segment(0, fine);
  auto [a11, a12] = gradient(vx);
  auto [a21, a22] = gradient(vy);
  auto j11 = a11.to_real(), j12 = a12.to_real(), j21 = a21.to_real(), j22 = a22.to_real();
  double m = 0.0;
  for (std::size_t i = 0; i < j11.size(); ++i) {
    // largest singular value of [[p, q], [r, s]]
    const double p = j11[i], q = j12[i], r = j21[i], s = j22[i];
    const double f = p * p + q * q + r * r + s * s;
    const double det = p * s - q * r;
    const double disc = std::sqrt(std::max(0.0, f * f - 4.0 * det * det));
    m = std::max(m, std::sqrt(0.5 * (f + disc)));
  }
  return m;
}

}  // namespace detail

/// Uniform-in-time L2 and Lipschitz bounds of a flow on the L1 x L2 box.
inline FlowSupNorms sup_norms(const VelocityField& v, double L1, double L2) {
  const double A = std::abs(v.amplitude());
  const double single = std::sqrt(L1 * L2 / 2.0);
  const double a = 2.0 * std::numbers::pi / L1, b = 2.0 * std::numbers::pi / L2;
  switch (v.kind()) {
    case FlowKind::zero:
      return {};
    case FlowKind::steady_shear:
      return {A * single, A * b};
    case FlowKind::alternating_shear:
      return {A * single, A * std::max(a, b)};
    case FlowKind::cellular: {
      // ||v||^2 = (A/k)^2 (b^2 + a^2) L1 L2 / 4
      const double l2 = A * std::sqrt(L1 * L2) / 2.0;
      return {l2, detail::jacobian_sup(v, L1, L2)};
    }
    case FlowKind::user_spectral: {
      auto fine = make_grid(L1, L2, 256, 256);
      auto [vx, vy] = v.sample_segment(0, fine);
      return {std::hypot(l2_norm(vx), l2_norm(vy)), detail::jacobian_sup(v, L1, L2)};
    }
  }
  return {};
}

inline FlowSupNorms sup_norms(const VelocityField& v, const TorusGrid& g) { return sup_norms(v, g.L1(), g.L2()); }

}  // namespace ksadv
