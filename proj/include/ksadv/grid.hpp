#pragma once

#include <cmath>
#include <cstddef>
#include <memory>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

namespace ksadv {

/// Periodic box [0,L1) x [0,L2) sampled on an N1 x N2 grid, with the
/// wavenumber lattice k~ = 2*pi*(k1/L1, k2/L2) and the linear KS symbol
/// sigma = kappa^4 - kappa^2 cached per mode.
///
/// Modes are stored in FFT order: flat index i1*N2 + i2, with signed
/// wavenumbers k = i for i < N/2 and k = i - N otherwise.
///
/// A mode is "retained" when |k1| <= cutoff1 and |k2| <= cutoff2 where
/// cutoff = floor((N-1)/3). Products of two retained fields are then
/// alias-free after re-truncation (2/3 rule).
class TorusGrid {
 public:
  TorusGrid(double L1, double L2, int N1, int N2) : L1_(L1), L2_(L2), N1_(N1), N2_(N2) {
    if (!(L1 > 0.0) || !(L2 > 0.0) || !std::isfinite(L1) || !std::isfinite(L2))
      throw std::invalid_argument("TorusGrid: box periods must be positive and finite");
    if (N1 < 8 || N2 < 8 || N1 % 2 != 0 || N2 % 2 != 0)
      throw std::invalid_argument("TorusGrid: resolutions must be even and >= 8 (got " +
                                  std::to_string(N1) + "x" + std::to_string(N2) + ")");
    cutoff1_ = (N1 - 1) / 3;
    cutoff2_ = (N2 - 1) / 3;

    const std::size_t n = size();
    kx_.resize(n);
    ky_.resize(n);
    kappa_.resize(n);
    sigma_.resize(n);
    retained_.resize(n);
    neg_.resize(n);
    for (int i1 = 0; i1 < N1; ++i1) {
      for (int i2 = 0; i2 < N2; ++i2) {
        const std::size_t i = index_of_slot(i1, i2);
        const int k1 = wavenumber(i1, N1);
        const int k2 = wavenumber(i2, N2);
        kx_[i] = 2.0 * std::numbers::pi * k1 / L1;
        ky_[i] = 2.0 * std::numbers::pi * k2 / L2;
        const double k2sum = kx_[i] * kx_[i] + ky_[i] * ky_[i];
        kappa_[i] = std::sqrt(k2sum);
        sigma_[i] = k2sum * k2sum - k2sum;
        retained_[i] = std::abs(k1) <= cutoff1_ && std::abs(k2) <= cutoff2_;
        neg_[i] = index_of_slot((N1 - i1) % N1, (N2 - i2) % N2);
        if (retained_[i]) retained_list_.push_back(i);
      }
    }
    kappa0_ = std::min(2.0 * std::numbers::pi / L1, 2.0 * std::numbers::pi / L2);
    const double k02 = kappa0_ * kappa0_;
    beta_ = k02 * k02 - k02;
  }

  double L1() const { return L1_; }
  double L2() const { return L2_; }
  int N1() const { return N1_; }
  int N2() const { return N2_; }
  int cutoff1() const { return cutoff1_; }
  int cutoff2() const { return cutoff2_; }
  std::size_t size() const { return static_cast<std::size_t>(N1_) * N2_; }
  double area() const { return L1_ * L2_; }

  /// Smallest nonzero |k~| on the (infinite) lattice; depends only on L1, L2.
  double kappa0() const { return kappa0_; }
  /// kappa0^4 - kappa0^2: the slowest linear decay rate when both periods are < 2*pi.
  double beta() const { return beta_; }
  /// Smallest real-space spacing.
  double h_min() const { return std::min(L1_ / N1_, L2_ / N2_); }
  /// Some retained nonzero mode has sigma < 0 (a period exceeds 2*pi).
  bool has_growing_modes() const {
    for (std::size_t i : retained_list_)
      if (i != 0 && sigma_[i] < 0.0) return true;
    return false;
  }
  /// sigma > 0 on every nonzero mode; holds iff both periods are < 2*pi.
  bool strictly_dissipative() const { return beta_ > 0.0; }

  double kx(std::size_t i) const { return kx_[i]; }
  double ky(std::size_t i) const { return ky_[i]; }
  double kappa(std::size_t i) const { return kappa_[i]; }
  double sigma(std::size_t i) const { return sigma_[i]; }
  bool retained(std::size_t i) const { return retained_[i]; }
  /// Flat index of the mode -k.
  std::size_t negated(std::size_t i) const { return neg_[i]; }
  const std::vector<std::size_t>& retained_modes() const { return retained_list_; }

  /// Flat index of signed wavenumber (k1, k2); throws if outside the grid.
  std::size_t index(int k1, int k2) const {
    if (k1 < -N1_ / 2 || k1 >= N1_ / 2 || k2 < -N2_ / 2 || k2 >= N2_ / 2)
      throw std::out_of_range("TorusGrid::index: wavenumber outside grid");
    return index_of_slot((k1 + N1_) % N1_, (k2 + N2_) % N2_);
  }
  int k1_of(std::size_t i) const { return wavenumber(static_cast<int>(i / N2_), N1_); }
  int k2_of(std::size_t i) const { return wavenumber(static_cast<int>(i % N2_), N2_); }

  double x(int i1) const { return L1_ * i1 / N1_; }
  double y(int i2) const { return L2_ * i2 / N2_; }

  bool same_shape(const TorusGrid& o) const {
    return L1_ == o.L1_ && L2_ == o.L2_ && N1_ == o.N1_ && N2_ == o.N2_;
  }

 private:
  static int wavenumber(int slot, int n) { return slot < n / 2 ? slot : slot - n; }
  std::size_t index_of_slot(int i1, int i2) const {
    return static_cast<std::size_t>(i1) * N2_ + static_cast<std::size_t>(i2);
  }

  double L1_, L2_;
  int N1_, N2_;
  int cutoff1_{}, cutoff2_{};
  double kappa0_{}, beta_{};
  std::vector<double> kx_, ky_, kappa_, sigma_;
  std::vector<bool> retained_;
  std::vector<std::size_t> neg_;
  std::vector<std::size_t> retained_list_;
};

using GridPtr = std::shared_ptr<const TorusGrid>;

inline GridPtr make_grid(double L1, double L2, int N1, int N2) {
  return std::make_shared<const TorusGrid>(L1, L2, N1, N2);
}

}  // namespace ksadv
