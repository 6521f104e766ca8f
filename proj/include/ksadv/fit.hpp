#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace ksadv {

/// Least-squares slope of y against x.
inline double ls_slope(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("ls_slope: need >= 2 matched points");
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
  }
  const double den = n * sxx - sx * sx;
  if (den == 0.0) throw std::invalid_argument("ls_slope: degenerate abscissae");
  return (n * sxy - sx * sy) / den;
}

/// Slope of log(y) against log(x) over points with x in [lo, hi].
inline double loglog_slope(std::span<const double> x, std::span<const double> y, double lo, double hi) {
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] < lo || x[i] > hi || !(y[i] > 0.0)) continue;
    lx.push_back(std::log(x[i]));
    ly.push_back(std::log(y[i]));
  }
  return ls_slope(lx, ly);
}

/// Exponential rate r in y ~ exp(r t) fitted over t in [lo, hi].
inline double exp_rate(std::span<const double> t, std::span<const double> y, double lo, double hi) {
  std::vector<double> tt, ly;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t[i] < lo || t[i] > hi || !(y[i] > 0.0)) continue;
    tt.push_back(t[i]);
    ly.push_back(std::log(y[i]));
  }
  return ls_slope(tt, ly);
}

}  // namespace ksadv
