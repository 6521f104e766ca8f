#pragma once

#include <complex>
#include <cstddef>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <utility>

#include <fftw3.h>

namespace ksadv::detail {

/// Forward/backward 2D complex FFT pair for one resolution.
///
/// Plans are created with FFTW_UNALIGNED so they can be executed on any
/// std::complex<double> buffer through the new-array interface.
class FftPlan {
 public:
  FftPlan(int n1, int n2) : n1_(n1), n2_(n2) {
    const std::size_t n = static_cast<std::size_t>(n1) * n2;
    auto* in = fftw_alloc_complex(n);
    auto* out = fftw_alloc_complex(n);
    {
      std::lock_guard lock(planner_mutex());
      forward_ = fftw_plan_dft_2d(n1, n2, in, out, FFTW_FORWARD, FFTW_ESTIMATE | FFTW_UNALIGNED);
      backward_ = fftw_plan_dft_2d(n1, n2, in, out, FFTW_BACKWARD, FFTW_ESTIMATE | FFTW_UNALIGNED);
    }
    fftw_free(in);
    fftw_free(out);
  }

  FftPlan(const FftPlan&) = delete;
  FftPlan& operator=(const FftPlan&) = delete;

  ~FftPlan() {
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(forward_);
    fftw_destroy_plan(backward_);
  }

  // Unnormalized transforms; `in` and `out` must not alias.
  void forward(std::span<const std::complex<double>> in, std::span<std::complex<double>> out) const {
    fftw_execute_dft(forward_, as_fftw(in), reinterpret_cast<fftw_complex*>(out.data()));
  }
  void backward(std::span<const std::complex<double>> in, std::span<std::complex<double>> out) const {
    fftw_execute_dft(backward_, as_fftw(in), reinterpret_cast<fftw_complex*>(out.data()));
  }

  int n1() const { return n1_; }
  int n2() const { return n2_; }

  // The FFTW planner is not re-entrant; execution is.
  static std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
  }

 private:
  static fftw_complex* as_fftw(std::span<const std::complex<double>> s) {
    // fftw_execute_dft does not write to the input of an out-of-place plan.
    return reinterpret_cast<fftw_complex*>(const_cast<std::complex<double>*>(s.data()));
  }

  int n1_;
  int n2_;
  fftw_plan forward_{};
  fftw_plan backward_{};
};

/// Per-thread plan cache keyed by resolution.
inline const FftPlan& plan_for(int n1, int n2) {
  thread_local std::map<std::pair<int, int>, std::unique_ptr<FftPlan>> cache;
  auto& slot = cache[{n1, n2}];
  if (!slot) slot = std::make_unique<FftPlan>(n1, n2);
  return *slot;
}

}  // namespace ksadv::detail
