// ============================================================================
// fft.hpp -- thin FFTW3 wrappers used by the convolution engine
//
// FFTW planning is not thread-safe; all plan creation/destruction goes
// through one global mutex.  Plans are created with FFTW_ESTIMATE so results
// are deterministic across runs.
// ============================================================================
#pragma once
#include <complex>
#include <cstdint>
#include <mutex>
#include <vector>

#include <fftw3.h>

#include "errors.hpp"

namespace rdmc::fft {

inline std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

/// Smallest 2^a 3^b 5^c 7^d >= n.
inline int next_fast_size(int n) {
  if (n <= 1) return 1;
  for (int m = n;; ++m) {
    int r = m;
    for (int p : {2, 3, 5, 7})
      while (r % p == 0) r /= p;
    if (r == 1) return m;
  }
}

/// Out-of-place multi-dimensional real<->complex transform of a fixed shape
/// (row-major; the last axis is halved+1 in the spectrum).
class RealFft {
 public:
  explicit RealFft(std::vector<int> shape) : shape_(std::move(shape)) {
    n_real_ = 1;
    for (int n : shape_) n_real_ *= n;
    n_complex_ = n_real_ / shape_.back() * (shape_.back() / 2 + 1);
    std::vector<double> r(static_cast<std::size_t>(n_real_));
    std::vector<std::complex<double>> c(static_cast<std::size_t>(n_complex_));
    std::lock_guard<std::mutex> lock(planner_mutex());
    fwd_ = fftw_plan_dft_r2c(int(shape_.size()), shape_.data(), r.data(),
                             reinterpret_cast<fftw_complex*>(c.data()),
                             FFTW_ESTIMATE | FFTW_UNALIGNED);
    inv_ = fftw_plan_dft_c2r(int(shape_.size()), shape_.data(),
                             reinterpret_cast<fftw_complex*>(c.data()), r.data(),
                             FFTW_ESTIMATE | FFTW_UNALIGNED);
    if (!fwd_ || !inv_) throw Error("FFTW plan creation failed");
  }
  ~RealFft() {
    std::lock_guard<std::mutex> lock(planner_mutex());
    fftw_destroy_plan(fwd_);
    fftw_destroy_plan(inv_);
  }
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  [[nodiscard]] std::int64_t n_real() const { return n_real_; }
  [[nodiscard]] std::int64_t n_complex() const { return n_complex_; }

  void forward(double* in, std::complex<double>* out) const {
    fftw_execute_dft_r2c(fwd_, in, reinterpret_cast<fftw_complex*>(out));
  }
  /// Unnormalized inverse; destroys `in`, as multi-dim c2r always does.
  void inverse(std::complex<double>* in, double* out) const {
    fftw_execute_dft_c2r(inv_, reinterpret_cast<fftw_complex*>(in), out);
  }

 private:
  std::vector<int> shape_;
  std::int64_t n_real_ = 0, n_complex_ = 0;
  fftw_plan fwd_ = nullptr, inv_ = nullptr;
};

}  // namespace rdmc::fft
