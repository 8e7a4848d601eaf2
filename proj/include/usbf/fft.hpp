#pragma once

#include <complex>
#include <cstring>
#include <mutex>
#include <vector>

#include <fftw3.h>

#include "usbf/types.hpp"

namespace usbf {

namespace detail {
// FFTW planning is not thread-safe; execution of an existing plan is.
inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}
}  // namespace detail

/// Unnormalized complex DFT of a fixed shape (1-D or row-major 2-D) with
/// its own aligned work buffer. One instance per thread.
class FftPlan {
 public:
  FftPlan(int rows, int cols, bool forward) : size_(static_cast<std::size_t>(rows) * cols) {
    require(rows >= 1 && cols >= 1, ErrorCode::invalid_argument, "FFT size must be positive");
    buf_ = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * size_));
    require(buf_ != nullptr, ErrorCode::invalid_argument, "FFT buffer allocation failed");
    std::lock_guard<std::mutex> lock(detail::fftw_planner_mutex());
    const int sign = forward ? FFTW_FORWARD : FFTW_BACKWARD;
    plan_ = rows == 1 ? fftw_plan_dft_1d(cols, buf_, buf_, sign, FFTW_ESTIMATE)
                      : fftw_plan_dft_2d(rows, cols, buf_, buf_, sign, FFTW_ESTIMATE);
  }

  explicit FftPlan(int n, bool forward = true) : FftPlan(1, n, forward) {}

  FftPlan(const FftPlan&) = delete;
  FftPlan& operator=(const FftPlan&) = delete;

  ~FftPlan() {
    {
      std::lock_guard<std::mutex> lock(detail::fftw_planner_mutex());
      fftw_destroy_plan(plan_);
    }
    fftw_free(buf_);
  }

  std::size_t size() const { return size_; }

  /// In-place transform of `data` (length size()).
  void execute(cplx* data) {
    std::memcpy(buf_, data, sizeof(fftw_complex) * size_);
    fftw_execute(plan_);
    std::memcpy(data, buf_, sizeof(fftw_complex) * size_);
  }

  void execute(std::vector<cplx>& data) {
    require(data.size() == size_, ErrorCode::dimension_mismatch, "FFT input has the wrong length");
    execute(data.data());
  }

 private:
  std::size_t size_;
  fftw_complex* buf_ = nullptr;
  fftw_plan plan_ = nullptr;
};

}  // namespace usbf
