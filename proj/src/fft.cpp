#include "sleepstate/fft.hpp"

#include <fftw3.h>

#include <mutex>
#include <new>
#include <utility>

#include "sleepstate/error.hpp"

namespace sleepstate {

namespace {
// FFTW's planner is not re-entrant.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}
}  // namespace

RealFft::Workspace::Workspace(std::size_t length) {
  in_ = static_cast<double*>(fftw_malloc(sizeof(double) * length));
  out_ = reinterpret_cast<std::complex<double>*>(fftw_malloc(sizeof(fftw_complex) * (length / 2 + 1)));
  if (in_ == nullptr || out_ == nullptr) throw std::bad_alloc();
}

RealFft::Workspace::Workspace(Workspace&& other) noexcept
    : in_(std::exchange(other.in_, nullptr)), out_(std::exchange(other.out_, nullptr)) {}

RealFft::Workspace::~Workspace() {
  if (in_) fftw_free(in_);
  if (out_) fftw_free(out_);
}

RealFft::RealFft(std::size_t length) : length_(length) {
  if (length < 2) throw ValidationError("FFT length must be at least 2");
  Workspace ws(length);
  std::lock_guard<std::mutex> lock(planner_mutex());
  // FFTW_ESTIMATE keeps the chosen algorithm, and therefore every output bit,
  // identical from run to run.
  plan_ = fftw_plan_dft_r2c_1d(static_cast<int>(length), ws.input(),
                               reinterpret_cast<fftw_complex*>(ws.output()), FFTW_ESTIMATE);
  if (plan_ == nullptr) throw NumericalError("FFTW failed to create a plan");
}

RealFft::~RealFft() {
  if (plan_) {
    std::lock_guard<std::mutex> lock(planner_mutex());
    fftw_destroy_plan(static_cast<fftw_plan>(plan_));
  }
}

void RealFft::execute(Workspace& ws) const {
  fftw_execute_dft_r2c(static_cast<fftw_plan>(plan_), ws.input(),
                       reinterpret_cast<fftw_complex*>(ws.output()));
}

}  // namespace sleepstate
