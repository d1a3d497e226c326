#pragma once

#include <complex>
#include <cstddef>
#include <memory>
#include <span>

namespace sleepstate {

// Real-to-complex FFT of a fixed length backed by FFTW.
//
// Planning is serialized internally; execute() is safe to call concurrently
// provided each thread passes its own Workspace.
class RealFft {
 public:
  class Workspace {
   public:
    explicit Workspace(std::size_t length);
    ~Workspace();
    Workspace(const Workspace&) = delete;
    Workspace& operator=(const Workspace&) = delete;
    Workspace(Workspace&& other) noexcept;
    Workspace& operator=(Workspace&&) = delete;

    double* input() { return in_; }
    std::complex<double>* output() { return out_; }

   private:
    double* in_ = nullptr;
    std::complex<double>* out_ = nullptr;
  };

  explicit RealFft(std::size_t length);
  ~RealFft();
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  std::size_t length() const { return length_; }

  // Transforms ws.input() into ws.output(); outputs bins 0..length/2 inclusive,
  // unnormalized (sum_l x_l exp(-2 pi i k l / length)).
  void execute(Workspace& ws) const;

 private:
  std::size_t length_;
  void* plan_ = nullptr;
};

}  // namespace sleepstate
