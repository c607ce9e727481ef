#ifndef TFMASK_FFT_H_
#define TFMASK_FFT_H_

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

namespace tfmask {

// Real-to-complex DFT of fixed length n (n/2+1 output bins), backed by FFTW.
// Unnormalized in both directions: Inverse(Forward(x)) == n * x.
// An instance owns its plans and scratch buffers and is not shareable
// between threads; separate instances may be used concurrently.
class RealFft {
 public:
  explicit RealFft(std::size_t n);
  ~RealFft();
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  std::size_t size() const { return n_; }
  std::size_t num_bins() const { return n_ / 2 + 1; }

  // in.size() == size(), out.size() == num_bins().
  void Forward(std::span<const double> in, std::span<std::complex<double>> out);
  // in.size() == num_bins(), out.size() == size().
  void Inverse(std::span<const std::complex<double>> in, std::span<double> out);

 private:
  std::size_t n_;
  double* real_ = nullptr;
  void* spectrum_ = nullptr;
  void* forward_plan_ = nullptr;
  void* inverse_plan_ = nullptr;
};

// Smallest power of two >= n.
std::size_t NextPow2(std::size_t n);

// Full linear cross-correlation r[k] = sum_t a[t + k] * b[t] for
// k in [-(b.size()-1), a.size()-1], returned with lag -(b.size()-1) first.
std::vector<double> CrossCorrelate(std::span<const double> a,
                                   std::span<const double> b);

// Linear convolution, length a.size() + b.size() - 1.
std::vector<double> Convolve(std::span<const double> a,
                             std::span<const double> b);

}  // namespace tfmask

#endif  // TFMASK_FFT_H_
