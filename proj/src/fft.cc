#include "tfmask/fft.h"

#include <algorithm>
#include <mutex>

#include <fftw3.h>

#include "tfmask/error.h"

namespace tfmask {

namespace {
// FFTW planning is not thread-safe; execution with private buffers is.
std::mutex& PlannerMutex() {
  static std::mutex m;
  return m;
}
}  // namespace

RealFft::RealFft(std::size_t n) : n_(n) {
  if (n == 0) throw ConfigError("FFT length must be positive");
  std::lock_guard<std::mutex> lock(PlannerMutex());
  real_ = fftw_alloc_real(n);
  auto* spec = fftw_alloc_complex(n / 2 + 1);
  spectrum_ = spec;
  forward_plan_ = fftw_plan_dft_r2c_1d(static_cast<int>(n), real_, spec,
                                       FFTW_ESTIMATE);
  inverse_plan_ = fftw_plan_dft_c2r_1d(static_cast<int>(n), spec, real_,
                                       FFTW_ESTIMATE);
}

RealFft::~RealFft() {
  std::lock_guard<std::mutex> lock(PlannerMutex());
  fftw_destroy_plan(static_cast<fftw_plan>(forward_plan_));
  fftw_destroy_plan(static_cast<fftw_plan>(inverse_plan_));
  fftw_free(real_);
  fftw_free(spectrum_);
}

void RealFft::Forward(std::span<const double> in,
                      std::span<std::complex<double>> out) {
  std::copy(in.begin(), in.end(), real_);
  fftw_execute(static_cast<fftw_plan>(forward_plan_));
  auto* spec = static_cast<fftw_complex*>(spectrum_);
  for (std::size_t k = 0; k < num_bins(); ++k)
    out[k] = {spec[k][0], spec[k][1]};
}

void RealFft::Inverse(std::span<const std::complex<double>> in,
                      std::span<double> out) {
  auto* spec = static_cast<fftw_complex*>(spectrum_);
  for (std::size_t k = 0; k < num_bins(); ++k) {
    spec[k][0] = in[k].real();
    spec[k][1] = in[k].imag();
  }
  // c2r ignores these imaginary parts mathematically; zero them so the
  // result does not depend on caller rounding noise.
  spec[0][1] = 0.0;
  if (n_ % 2 == 0) spec[n_ / 2][1] = 0.0;
  fftw_execute(static_cast<fftw_plan>(inverse_plan_));
  std::copy(real_, real_ + n_, out.begin());
}

std::size_t NextPow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

std::vector<double> Convolve(std::span<const double> a,
                             std::span<const double> b) {
  if (a.empty() || b.empty()) return {};
  const std::size_t out_len = a.size() + b.size() - 1;
  const std::size_t n = NextPow2(out_len);
  RealFft fft(n);
  std::vector<double> pa(n, 0.0), pb(n, 0.0), res(n);
  std::copy(a.begin(), a.end(), pa.begin());
  std::copy(b.begin(), b.end(), pb.begin());
  std::vector<std::complex<double>> fa(fft.num_bins()), fb(fft.num_bins());
  fft.Forward(pa, fa);
  fft.Forward(pb, fb);
  for (std::size_t k = 0; k < fa.size(); ++k) fa[k] *= fb[k];
  fft.Inverse(fa, res);
  res.resize(out_len);
  for (double& v : res) v /= static_cast<double>(n);
  return res;
}

std::vector<double> CrossCorrelate(std::span<const double> a,
                                   std::span<const double> b) {
  std::vector<double> reversed(b.rbegin(), b.rend());
  return Convolve(a, reversed);
}

}  // namespace tfmask
