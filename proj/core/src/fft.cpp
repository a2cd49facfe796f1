#include "sagnac/fft.hpp"

#include <fftw3.h>

#include <mutex>
#include <stdexcept>

namespace sagnac::fft {

// FFTW planner calls are not thread-safe; executions are.
namespace {
std::mutex planner_mutex;
}

std::vector<std::complex<double>> rfft(const std::vector<double>& x) {
  const std::size_t n = x.size();
  if (n == 0) throw std::invalid_argument("rfft: empty input");
  std::vector<double> in(x);
  std::vector<std::complex<double>> out(n / 2 + 1);
  fftw_plan plan;
  {
    std::lock_guard<std::mutex> lock(planner_mutex);
    plan = fftw_plan_dft_r2c_1d(static_cast<int>(n), in.data(),
                                reinterpret_cast<fftw_complex*>(out.data()),
                                FFTW_ESTIMATE);
  }
  fftw_execute(plan);
  {
    std::lock_guard<std::mutex> lock(planner_mutex);
    fftw_destroy_plan(plan);
  }
  return out;
}

std::vector<double> irfft(const std::vector<std::complex<double>>& spec, std::size_t n) {
  if (spec.size() != n / 2 + 1)
    throw std::invalid_argument("irfft: spectrum size does not match n");
  std::vector<std::complex<double>> in(spec);
  std::vector<double> out(n);
  fftw_plan plan;
  {
    std::lock_guard<std::mutex> lock(planner_mutex);
    plan = fftw_plan_dft_c2r_1d(static_cast<int>(n),
                                reinterpret_cast<fftw_complex*>(in.data()),
                                out.data(), FFTW_ESTIMATE);
  }
  fftw_execute(plan);
  {
    std::lock_guard<std::mutex> lock(planner_mutex);
    fftw_destroy_plan(plan);
  }
  const double scale = 1.0 / static_cast<double>(n);
  for (auto& v : out) v *= scale;
  return out;
}

std::vector<double> circular_convolve(const std::vector<double>& a,
                                      const std::vector<double>& b) {
  if (a.size() != b.size())
    throw std::invalid_argument("circular_convolve: length mismatch");
  const std::size_t n = a.size();
  auto fa = rfft(a);
  const auto fb = rfft(b);
  for (std::size_t k = 0; k < fa.size(); ++k) fa[k] *= fb[k];
  return irfft(fa, n);
}

}  // namespace sagnac::fft
