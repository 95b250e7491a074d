#include "specdetect/fft.h"

#include <fftw3.h>

#include <map>
#include <memory>
#include <mutex>

#include "specdetect/error.h"

namespace specdetect::fft {
namespace {

// The FFTW planner is not thread-safe; plans are created once per size
// under a lock and then executed through the thread-safe new-array API.
// FFTW_ESTIMATE keeps the chosen algorithm, and so the rounding, fixed.
struct PlanPair {
  fftw_plan forward = nullptr;
  fftw_plan inverse = nullptr;
};

std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

const PlanPair& plans_for(int n) {
  static std::map<int, PlanPair> cache;
  std::lock_guard lock(planner_mutex());
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;

  double* real = fftw_alloc_real(n);
  fftw_complex* cplx = fftw_alloc_complex(n / 2 + 1);
  PlanPair pair;
  pair.forward = fftw_plan_dft_r2c_1d(n, real, cplx, FFTW_ESTIMATE);
  pair.inverse = fftw_plan_dft_c2r_1d(n, cplx, real, FFTW_ESTIMATE);
  fftw_free(real);
  fftw_free(cplx);
  if (!pair.forward || !pair.inverse) throw Error("fft: planner failed for size " + std::to_string(n));
  return cache.emplace(n, pair).first->second;
}

struct FftwFree {
  void operator()(void* p) const { fftw_free(p); }
};

}  // namespace

std::vector<std::complex<double>> forward_real(std::span<const double> input) {
  const int n = static_cast<int>(input.size());
  if (n < 1) throw InvalidArgument("fft: empty input");
  const PlanPair& plan = plans_for(n);

  // FFTW requires buffers with the same alignment as at planning time.
  std::unique_ptr<double, FftwFree> real(fftw_alloc_real(n));
  std::unique_ptr<fftw_complex, FftwFree> cplx(fftw_alloc_complex(n / 2 + 1));
  std::copy(input.begin(), input.end(), real.get());
  fftw_execute_dft_r2c(plan.forward, real.get(), cplx.get());

  std::vector<std::complex<double>> out(n / 2 + 1);
  for (int k = 0; k <= n / 2; ++k) out[k] = {cplx.get()[k][0], cplx.get()[k][1]};
  return out;
}

std::vector<double> inverse_real(std::span<const std::complex<double>> bins, int n) {
  if (n < 1 || static_cast<int>(bins.size()) != n / 2 + 1)
    throw InvalidArgument("fft: bin count does not match length");
  const PlanPair& plan = plans_for(n);

  std::unique_ptr<double, FftwFree> real(fftw_alloc_real(n));
  std::unique_ptr<fftw_complex, FftwFree> cplx(fftw_alloc_complex(n / 2 + 1));
  for (int k = 0; k <= n / 2; ++k) {
    cplx.get()[k][0] = bins[k].real();
    cplx.get()[k][1] = bins[k].imag();
  }
  fftw_execute_dft_c2r(plan.inverse, cplx.get(), real.get());

  std::vector<double> out(real.get(), real.get() + n);
  const double scale = 1.0 / n;
  for (double& v : out) v *= scale;
  return out;
}

}  // namespace specdetect::fft
