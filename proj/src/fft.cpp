#include "freqlens/fft.hpp"

#include <fftw3.h>

#include <algorithm>
#include <map>
#include <mutex>
#include <stdexcept>
#include <tuple>

namespace freqlens::fft {
namespace {

// FFTW's planner is not thread-safe; plans are created once per
// (rows, cols, direction) and executed with the new-array interface.
struct PlanCache {
  std::mutex mutex;
  std::map<std::tuple<int64_t, int64_t, int>, fftw_plan> plans;

  ~PlanCache() {
    for (auto& [key, plan] : plans) fftw_destroy_plan(plan);
  }

  fftw_plan get(int64_t h, int64_t w, int sign) {
    std::lock_guard lock(mutex);
    auto key = std::make_tuple(h, w, sign);
    if (auto it = plans.find(key); it != plans.end()) return it->second;
    const auto n = static_cast<size_t>(h * w);
    auto* buf = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * n));
    fftw_plan plan = h == 1 ? fftw_plan_dft_1d(static_cast<int>(w), buf, buf, sign, FFTW_ESTIMATE)
                            : fftw_plan_dft_2d(static_cast<int>(h), static_cast<int>(w), buf, buf, sign,
                                               FFTW_ESTIMATE);
    fftw_free(buf);
    if (!plan) throw std::runtime_error("fftw: failed to create plan");
    plans.emplace(key, plan);
    return plan;
  }
};

PlanCache& cache() {
  static PlanCache instance;
  return instance;
}

void run(std::span<Complex> data, int64_t h, int64_t w, bool inverse) {
  if (h < 1 || w < 1 || static_cast<int64_t>(data.size()) != h * w) {
    throw std::invalid_argument("dft: data size does not match transform shape");
  }
  fftw_plan plan = cache().get(h, w, inverse ? FFTW_BACKWARD : FFTW_FORWARD);
  const auto n = data.size();
  auto* buf = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * n));
  std::copy(data.begin(), data.end(), reinterpret_cast<Complex*>(buf));
  fftw_execute_dft(plan, buf, buf);
  auto* out = reinterpret_cast<Complex*>(buf);
  const double norm = inverse ? 1.0 / static_cast<double>(n) : 1.0;
  for (size_t i = 0; i < n; ++i) data[i] = out[i] * norm;
  fftw_free(buf);
}

}  // namespace

void dft1d_inplace(std::span<Complex> data, bool inverse) {
  run(data, 1, static_cast<int64_t>(data.size()), inverse);
}

std::vector<Complex> dft1d(std::span<const double> real_signal) {
  std::vector<Complex> out(real_signal.begin(), real_signal.end());
  dft1d_inplace(out, false);
  return out;
}

void dft2d_inplace(std::span<Complex> data, int64_t h, int64_t w, bool inverse) { run(data, h, w, inverse); }

std::vector<Complex> dft2d(std::span<const double> real_image, int64_t h, int64_t w) {
  std::vector<Complex> out(real_image.begin(), real_image.end());
  dft2d_inplace(out, h, w, false);
  return out;
}

}  // namespace freqlens::fft
