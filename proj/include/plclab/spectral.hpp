#pragma once

// Framed magnitude spectra. FFTs are delegated to FFTW; plans are cached
// per size behind a mutex (FFTW planning is not thread-safe, execution on
// fresh arrays is).

#include <fftw3.h>

#include <cmath>
#include <complex>
#include <cstddef>
#include <map>
#include <mutex>
#include <span>
#include <vector>

#include "plclab/error.hpp"

namespace plclab {

namespace detail {

inline fftw_plan r2c_plan(std::size_t n) {
  static std::mutex mu;
  static std::map<std::size_t, fftw_plan> plans;
  std::lock_guard<std::mutex> lock(mu);
  auto it = plans.find(n);
  if (it != plans.end()) return it->second;
  std::vector<double> in(n);
  std::vector<fftw_complex> out(n / 2 + 1);
  fftw_plan p = fftw_plan_dft_r2c_1d(static_cast<int>(n), in.data(), out.data(),
                                     FFTW_ESTIMATE | FFTW_UNALIGNED);
  if (!p) throw Error("fftw: planning failed");
  plans.emplace(n, p);
  return p;
}

}  // namespace detail

// |X[k]|^2 for k = 0..n/2 of a real frame.
inline std::vector<double> power_spectrum(std::span<const double> frame) {
  const std::size_t n = frame.size();
  if (n == 0) return {};
  fftw_plan plan = detail::r2c_plan(n);
  std::vector<double> in(frame.begin(), frame.end());
  std::vector<fftw_complex> out(n / 2 + 1);
  fftw_execute_dft_r2c(plan, in.data(), out.data());
  std::vector<double> p(n / 2 + 1);
  for (std::size_t k = 0; k < p.size(); ++k) {
    p[k] = out[k][0] * out[k][0] + out[k][1] * out[k][1];
  }
  return p;
}

// Periodic Hann: w[n] = 0.5 - 0.5 cos(2 pi n / N).
inline std::vector<double> hann_window(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = 0.5 - 0.5 * std::cos(2.0 * M_PI * static_cast<double>(i) /
                                static_cast<double>(n));
  }
  return w;
}

// Frames start at m * hop and must fit entirely (no padding).
inline std::size_t frame_count(std::size_t n, std::size_t frame_len,
                               std::size_t hop) {
  if (n < frame_len) return 0;
  return (n - frame_len) / hop + 1;
}

struct SpectralFrames {
  std::size_t frame_len = 0;
  std::size_t hop = 0;
  std::size_t bins = 0;            // frame_len / 2 + 1
  std::vector<double> magnitudes;  // frames x bins, row-major

  std::size_t frames() const noexcept {
    return bins == 0 ? 0 : magnitudes.size() / bins;
  }
  std::span<const double> frame(std::size_t m) const {
    return std::span<const double>(magnitudes).subspan(m * bins, bins);
  }
};

// Hann-windowed power spectra, one row per frame.
inline std::vector<std::vector<double>> framed_power(std::span<const double> x,
                                                     std::size_t frame_len,
                                                     std::size_t hop) {
  const auto window = hann_window(frame_len);
  const std::size_t m_count = frame_count(x.size(), frame_len, hop);
  std::vector<std::vector<double>> rows;
  rows.reserve(m_count);
  std::vector<double> buf(frame_len);
  for (std::size_t m = 0; m < m_count; ++m) {
    for (std::size_t i = 0; i < frame_len; ++i) {
      buf[i] = x[m * hop + i] * window[i];
    }
    rows.push_back(power_spectrum(buf));
  }
  return rows;
}

inline SpectralFrames stft_magnitudes(std::span<const double> x,
                                      std::size_t frame_len, std::size_t hop) {
  SpectralFrames s;
  s.frame_len = frame_len;
  s.hop = hop;
  s.bins = frame_len / 2 + 1;
  for (const auto& row : framed_power(x, frame_len, hop)) {
    for (double p : row) s.magnitudes.push_back(std::sqrt(p));
  }
  return s;
}

}  // namespace plclab
