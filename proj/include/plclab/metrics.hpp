#pragma once

// Objective metrics between a reference y and an estimate y_hat:
// MSE, SDR, SI-SDR (time domain), LSD (log spectra) and MCD (mel cepstra).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "plclab/audio_io.hpp"
#include "plclab/error.hpp"
#include "plclab/spectral.hpp"

namespace plclab {

inline constexpr double kInfDb = std::numeric_limits<double>::infinity();

namespace detail {

inline void require_comparable(const Waveform& ref, const Waveform& est) {
  if (ref.size() != est.size()) {
    throw Error("length mismatch: reference has " + std::to_string(ref.size()) +
                " samples, estimate has " + std::to_string(est.size()));
  }
  if (ref.sample_rate != est.sample_rate) {
    throw Error("sample-rate mismatch: " + std::to_string(ref.sample_rate) +
                " vs " + std::to_string(est.sample_rate));
  }
}

inline double energy(std::span<const double> x) {
  double e = 0.0;
  for (double v : x) e += v * v;
  return e;
}

}  // namespace detail

inline double mse(const Waveform& ref, const Waveform& est) {
  detail::require_comparable(ref, est);
  if (ref.empty()) throw Error("mse: empty input");
  double acc = 0.0;
  for (std::size_t n = 0; n < ref.size(); ++n) {
    const double d = ref.samples[n] - est.samples[n];
    acc += d * d;
  }
  return acc / static_cast<double>(ref.size());
}

// +infinity when est == ref.
inline double sdr(const Waveform& ref, const Waveform& est) {
  detail::require_comparable(ref, est);
  const double signal = detail::energy(ref.samples);
  if (!(signal > 0.0)) throw Error("sdr: all-zero reference");
  double noise = 0.0;
  for (std::size_t n = 0; n < ref.size(); ++n) {
    const double d = ref.samples[n] - est.samples[n];
    noise += d * d;
  }
  if (noise == 0.0) return kInfDb;
  return 10.0 * std::log10(signal / noise);
}

// Optimal scaling of the reference onto the estimate.
inline double si_sdr_alpha(const Waveform& ref, const Waveform& est) {
  detail::require_comparable(ref, est);
  const double ref_energy = detail::energy(ref.samples);
  if (!(ref_energy > 0.0)) throw Error("si_sdr: all-zero reference");
  double dot = 0.0;
  for (std::size_t n = 0; n < ref.size(); ++n) {
    dot += est.samples[n] * ref.samples[n];
  }
  return dot / ref_energy;
}

inline double si_sdr(const Waveform& ref, const Waveform& est) {
  const double alpha = si_sdr_alpha(ref, est);
  if (!(detail::energy(est.samples) > 0.0)) {
    throw Error("si_sdr: all-zero estimate");
  }
  double target = 0.0;
  double noise = 0.0;
  for (std::size_t n = 0; n < ref.size(); ++n) {
    const double s = alpha * ref.samples[n];
    const double d = s - est.samples[n];
    target += s * s;
    noise += d * d;
  }
  if (noise == 0.0) return kInfDb;
  if (target == 0.0) return -kInfDb;  // estimate orthogonal to reference
  return 10.0 * std::log10(target / noise);
}

// ---------------------------------------------------------------------------
// Log-spectral distance

struct LsdOptions {
  std::size_t frame_len = 2048;
  std::size_t hop = 512;
  double magnitude_floor = 1e-10;
};

// Per frame: sqrt of the mean over all K+1 bins of the squared difference
// of log10 power; averaged over frames.
inline double lsd(const Waveform& ref, const Waveform& est,
                  const LsdOptions& opt = {}) {
  detail::require_comparable(ref, est);
  if (ref.size() < opt.frame_len) {
    throw Error("lsd: clip shorter than one frame (" +
                std::to_string(opt.frame_len) + " samples)");
  }
  const auto a = framed_power(ref.samples, opt.frame_len, opt.hop);
  const auto b = framed_power(est.samples, opt.frame_len, opt.hop);
  const double floor_sq = opt.magnitude_floor * opt.magnitude_floor;
  auto log_power = [&](double p) { return std::log10(std::max(p, floor_sq)); };
  double total = 0.0;
  for (std::size_t m = 0; m < a.size(); ++m) {
    double acc = 0.0;
    for (std::size_t k = 0; k < a[m].size(); ++k) {
      const double d = log_power(a[m][k]) - log_power(b[m][k]);
      acc += d * d;
    }
    total += std::sqrt(acc / static_cast<double>(a[m].size()));
  }
  return total / static_cast<double>(a.size());
}

// ---------------------------------------------------------------------------
// Mel-cepstral distance

struct MelOptions {
  std::size_t frame_len = 1024;
  std::size_t hop = 512;
  std::size_t bands = 20;
  std::size_t coefficients = 16;  // C[1..16]; C[0] is never produced
  double energy_floor = 1e-10;
};

// HTK mel scale.
inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) {
  return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
}

// Triangular, unit-peak filters with centres equally spaced in mel between
// 0 Hz and Nyquist. Returns bands x (frame_len/2 + 1) weights.
inline std::vector<std::vector<double>> mel_filterbank(std::size_t bands,
                                                       std::size_t frame_len,
                                                       int sample_rate) {
  const std::size_t bins = frame_len / 2 + 1;
  const double nyquist = 0.5 * sample_rate;
  const double mel_max = hz_to_mel(nyquist);
  std::vector<double> edges(bands + 2);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i] = mel_to_hz(mel_max * static_cast<double>(i) /
                         static_cast<double>(bands + 1));
  }
  std::vector<std::vector<double>> fb(bands, std::vector<double>(bins, 0.0));
  for (std::size_t b = 0; b < bands; ++b) {
    const double lo = edges[b];
    const double mid = edges[b + 1];
    const double hi = edges[b + 2];
    for (std::size_t k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * sample_rate /
                       static_cast<double>(frame_len);
      if (f > lo && f <= mid) {
        fb[b][k] = (f - lo) / (mid - lo);
      } else if (f > mid && f < hi) {
        fb[b][k] = (hi - f) / (hi - mid);
      }
    }
  }
  return fb;
}

struct CepstralFrames {
  std::size_t coefficients = 0;
  std::vector<double> values;  // frames x coefficients, C[1] first

  std::size_t frames() const noexcept {
    return coefficients == 0 ? 0 : values.size() / coefficients;
  }
  std::span<const double> frame(std::size_t m) const {
    return std::span<const double>(values).subspan(m * coefficients,
                                                   coefficients);
  }
};

// MFCC 1..16 per Hann frame: natural log of mel energies (power spectrum
// integrated by the filterbank), orthonormal DCT-II.
inline CepstralFrames mfcc(const Waveform& w, const MelOptions& opt = {}) {
  if (w.size() < opt.frame_len) {
    throw Error("mfcc: clip shorter than one frame (" +
                std::to_string(opt.frame_len) + " samples)");
  }
  if (opt.coefficients >= opt.bands) {
    throw Error("mfcc: need more bands than coefficients");
  }
  const auto fb = mel_filterbank(opt.bands, opt.frame_len, w.sample_rate);
  const auto power = framed_power(w.samples, opt.frame_len, opt.hop);
  const double nb = static_cast<double>(opt.bands);
  std::vector<double> dct(opt.coefficients * opt.bands);
  for (std::size_t i = 1; i <= opt.coefficients; ++i) {
    for (std::size_t b = 0; b < opt.bands; ++b) {
      dct[(i - 1) * opt.bands + b] =
          std::sqrt(2.0 / nb) *
          std::cos(M_PI * static_cast<double>(i) * (static_cast<double>(b) + 0.5) / nb);
    }
  }
  CepstralFrames out;
  out.coefficients = opt.coefficients;
  out.values.reserve(power.size() * opt.coefficients);
  std::vector<double> log_mel(opt.bands);
  for (const auto& p : power) {
    for (std::size_t b = 0; b < opt.bands; ++b) {
      double e = 0.0;
      for (std::size_t k = 0; k < p.size(); ++k) e += fb[b][k] * p[k];
      log_mel[b] = std::log(std::max(e, opt.energy_floor));
    }
    for (std::size_t i = 0; i < opt.coefficients; ++i) {
      double c = 0.0;
      for (std::size_t b = 0; b < opt.bands; ++b) {
        c += dct[i * opt.bands + b] * log_mel[b];
      }
      out.values.push_back(c);
    }
  }
  return out;
}

inline double mcd(const Waveform& ref, const Waveform& est,
                  const MelOptions& opt = {}) {
  detail::require_comparable(ref, est);
  const CepstralFrames a = mfcc(ref, opt);
  const CepstralFrames b = mfcc(est, opt);
  double total = 0.0;
  for (std::size_t m = 0; m < a.frames(); ++m) {
    const auto ca = a.frame(m);
    const auto cb = b.frame(m);
    double acc = 0.0;
    for (std::size_t i = 0; i < ca.size(); ++i) {
      const double d = ca[i] - cb[i];
      acc += d * d;
    }
    total += std::sqrt(acc);
  }
  return total / static_cast<double>(a.frames());
}

// ---------------------------------------------------------------------------

struct MetricReport {
  double mse = 0.0;
  double sdr_db = 0.0;
  double si_sdr_db = 0.0;
  double lsd = 0.0;
  double mcd = 0.0;
  double si_sdr_alpha = 0.0;
};

// All five metrics on one pair. An all-zero estimate has no defined SI-SDR
// direction; it is reported as -infinity.
inline MetricReport evaluate_clip(const Waveform& ref, const Waveform& est) {
  MetricReport r;
  r.mse = mse(ref, est);
  r.sdr_db = sdr(ref, est);
  r.si_sdr_alpha = si_sdr_alpha(ref, est);
  r.si_sdr_db = detail::energy(est.samples) > 0.0 ? si_sdr(ref, est) : -kInfDb;
  r.lsd = lsd(ref, est);
  r.mcd = mcd(ref, est);
  return r;
}

}  // namespace plclab
