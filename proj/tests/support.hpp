#pragma once

// Shared helpers for the test binaries: signal generators, temp dirs and
// independent reference implementations (oracles) that share no code with
// the library beyond the data types.

#include <cmath>
#include <complex>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "plclab/audio_io.hpp"
#include "plclab/random.hpp"
#include "plclab/trace.hpp"

namespace plctest {

using plclab::Waveform;

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("plclab-" + tag + "-" + std::to_string(::getpid()) + "-" +
             std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline Waveform make_wave(std::vector<double> samples, int rate = 44100) {
  Waveform w;
  w.samples = std::move(samples);
  w.sample_rate = rate;
  return w;
}

inline Waveform sine(double freq, double amp, std::size_t n, int rate = 44100,
                     double phase = 0.0) {
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = amp * std::sin(2.0 * M_PI * freq * static_cast<double>(i) / rate + phase);
  }
  return make_wave(std::move(x), rate);
}

// Uses std::mt19937_64 directly so generators do not depend on the library RNG.
inline Waveform noise(std::uint64_t seed, std::size_t n, double amp = 0.5) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> dist(-amp, amp);
  std::vector<double> x(n);
  for (auto& v : x) v = dist(gen);
  return make_wave(std::move(x));
}

// Harmonic tone whose f0 jumps every half second (110-880 Hz), six partials
// with 1/h amplitudes. Stands in for sustained tonal music.
inline Waveform tonal_clip(std::uint64_t seed, std::size_t n, int harmonics = 6) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> x(n);
  std::vector<double> phase(static_cast<std::size_t>(harmonics), 0.0);
  double f0 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (i % 22050 == 0) f0 = 110.0 * std::pow(2.0, 3.0 * u(gen));
    double s = 0.0;
    for (int h = 1; h <= harmonics; ++h) {
      auto& ph = phase[static_cast<std::size_t>(h - 1)];
      ph += 2.0 * M_PI * f0 * h / 44100.0;
      s += std::sin(ph) / h;
    }
    x[i] = 0.3 * s;
  }
  return make_wave(std::move(x));
}

// Sparse bursts of 1-6 lost packets, the first `guard` packets received.
inline plclab::PacketTrace subset1_trace(std::uint64_t seed, std::size_t packets,
                                         double burst_start = 0.08,
                                         std::size_t guard = 8) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> len(1, 6);
  plclab::PacketTrace t;
  t.lost.assign(packets, false);
  for (std::size_t p = guard; p < packets;) {
    if (u(gen) < burst_start) {
      const std::size_t b = len(gen);
      for (std::size_t i = 0; i < b && p < packets; ++i) t.lost[p++] = true;
    }
    ++p;  // at least one received packet between bursts
  }
  return t;
}

inline plclab::PacketTrace random_trace(std::uint64_t seed, std::size_t packets,
                                        double loss = 0.2) {
  std::mt19937_64 gen(seed);
  std::bernoulli_distribution lost(loss);
  plclab::PacketTrace t;
  t.lost.resize(packets);
  for (std::size_t p = 0; p < packets; ++p) t.lost[p] = lost(gen);
  return t;
}

inline plclab::PacketTrace trace_of(const std::string& flags) {
  plclab::PacketTrace t;
  for (char c : flags) t.lost.push_back(c == '1');
  return t;
}

// ---------------------------------------------------------------------------
// Oracles

using cplx = std::complex<double>;

inline std::vector<cplx> naive_dft(const std::vector<double>& x) {
  const std::size_t n = x.size();
  std::vector<cplx> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    cplx acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double a = -2.0 * M_PI * static_cast<double>((k * i) % n) / n;
      acc += x[i] * cplx(std::cos(a), std::sin(a));
    }
    out[k] = acc;
  }
  return out;
}

// Textbook recursive radix-2 FFT; n must be a power of two.
inline std::vector<cplx> radix2_fft(const std::vector<cplx>& x) {
  const std::size_t n = x.size();
  if (n == 1) return x;
  std::vector<cplx> even(n / 2), odd(n / 2);
  for (std::size_t i = 0; i < n / 2; ++i) {
    even[i] = x[2 * i];
    odd[i] = x[2 * i + 1];
  }
  const auto e = radix2_fft(even);
  const auto o = radix2_fft(odd);
  std::vector<cplx> out(n);
  for (std::size_t k = 0; k < n / 2; ++k) {
    const cplx w = std::polar(1.0, -2.0 * M_PI * static_cast<double>(k) / n) * o[k];
    out[k] = e[k] + w;
    out[k + n / 2] = e[k] - w;
  }
  return out;
}

inline std::vector<cplx> radix2_fft(const std::vector<double>& x) {
  return radix2_fft(std::vector<cplx>(x.begin(), x.end()));
}

// |X[k]|^2 for k = 0..L/2 of a Hann-windowed (periodic) frame.
inline std::vector<std::vector<double>> oracle_frames(const std::vector<double>& x,
                                                      std::size_t len, std::size_t hop) {
  std::vector<std::vector<double>> out;
  for (std::size_t start = 0; start + len <= x.size(); start += hop) {
    std::vector<double> frame(len);
    for (std::size_t i = 0; i < len; ++i) {
      const double w = 0.5 - 0.5 * std::cos(2.0 * M_PI * static_cast<double>(i) / len);
      frame[i] = x[start + i] * w;
    }
    const auto spec = radix2_fft(frame);
    std::vector<double> p(len / 2 + 1);
    for (std::size_t k = 0; k < p.size(); ++k) p[k] = std::norm(spec[k]);
    out.push_back(std::move(p));
  }
  return out;
}

struct OracleMetrics {
  double mse, sdr, si_sdr, lsd, mcd;
};

inline OracleMetrics oracle_metrics(const std::vector<double>& y,
                                    const std::vector<double>& yh, int rate = 44100) {
  const std::size_t n = y.size();
  OracleMetrics m{};
  long double se = 0, yy = 0, dot = 0;
  for (std::size_t i = 0; i < n; ++i) {
    se += (long double)(y[i] - yh[i]) * (y[i] - yh[i]);
    yy += (long double)y[i] * y[i];
    dot += (long double)yh[i] * y[i];
  }
  m.mse = static_cast<double>(se / n);
  m.sdr = 10.0 * std::log10(static_cast<double>(yy / se));
  const long double alpha = dot / yy;
  long double tgt = 0, err = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const long double s = alpha * y[i];
    tgt += s * s;
    err += (s - yh[i]) * (s - yh[i]);
  }
  m.si_sdr = 10.0 * std::log10(static_cast<double>(tgt / err));

  // LSD: 2048-sample frames, hop 512, log10 power with magnitude floor 1e-10.
  {
    const auto a = oracle_frames(y, 2048, 512);
    const auto b = oracle_frames(yh, 2048, 512);
    double total = 0;
    for (std::size_t f = 0; f < a.size(); ++f) {
      double acc = 0;
      for (std::size_t k = 0; k < a[f].size(); ++k) {
        const double la = std::log10(std::pow(std::max(std::sqrt(a[f][k]), 1e-10), 2));
        const double lb = std::log10(std::pow(std::max(std::sqrt(b[f][k]), 1e-10), 2));
        acc += (la - lb) * (la - lb);
      }
      total += std::sqrt(acc / a[f].size());
    }
    m.lsd = total / a.size();
  }

  // MCD: 1024-sample frames, 20 HTK-mel triangles over 0..Nyquist, ln, DCT-II
  // (orthonormal), coefficients 1..16.
  {
    const int bands = 20;
    auto mel = [](double f) { return 2595.0 * std::log10(1.0 + f / 700.0); };
    auto hz = [](double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); };
    std::vector<double> pts(bands + 2);
    for (int i = 0; i < bands + 2; ++i) pts[i] = hz(mel(rate / 2.0) * i / (bands + 1));
    auto cepstra = [&](const std::vector<double>& x) {
      std::vector<std::vector<double>> out;
      for (const auto& p : oracle_frames(x, 1024, 512)) {
        std::vector<double> logmel(bands);
        for (int b = 0; b < bands; ++b) {
          double e = 0;
          for (std::size_t k = 0; k < p.size(); ++k) {
            const double f = static_cast<double>(k) * rate / 1024.0;
            double w = 0;
            if (f > pts[b] && f <= pts[b + 1]) w = (f - pts[b]) / (pts[b + 1] - pts[b]);
            if (f > pts[b + 1] && f < pts[b + 2]) w = (pts[b + 2] - f) / (pts[b + 2] - pts[b + 1]);
            e += w * p[k];
          }
          logmel[b] = std::log(std::max(e, 1e-10));
        }
        std::vector<double> c(16);
        for (int i = 1; i <= 16; ++i) {
          double acc = 0;
          for (int b = 0; b < bands; ++b) {
            acc += logmel[b] * std::cos(M_PI * i * (b + 0.5) / bands);
          }
          c[i - 1] = std::sqrt(2.0 / bands) * acc;
        }
        out.push_back(c);
      }
      return out;
    };
    const auto ca = cepstra(y);
    const auto cb = cepstra(yh);
    double total = 0;
    for (std::size_t f = 0; f < ca.size(); ++f) {
      double acc = 0;
      for (int i = 0; i < 16; ++i) acc += (ca[f][i] - cb[f][i]) * (ca[f][i] - cb[f][i]);
      total += std::sqrt(acc);
    }
    m.mcd = total / ca.size();
  }
  return m;
}

// Dense Gaussian elimination with partial pivoting: solves A x = b.
inline std::vector<double> gauss_solve(std::vector<std::vector<double>> a,
                                       std::vector<double> b) {
  const std::size_t n = b.size();
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < n; ++r) {
      if (std::abs(a[r][col]) > std::abs(a[piv][col])) piv = r;
    }
    std::swap(a[col], a[piv]);
    std::swap(b[col], b[piv]);
    for (std::size_t r = col + 1; r < n; ++r) {
      const double f = a[r][col] / a[col][col];
      for (std::size_t c = col; c < n; ++c) a[r][c] -= f * a[col][c];
      b[r] -= f * b[col];
    }
  }
  std::vector<double> x(n);
  for (std::size_t i = n; i-- > 0;) {
    double acc = b[i];
    for (std::size_t c = i + 1; c < n; ++c) acc -= a[i][c] * x[c];
    x[i] = acc / a[i][i];
  }
  return x;
}

// Yule-Walker normal equations R a = r[1..p] solved directly.
inline std::vector<double> yule_walker_direct(const std::vector<double>& r, std::size_t p) {
  std::vector<std::vector<double>> a(p, std::vector<double>(p));
  std::vector<double> b(p);
  for (std::size_t i = 0; i < p; ++i) {
    for (std::size_t j = 0; j < p; ++j) a[i][j] = r[i > j ? i - j : j - i];
    b[i] = r[i + 1];
  }
  return gauss_solve(a, b);
}

// Biased autocorrelation, written out independently.
inline std::vector<double> biased_autocorr(const std::vector<double>& x, std::size_t lags) {
  std::vector<double> r(lags + 1, 0.0);
  for (std::size_t k = 0; k <= lags; ++k) {
    for (std::size_t n = k; n < x.size(); ++n) r[k] += x[n] * x[n - k];
    r[k] /= static_cast<double>(x.size());
  }
  return r;
}

inline double rel_err(double a, double b) {
  if (a == b) return 0.0;
  return std::abs(a - b) / std::max(std::abs(a), std::abs(b));
}

}  // namespace plctest
