#pragma once

// Challenge-format audio: 16-bit PCM mono WAV, 512-sample packet grid,
// silence measurement, and band-limited resampling for external tools.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "plclab/error.hpp"

namespace plclab {

inline constexpr std::size_t kPacketSize = 512;
inline constexpr int kChallengeRate = 44100;
// 11.6 s at 44.1 kHz.
inline constexpr std::size_t kClipSamples = 511560;

struct Waveform {
  std::vector<double> samples;
  int sample_rate = kChallengeRate;

  std::size_t size() const noexcept { return samples.size(); }
  bool empty() const noexcept { return samples.empty(); }
  double duration_seconds() const noexcept {
    return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate
                           : 0.0;
  }
  friend bool operator==(const Waveform&, const Waveform&) = default;
};

struct PacketGrid {
  std::size_t packet_size = kPacketSize;
  std::size_t whole_packets = 0;
  std::size_t tail_samples = 0;
  friend bool operator==(const PacketGrid&, const PacketGrid&) = default;
};

inline PacketGrid packet_grid(const Waveform& w) {
  return {kPacketSize, w.size() / kPacketSize, w.size() % kPacketSize};
}

// Samples of packet `index` (must be a whole packet).
inline std::span<const double> packet_span(const Waveform& w,
                                           std::size_t index) {
  return std::span<const double>(w.samples).subspan(index * kPacketSize,
                                                    kPacketSize);
}

// ---------------------------------------------------------------------------
// PCM quantization

// Round half away from zero, saturating to the int16 range. Inputs outside
// [-1, 1] (or non-finite) are rejected: they indicate an unclipped concealer.
inline std::int16_t quantize_pcm16(double s) {
  if (!std::isfinite(s) || s > 1.0 || s < -1.0) {
    throw Error("sample out of range [-1, 1]: " + std::to_string(s));
  }
  const double scaled = std::round(s * 32768.0);
  return static_cast<std::int16_t>(std::clamp(scaled, -32768.0, 32767.0));
}

inline double dequantize_pcm16(std::int16_t v) { return v / 32768.0; }

// ---------------------------------------------------------------------------
// WAV container

namespace detail {

inline std::uint32_t read_le32(const unsigned char* p) {
  return std::uint32_t{p[0]} | (std::uint32_t{p[1]} << 8) |
         (std::uint32_t{p[2]} << 16) | (std::uint32_t{p[3]} << 24);
}
inline std::uint16_t read_le16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}
inline void put_le32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back((v >> (8 * i)) & 0xFF);
}
inline void put_le16(std::vector<unsigned char>& out, std::uint16_t v) {
  out.push_back(v & 0xFF);
  out.push_back((v >> 8) & 0xFF);
}
inline void put_tag(std::vector<unsigned char>& out, const char* tag) {
  out.insert(out.end(), tag, tag + 4);
}

}  // namespace detail

// Decodes an in-memory RIFF/WAVE file. Only PCM 16-bit mono is accepted.
inline Waveform decode_wav(std::span<const unsigned char> bytes) {
  using detail::read_le16;
  using detail::read_le32;
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw Error("malformed header: not a RIFF/WAVE file");
  }
  bool have_fmt = false;
  std::uint16_t channels = 0;
  std::uint16_t bits = 0;
  std::uint32_t rate = 0;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* hdr = bytes.data() + pos;
    const std::uint32_t len = read_le32(hdr + 4);
    const std::size_t body = pos + 8;
    if (body + len > bytes.size() && std::memcmp(hdr, "data", 4) != 0) {
      throw Error("malformed header: truncated chunk");
    }
    if (std::memcmp(hdr, "fmt ", 4) == 0) {
      if (len < 16) throw Error("malformed header: short fmt chunk");
      const unsigned char* f = bytes.data() + body;
      std::uint16_t format = read_le16(f);
      channels = read_le16(f + 2);
      rate = read_le32(f + 4);
      bits = read_le16(f + 14);
      if (format == 0xFFFE && len >= 26) format = read_le16(f + 24);
      if (format != 1) throw Error("unsupported sample format (not PCM)");
      have_fmt = true;
    } else if (std::memcmp(hdr, "data", 4) == 0) {
      if (!have_fmt) throw Error("malformed header: data before fmt");
      if (channels != 1) {
        throw Error("unsupported channel count: " + std::to_string(channels));
      }
      if (bits != 16) {
        throw Error("unsupported bit depth: " + std::to_string(bits));
      }
      if (rate == 0) throw Error("malformed header: zero sample rate");
      if (body + len > bytes.size()) {
        throw Error("malformed header: data chunk exceeds file size");
      }
      Waveform w;
      w.sample_rate = static_cast<int>(rate);
      w.samples.resize(len / 2);
      const unsigned char* d = bytes.data() + body;
      for (std::size_t i = 0; i < w.samples.size(); ++i) {
        w.samples[i] = dequantize_pcm16(
            static_cast<std::int16_t>(read_le16(d + 2 * i)));
      }
      return w;
    }
    pos = body + len + (len & 1);
  }
  throw Error("malformed header: no data chunk");
}

inline std::vector<unsigned char> encode_wav(const Waveform& w) {
  if (w.sample_rate <= 0) throw Error("invalid sample rate");
  const std::uint32_t data_bytes =
      static_cast<std::uint32_t>(w.samples.size() * 2);
  std::vector<unsigned char> out;
  out.reserve(44 + data_bytes);
  detail::put_tag(out, "RIFF");
  detail::put_le32(out, 36 + data_bytes);
  detail::put_tag(out, "WAVE");
  detail::put_tag(out, "fmt ");
  detail::put_le32(out, 16);
  detail::put_le16(out, 1);  // PCM
  detail::put_le16(out, 1);  // mono
  detail::put_le32(out, static_cast<std::uint32_t>(w.sample_rate));
  detail::put_le32(out, static_cast<std::uint32_t>(w.sample_rate) * 2);
  detail::put_le16(out, 2);
  detail::put_le16(out, 16);
  detail::put_tag(out, "data");
  detail::put_le32(out, data_bytes);
  for (double s : w.samples) {
    detail::put_le16(out, static_cast<std::uint16_t>(quantize_pcm16(s)));
  }
  return out;
}

inline std::vector<unsigned char> read_file_bytes(
    const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open file: " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline Waveform read_wav(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  try {
    return decode_wav(bytes);
  } catch (const Error& e) {
    throw Error(path.string() + ": " + e.what());
  }
}

inline void write_wav(const Waveform& w, const std::filesystem::path& path) {
  const auto bytes = encode_wav(w);
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write file: " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed: " + path.string());
}

// ---------------------------------------------------------------------------
// Silence

inline constexpr double kSilenceThresholdDbfs = -60.0;

// Fraction of 20 ms windows (10 ms hop) whose RMS is below -60 dBFS.
// Clips shorter than one window are judged as a single window.
inline double silence_ratio(const Waveform& w) {
  if (w.empty()) throw Error("silence_ratio: empty waveform");
  const std::size_t win = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::lround(0.020 * w.sample_rate)));
  const std::size_t hop = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::lround(0.010 * w.sample_rate)));
  const double threshold = std::pow(10.0, kSilenceThresholdDbfs / 20.0);
  const double threshold_sq = threshold * threshold;

  auto is_silent = [&](std::size_t start, std::size_t len) {
    double energy = 0.0;
    for (std::size_t i = start; i < start + len; ++i) {
      energy += w.samples[i] * w.samples[i];
    }
    return energy / static_cast<double>(len) < threshold_sq;
  };

  if (w.size() < win) return is_silent(0, w.size()) ? 1.0 : 0.0;
  std::size_t windows = 0;
  std::size_t silent = 0;
  for (std::size_t start = 0; start + win <= w.size(); start += hop) {
    ++windows;
    if (is_silent(start, win)) ++silent;
  }
  return static_cast<double>(silent) / static_cast<double>(windows);
}

// ---------------------------------------------------------------------------
// Resampling

struct ResamplerOptions {
  std::size_t taps_per_phase = 128;
  double stopband_db = 95.0;
};

namespace detail {

inline double kaiser_beta(double attenuation_db) {
  if (attenuation_db > 50.0) return 0.1102 * (attenuation_db - 8.7);
  if (attenuation_db >= 21.0) {
    return 0.5842 * std::pow(attenuation_db - 21.0, 0.4) +
           0.07886 * (attenuation_db - 21.0);
  }
  return 0.0;
}

}  // namespace detail

// Rational polyphase conversion with a Kaiser-windowed sinc prototype.
// The filter is linear-phase and centred, so the output is time-aligned
// with the input. Output length is round(N * target / source).
inline Waveform resample(const Waveform& w, int target_rate,
                         const ResamplerOptions& opt = {}) {
  if (target_rate <= 0) throw Error("resample: target rate must be positive");
  if (w.sample_rate <= 0) throw Error("resample: invalid source rate");
  if (target_rate == w.sample_rate) return w;

  const std::uint64_t g = std::gcd(static_cast<std::uint64_t>(w.sample_rate),
                                   static_cast<std::uint64_t>(target_rate));
  const std::uint64_t up = static_cast<std::uint64_t>(target_rate) / g;
  const std::uint64_t down = static_cast<std::uint64_t>(w.sample_rate) / g;
  const std::uint64_t taps = opt.taps_per_phase * up + 1;
  if (taps > (std::uint64_t{1} << 23)) {
    throw Error("resample: rate ratio too fine for the polyphase table");
  }

  // Prototype runs at source_rate * up. Place the transition band just
  // below the lower Nyquist so aliases land in the stopband.
  const double fs_up = static_cast<double>(w.sample_rate) * up;
  const double nyquist = 0.5 * std::min(w.sample_rate, target_rate);
  const double transition =
      (opt.stopband_db - 7.95) / (14.36 * static_cast<double>(taps)) * fs_up;
  const double cutoff = nyquist - 0.5 * transition;
  const double fc = cutoff / fs_up;  // cycles per upsampled sample
  const double beta = detail::kaiser_beta(opt.stopband_db);
  const double i0_beta = std::cyl_bessel_i(0.0, beta);
  const double centre = static_cast<double>(taps - 1) / 2.0;

  std::vector<double> kernel(taps);
  for (std::uint64_t j = 0; j < taps; ++j) {
    const double t = static_cast<double>(j) - centre;
    const double r = t / centre;
    const double win =
        std::cyl_bessel_i(0.0, beta * std::sqrt(std::max(0.0, 1.0 - r * r))) /
        i0_beta;
    const double x = 2.0 * fc * t;
    const double sinc =
        (t == 0.0) ? 1.0 : std::sin(M_PI * x) / (M_PI * x);
    kernel[j] = 2.0 * fc * sinc * win * static_cast<double>(up);
  }

  const std::uint64_t n_in = w.size();
  const std::uint64_t n_out =
      (n_in * static_cast<std::uint64_t>(target_rate) +
       static_cast<std::uint64_t>(w.sample_rate) / 2) /
      static_cast<std::uint64_t>(w.sample_rate);
  const auto c = static_cast<std::int64_t>(taps - 1) / 2;

  Waveform out;
  out.sample_rate = target_rate;
  out.samples.resize(n_out);
  for (std::uint64_t m = 0; m < n_out; ++m) {
    // Kernel index j = m*down - k*up + c must lie in [0, taps).
    const auto pos = static_cast<std::int64_t>(m * down) + c;
    const auto iu = static_cast<std::int64_t>(up);
    std::int64_t k_hi = pos / iu;
    std::int64_t k_lo = pos - static_cast<std::int64_t>(taps - 1);
    k_lo = k_lo <= 0 ? 0 : (k_lo + iu - 1) / iu;
    k_hi = std::min<std::int64_t>(k_hi, static_cast<std::int64_t>(n_in) - 1);
    double acc = 0.0;
    for (std::int64_t k = k_lo; k <= k_hi; ++k) {
      acc += w.samples[static_cast<std::size_t>(k)] *
             kernel[static_cast<std::size_t>(pos - k * iu)];
    }
    out.samples[m] = acc;
  }
  return out;
}

// Clamps into [-1, 1] so a resampled export can be written as PCM.
inline void clip_to_unit(Waveform& w) {
  for (double& s : w.samples) s = std::clamp(s, -1.0, 1.0);
}

}  // namespace plclab
