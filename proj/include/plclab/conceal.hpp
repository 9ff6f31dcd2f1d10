#pragma once

// Strictly causal packet loss concealment.
//
// The engine consumes one PacketEvent at a time and immediately emits the
// output for that packet; no event after k influences output k. Lost
// packets are replaced by a concealer prediction that extends
// `extra_pred` samples past the packet. That surplus is crossfaded into
// whatever comes next (a received packet or another prediction).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "plclab/audio_io.hpp"
#include "plclab/error.hpp"
#include "plclab/lpc.hpp"
#include "plclab/trace.hpp"

namespace plclab {

// How the AR branch estimates its model. kAutocorrelation is the
// reference (biased autocorrelation, white-noise compensation,
// Levinson-Durbin); kBurg is the lattice alternative.
enum class ArEstimator { kAutocorrelation, kBurg };

inline std::string to_string(ArEstimator e) {
  return e == ArEstimator::kBurg ? "burg" : "autocorr";
}

inline ArEstimator parse_estimator(std::string_view name) {
  if (name == "autocorr" || name == "autocorrelation") return ArEstimator::kAutocorrelation;
  if (name == "burg") return ArEstimator::kBurg;
  throw Error("unknown AR estimator '" + std::string(name) +
              "' (expected autocorr or burg)");
}

struct EngineConfig {
  std::size_t packet_size = kPacketSize;
  std::size_t context_packets = 8;
  std::size_t ar_order = 256;
  std::size_t extra_pred = 256;
  std::size_t crossfade_len = 256;
  double noise_comp = 1e-3;
  ArEstimator estimator = ArEstimator::kAutocorrelation;

  std::size_t context_len() const noexcept {
    return context_packets * packet_size;
  }
  std::size_t horizon() const noexcept { return packet_size + extra_pred; }

  void validate() const {
    if (packet_size == 0) throw Error("config: packet_size must be positive");
    if (ar_order == 0) throw Error("config: ar_order must be >= 1");
    if (2 * ar_order > context_len()) {
      throw Error("config: context must hold at least 2*ar_order samples");
    }
    if (extra_pred != crossfade_len) {
      throw Error("config: extra_pred must equal crossfade_len");
    }
    if (crossfade_len > packet_size) {
      throw Error("config: crossfade_len exceeds packet_size");
    }
    if (!(noise_comp >= 0.0)) throw Error("config: noise_comp must be >= 0");
  }
};

enum class ConcealMethod { kZero, kRepeat, kAr };

inline std::string to_string(ConcealMethod m) {
  switch (m) {
    case ConcealMethod::kZero: return "zero";
    case ConcealMethod::kRepeat: return "repeat";
    case ConcealMethod::kAr: return "ar";
  }
  return "?";
}

inline ConcealMethod parse_method(std::string_view name) {
  if (name == "zero" || name == "zero_fill") return ConcealMethod::kZero;
  if (name == "repeat") return ConcealMethod::kRepeat;
  if (name == "ar") return ConcealMethod::kAr;
  throw Error("unknown concealer '" + std::string(name) +
              "' (expected zero, repeat or ar)");
}

struct PacketEvent {
  std::size_t index = 0;
  std::optional<std::vector<double>> payload;  // absent <=> lost

  bool lost() const noexcept { return !payload.has_value(); }

  static PacketEvent received(std::size_t index, std::vector<double> samples) {
    return {index, std::move(samples)};
  }
  static PacketEvent missing(std::size_t index) { return {index, std::nullopt}; }
};

struct CrossfadeState {
  std::vector<double> pending_tail;
  bool active() const noexcept { return !pending_tail.empty(); }
};

// Blends the first `fade_len` samples of `incoming` with `tail` using
// complementary raised-cosine ramps (w_out + w_in = 1). The blend is
// written as incoming + w_out * (tail - incoming) so that identical inputs
// splice exactly.
inline std::vector<double> crossfade(std::span<const double> tail,
                                     std::span<const double> incoming,
                                     std::size_t fade_len) {
  if (fade_len > tail.size() || fade_len > incoming.size()) {
    throw Error("crossfade: fade_len exceeds input length");
  }
  std::vector<double> out(incoming.begin(), incoming.end());
  const double denom = static_cast<double>(fade_len + 1);
  for (std::size_t n = 0; n < fade_len; ++n) {
    const double w_out =
        0.5 * (1.0 + std::cos(M_PI * static_cast<double>(n + 1) / denom));
    out[n] = incoming[n] + w_out * (tail[n] - incoming[n]);
  }
  return out;
}

// What a residual predictor sees: the same context the AR model is fitted
// on, plus the AR prediction it corrects.
struct ResidualInput {
  std::size_t packet_index = 0;
  std::span<const double> context;
  std::span<const double> ar_prediction;
};

// Plugin point for a learned residual (e.g. a neural network trained on
// the AR model's error). Must return exactly ar_prediction.size() samples.
class ResidualPredictor {
 public:
  virtual ~ResidualPredictor() = default;
  virtual std::vector<double> predict(const ResidualInput& in) = 0;
};

class ZeroResidual final : public ResidualPredictor {
 public:
  std::vector<double> predict(const ResidualInput& in) override {
    return std::vector<double>(in.ar_prediction.size(), 0.0);
  }
};

// Least-squares gain for predicting the newest packet from the one before
// it, clamped to [0, 1]. Repeating with this gain never expects more error
// than silence when the signal decorrelates over one packet.
inline double repetition_gain(std::span<const double> history,
                              std::size_t packet_size) {
  if (history.size() < 2 * packet_size) return 0.0;
  const auto last = history.last(packet_size);
  const auto before = history.last(2 * packet_size).first(packet_size);
  double cross = 0.0;
  double energy = 0.0;
  for (std::size_t i = 0; i < packet_size; ++i) {
    cross += last[i] * before[i];
    energy += before[i] * before[i];
  }
  if (!(energy > 0.0)) return 0.0;
  return std::clamp(cross / energy, 0.0, 1.0);
}

class ConcealmentEngine {
 public:
  ConcealmentEngine(EngineConfig config, ConcealMethod method)
      : config_(config), method_(method) {
    config_.validate();
    history_.assign(config_.context_len(), 0.0);
  }

  void attach_residual(std::shared_ptr<ResidualPredictor> predictor) {
    residual_ = std::move(predictor);
  }

  const EngineConfig& config() const noexcept { return config_; }
  ConcealMethod method() const noexcept { return method_; }
  std::size_t next_index() const noexcept { return next_index_; }
  const CrossfadeState& crossfade_state() const noexcept { return fade_; }

  // Returns the `packet_size` output samples for this event.
  std::vector<double> process(const PacketEvent& ev) {
    if (ev.index != next_index_) {
      throw Error("out-of-order event: expected packet " +
                  std::to_string(next_index_) + ", got " +
                  std::to_string(ev.index));
    }
    std::vector<double> out =
        ev.lost() ? conceal(ev.index) : receive(*ev.payload);
    for (double& s : out) s = std::clamp(s, -1.0, 1.0);
    push_history(out);
    ++next_index_;
    return out;
  }

 private:
  std::vector<double> receive(const std::vector<double>& payload) {
    if (payload.size() != config_.packet_size) {
      throw Error("payload size " + std::to_string(payload.size()) +
                  " != packet size " + std::to_string(config_.packet_size));
    }
    in_burst_ = false;
    if (!fade_.active()) return payload;
    std::vector<double> out =
        crossfade(fade_.pending_tail, payload, config_.crossfade_len);
    fade_.pending_tail.clear();
    return out;
  }

  std::vector<double> conceal(std::size_t index) {
    const std::size_t ps = config_.packet_size;
    if (method_ == ConcealMethod::kZero) {
      in_burst_ = true;
      fade_.pending_tail.clear();
      return std::vector<double>(ps, 0.0);
    }

    std::vector<double> pred(config_.horizon());
    if (method_ == ConcealMethod::kRepeat) {
      const auto last = std::span<const double>(history_).last(ps);
      if (!in_burst_) repeat_gain_ = repetition_gain(history_, ps);
      // Each further packet period is one more repetition: gain compounds.
      double gain = repeat_gain_;
      for (std::size_t i = 0; i < pred.size(); ++i) {
        if (i > 0 && i % ps == 0) gain *= repeat_gain_;
        pred[i] = gain * last[i % ps];
      }
    } else {
      if (!in_burst_) {
        model_ = config_.estimator == ArEstimator::kBurg
                     ? fit_ar_burg(history_, config_.ar_order)
                     : fit_ar(history_, config_.ar_order, config_.noise_comp);
      }
      pred = ar_extrapolate(model_.coefficients, history_, config_.horizon());
      if (residual_) {
        const std::vector<double> res =
            residual_->predict({index, history_, pred});
        if (res.size() != pred.size()) {
          throw Error("residual predictor returned " +
                      std::to_string(res.size()) + " samples, expected " +
                      std::to_string(pred.size()));
        }
        for (std::size_t i = 0; i < pred.size(); ++i) pred[i] += res[i];
      }
    }
    in_burst_ = true;

    if (method_ == ConcealMethod::kRepeat && repeat_gain_ == 0.0) {
      // Degenerates to silence; nothing to crossfade out of.
      fade_.pending_tail.clear();
      return std::vector<double>(ps, 0.0);
    }

    std::span<const double> head(pred.data(), ps);
    std::vector<double> out =
        fade_.active() ? crossfade(fade_.pending_tail, head, config_.crossfade_len)
                       : std::vector<double>(head.begin(), head.end());
    fade_.pending_tail.assign(pred.begin() + static_cast<std::ptrdiff_t>(ps),
                              pred.end());
    return out;
  }

  void push_history(const std::vector<double>& packet) {
    const std::size_t n = std::min(packet.size(), history_.size());
    std::move(history_.begin() + static_cast<std::ptrdiff_t>(n), history_.end(),
              history_.begin());
    std::copy(packet.end() - static_cast<std::ptrdiff_t>(n), packet.end(),
              history_.end() - static_cast<std::ptrdiff_t>(n));
  }

  EngineConfig config_;
  ConcealMethod method_;
  std::shared_ptr<ResidualPredictor> residual_;
  std::vector<double> history_;  // last context_len output samples
  CrossfadeState fade_;
  ArModel model_;
  double repeat_gain_ = 1.0;
  bool in_burst_ = false;
  std::size_t next_index_ = 0;
};

inline Waveform process_stream(std::span<const PacketEvent> events,
                               const EngineConfig& config, ConcealMethod method,
                               std::shared_ptr<ResidualPredictor> residual = {}) {
  ConcealmentEngine engine(config, method);
  if (residual) engine.attach_residual(std::move(residual));
  Waveform out;
  out.samples.reserve(events.size() * config.packet_size);
  for (const auto& ev : events) {
    const auto pkt = engine.process(ev);
    out.samples.insert(out.samples.end(), pkt.begin(), pkt.end());
  }
  return out;
}

// Events for a zero-filled clip: received packets carry the lossy audio,
// lost packets carry nothing.
inline std::vector<PacketEvent> events_from_clip(const Waveform& lossy,
                                                 const PacketTrace& trace,
                                                 std::size_t packet_size = kPacketSize) {
  const std::size_t packets = lossy.size() / packet_size;
  if (trace.size() != packets) {
    throw Error("trace/packet-count mismatch: trace has " +
                std::to_string(trace.size()) + " packets, audio has " +
                std::to_string(packets));
  }
  std::vector<PacketEvent> events;
  events.reserve(packets);
  for (std::size_t p = 0; p < packets; ++p) {
    if (trace.lost[p]) {
      events.push_back(PacketEvent::missing(p));
    } else {
      auto first = lossy.samples.begin() + static_cast<std::ptrdiff_t>(p * packet_size);
      events.push_back(PacketEvent::received(
          p, std::vector<double>(first, first + static_cast<std::ptrdiff_t>(packet_size))));
    }
  }
  return events;
}

// Whole-clip convenience: runs the engine packet by packet and passes the
// trailing partial packet through untouched.
inline Waveform conceal_clip(const Waveform& lossy, const PacketTrace& trace,
                             const EngineConfig& config, ConcealMethod method,
                             std::shared_ptr<ResidualPredictor> residual = {}) {
  ConcealmentEngine engine(config, method);
  if (residual) engine.attach_residual(std::move(residual));
  const std::size_t ps = config.packet_size;
  const std::size_t packets = lossy.size() / ps;
  if (trace.size() != packets) {
    throw Error("trace/packet-count mismatch: trace has " +
                std::to_string(trace.size()) + " packets, audio has " +
                std::to_string(packets));
  }
  Waveform out;
  out.sample_rate = lossy.sample_rate;
  out.samples.reserve(lossy.size());
  for (std::size_t p = 0; p < packets; ++p) {
    PacketEvent ev{p, std::nullopt};
    if (!trace.lost[p]) {
      auto first = lossy.samples.begin() + static_cast<std::ptrdiff_t>(p * ps);
      ev.payload.emplace(first, first + static_cast<std::ptrdiff_t>(ps));
    }
    const auto pkt = engine.process(ev);
    out.samples.insert(out.samples.end(), pkt.begin(), pkt.end());
  }
  out.samples.insert(out.samples.end(),
                     lossy.samples.begin() + static_cast<std::ptrdiff_t>(packets * ps),
                     lossy.samples.end());
  return out;
}

}  // namespace plclab
