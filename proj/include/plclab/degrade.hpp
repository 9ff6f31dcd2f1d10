#pragma once

// Zero-fill degradation and blind-set style corpus assembly.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "plclab/audio_io.hpp"
#include "plclab/csv.hpp"
#include "plclab/error.hpp"
#include "plclab/random.hpp"
#include "plclab/trace.hpp"

namespace plclab {

inline constexpr double kMaxSilenceRatio = 0.30;

struct LossyClip {
  Waveform audio;
  PacketTrace trace;
  std::string origin;
  std::optional<TracePlan> plan;
  double silence_ratio = 0.0;
};

// Clip rejected by the silence gate.
class SilenceGateError : public Error {
 public:
  explicit SilenceGateError(double ratio)
      : Error("silence gate failed: silence ratio " + std::to_string(ratio) +
              " exceeds 0.30"),
        ratio_(ratio) {}
  double ratio() const noexcept { return ratio_; }

 private:
  double ratio_;
};

// Lost packets become exact zeros; received packets and the trailing
// partial packet are copied bit for bit.
inline LossyClip apply_zero_fill(const Waveform& clean, const PacketTrace& trace,
                                 std::string origin = {}) {
  const PacketGrid grid = packet_grid(clean);
  if (trace.size() != grid.whole_packets) {
    throw Error("trace/packet-count mismatch: trace has " +
                std::to_string(trace.size()) + " packets, audio has " +
                std::to_string(grid.whole_packets));
  }
  LossyClip out;
  out.audio = clean;
  out.trace = trace;
  out.origin = std::move(origin);
  for (std::size_t p = 0; p < trace.size(); ++p) {
    if (!trace.lost[p]) continue;
    std::fill_n(out.audio.samples.begin() +
                    static_cast<std::ptrdiff_t>(p * kPacketSize),
                kPacketSize, 0.0);
  }
  return out;
}

inline LossyClip build_blind_item(const Waveform& clean, const TracePools& pools,
                                  std::uint64_t seed, std::string origin = {},
                                  const SubsetWeights& weights = {}) {
  const double silence = silence_ratio(clean);
  if (silence > kMaxSilenceRatio) throw SilenceGateError(silence);
  TracePlan plan = sample_trace_plan(packet_grid(clean).whole_packets, pools,
                                     seed, weights);
  LossyClip item = apply_zero_fill(clean, realize_plan(plan), std::move(origin));
  item.plan = std::move(plan);
  item.silence_ratio = silence;
  return item;
}

// Non-overlapping 11.6 s windows; the last partial window is dropped.
inline std::vector<Waveform> segment_recording(
    const Waveform& recording, std::size_t clip_samples = kClipSamples) {
  std::vector<Waveform> clips;
  if (clip_samples == 0) throw Error("segment length must be positive");
  for (std::size_t start = 0; start + clip_samples <= recording.size();
       start += clip_samples) {
    Waveform w;
    w.sample_rate = recording.sample_rate;
    w.samples.assign(
        recording.samples.begin() + static_cast<std::ptrdiff_t>(start),
        recording.samples.begin() +
            static_cast<std::ptrdiff_t>(start + clip_samples));
    clips.push_back(std::move(w));
  }
  return clips;
}

// ---------------------------------------------------------------------------
// Corpus manifest

struct ManifestRecord {
  std::string clip_id;
  std::string source_file;
  std::uint64_t seed = 0;
  std::string trace_plan;
  double silence_ratio = 0.0;
  std::string subset_draws;
};

inline const csv::Row& manifest_header() {
  static const csv::Row h = {"clip_id",    "source_file",   "seed",
                             "trace_plan", "silence_ratio", "subset_draws"};
  return h;
}

inline ManifestRecord manifest_record(const LossyClip& item,
                                      std::string clip_id,
                                      std::string source_file) {
  ManifestRecord r;
  r.clip_id = std::move(clip_id);
  r.source_file = std::move(source_file);
  r.silence_ratio = item.silence_ratio;
  if (item.plan) {
    r.seed = item.plan->seed;
    r.trace_plan = format_plan(*item.plan);
    r.subset_draws = format_subset_draws(*item.plan);
  }
  return r;
}

inline void write_manifest(const std::vector<ManifestRecord>& records,
                           const std::filesystem::path& path) {
  csv::Table t;
  t.header = manifest_header();
  for (const auto& r : records) {
    char ratio[32];
    std::snprintf(ratio, sizeof ratio, "%.6f", r.silence_ratio);
    t.rows.push_back({r.clip_id, r.source_file, std::to_string(r.seed),
                      r.trace_plan, ratio, r.subset_draws});
  }
  csv::write_table(t, path);
}

inline std::vector<ManifestRecord> read_manifest(
    const std::filesystem::path& path) {
  const csv::Table t = csv::read_table(path);
  std::vector<ManifestRecord> out;
  const auto c_id = t.column("clip_id");
  const auto c_src = t.column("source_file");
  const auto c_seed = t.column("seed");
  const auto c_plan = t.column("trace_plan");
  const auto c_sil = t.column("silence_ratio");
  const auto c_draws = t.column("subset_draws");
  for (const auto& row : t.rows) {
    ManifestRecord r;
    r.clip_id = row[c_id];
    r.source_file = row[c_src];
    r.seed = std::stoull(row[c_seed]);
    r.trace_plan = row[c_plan];
    r.silence_ratio = csv::parse_double(row[c_sil]);
    r.subset_draws = row[c_draws];
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace plclab
