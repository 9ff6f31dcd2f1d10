#pragma once

// Packet-loss traces: one binary digit per 512-sample packet, 1 = lost.
// Parsing, burst statistics, subset classification by maximum burst, and
// seeded sampling of up-to-three-trace concatenations covering a clip.

#include <algorithm>
#include <array>
#include <cctype>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "plclab/audio_io.hpp"
#include "plclab/error.hpp"
#include "plclab/random.hpp"

namespace plclab {

struct PacketTrace {
  std::vector<bool> lost;  // lost[i] == true: packet i was dropped
  std::string source_id;

  std::size_t size() const noexcept { return lost.size(); }
  friend bool operator==(const PacketTrace& a, const PacketTrace& b) {
    return a.lost == b.lost;
  }
};

inline PacketTrace parse_trace(std::string_view text,
                               std::string source_id = {}) {
  PacketTrace t;
  t.source_id = std::move(source_id);
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (c == '0' || c == '1') {
      t.lost.push_back(c == '1');
    } else if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
      continue;
    } else {
      throw ParseError("invalid trace character '" + std::string(1, c) + "'",
                       i);
    }
  }
  if (t.lost.empty()) throw ParseError("trace contains no digits", text.size());
  return t;
}

inline std::string serialize_trace(const PacketTrace& t) {
  std::string s;
  s.reserve(t.size());
  for (bool l : t.lost) s.push_back(l ? '1' : '0');
  return s;
}

inline PacketTrace read_trace_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open trace file: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_trace(ss.str(), path.stem().string());
  } catch (const ParseError& e) {
    throw Error(path.string() + ": " + e.what());
  }
}

inline void write_trace_file(const PacketTrace& t,
                             const std::filesystem::path& path) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::ofstream out(path);
  if (!out) throw Error("cannot write trace file: " + path.string());
  out << serialize_trace(t) << '\n';
}

// ---------------------------------------------------------------------------
// Burst statistics

struct BurstStats {
  double loss_rate = 0.0;
  std::vector<std::size_t> burst_lengths;  // left-to-right order
  std::size_t max_burst = 0;
  std::size_t lost_packets = 0;
};

inline BurstStats burst_stats(const PacketTrace& t) {
  BurstStats s;
  std::size_t run = 0;
  auto close_run = [&] {
    if (run > 0) {
      s.burst_lengths.push_back(run);
      s.max_burst = std::max(s.max_burst, run);
      run = 0;
    }
  };
  for (bool l : t.lost) {
    if (l) {
      ++run;
      ++s.lost_packets;
    } else {
      close_run();
    }
  }
  close_run();
  s.loss_rate = t.size() == 0 ? 0.0
                              : static_cast<double>(s.lost_packets) /
                                    static_cast<double>(t.size());
  return s;
}

// ---------------------------------------------------------------------------
// Subsets by maximum burst length: 0-6 / 7-16 / 17-50.

enum class SubsetLabel { kSubset1 = 1, kSubset2 = 2, kSubset3 = 3 };

inline constexpr std::size_t kSubset1MaxBurst = 6;
inline constexpr std::size_t kSubset2MaxBurst = 16;
inline constexpr std::size_t kSubset3MaxBurst = 50;

inline SubsetLabel classify_max_burst(std::size_t max_burst) {
  if (max_burst <= kSubset1MaxBurst) return SubsetLabel::kSubset1;
  if (max_burst <= kSubset2MaxBurst) return SubsetLabel::kSubset2;
  if (max_burst <= kSubset3MaxBurst) return SubsetLabel::kSubset3;
  throw Error("max burst " + std::to_string(max_burst) +
              " out of range (> 50)");
}

inline SubsetLabel classify_subset(const BurstStats& s) {
  return classify_max_burst(s.max_burst);
}

inline std::string to_string(SubsetLabel l) {
  return "Subset" + std::to_string(static_cast<int>(l));
}

using TraceRef = std::shared_ptr<const PacketTrace>;

struct TracePools {
  std::vector<TraceRef> subset1;
  std::vector<TraceRef> subset2;
  std::vector<TraceRef> subset3;  // kept for reporting; never sampled

  const std::vector<TraceRef>& pool(SubsetLabel l) const {
    switch (l) {
      case SubsetLabel::kSubset1: return subset1;
      case SubsetLabel::kSubset2: return subset2;
      default: return subset3;
    }
  }

  void add(PacketTrace t) {
    const SubsetLabel l = classify_subset(burst_stats(t));
    auto ref = std::make_shared<const PacketTrace>(std::move(t));
    switch (l) {
      case SubsetLabel::kSubset1: subset1.push_back(std::move(ref)); break;
      case SubsetLabel::kSubset2: subset2.push_back(std::move(ref)); break;
      case SubsetLabel::kSubset3: subset3.push_back(std::move(ref)); break;
    }
  }

  // Lookup by source id across all pools.
  TraceRef find(std::string_view id) const {
    for (const auto* p : {&subset1, &subset2, &subset3}) {
      for (const auto& t : *p) {
        if (t->source_id == id) return t;
      }
    }
    return nullptr;
  }

  std::size_t total() const {
    return subset1.size() + subset2.size() + subset3.size();
  }
};

// Loads every *.txt trace in a directory (sorted by file name so pool
// order, and therefore sampling, is reproducible). Traces whose max burst
// exceeds 50 are skipped and reported through `rejected`.
inline TracePools load_trace_pools(const std::filesystem::path& dir,
                                   std::vector<std::string>* rejected = nullptr) {
  if (!std::filesystem::is_directory(dir)) {
    throw Error("trace directory not found: " + dir.string());
  }
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".txt") {
      files.push_back(e.path());
    }
  }
  std::sort(files.begin(), files.end());
  TracePools pools;
  for (const auto& f : files) {
    PacketTrace t = read_trace_file(f);
    if (burst_stats(t).max_burst > kSubset3MaxBurst) {
      if (rejected) rejected->push_back(t.source_id);
      continue;
    }
    pools.add(std::move(t));
  }
  return pools;
}

// ---------------------------------------------------------------------------
// Trace plans

struct SubsetWeights {
  double subset1 = 0.9;
  double subset2 = 0.1;
};

struct PlanSegment {
  TraceRef trace;
  SubsetLabel subset = SubsetLabel::kSubset1;
  std::size_t packets = 0;  // may exceed trace length: the trace is cycled
};

struct TracePlan {
  std::size_t clip_packets = 0;
  std::vector<PlanSegment> segments;
  std::uint64_t seed = 0;
};

inline constexpr std::size_t kMaxPlanSegments = 3;

// Draws traces i.i.d. (Subset1 w.p. weights.subset1, else Subset2, uniform
// within the pool) and concatenates until the clip is covered. The third
// segment, if reached, absorbs the remainder by cycling its trace.
inline TracePlan sample_trace_plan(std::size_t clip_packets,
                                   const TracePools& pools, std::uint64_t seed,
                                   const SubsetWeights& weights = {}) {
  TracePlan plan;
  plan.clip_packets = clip_packets;
  plan.seed = seed;
  if (clip_packets == 0) return plan;
  if (pools.subset1.empty() && weights.subset1 > 0.0) {
    throw Error("empty pool: Subset1");
  }
  if (pools.subset2.empty() && weights.subset2 > 0.0) {
    throw Error("empty pool: Subset2");
  }
  const double total = weights.subset1 + weights.subset2;
  if (!(total > 0.0)) throw Error("subset weights must be positive");

  Rng rng(seed);
  std::size_t remaining = clip_packets;
  while (remaining > 0) {
    const bool first = rng.uniform() * total < weights.subset1;
    const SubsetLabel label =
        first ? SubsetLabel::kSubset1 : SubsetLabel::kSubset2;
    const auto& pool = pools.pool(label);
    const TraceRef& t = pool[static_cast<std::size_t>(rng.below(pool.size()))];
    std::size_t take = std::min(remaining, t->size());
    if (plan.segments.size() + 1 == kMaxPlanSegments) take = remaining;
    plan.segments.push_back({t, label, take});
    remaining -= take;
  }
  return plan;
}

inline PacketTrace realize_plan(const TracePlan& p) {
  PacketTrace out;
  out.lost.reserve(p.clip_packets);
  for (const auto& seg : p.segments) {
    const auto& flags = seg.trace->lost;
    for (std::size_t i = 0; i < seg.packets; ++i) {
      out.lost.push_back(flags[i % flags.size()]);
    }
  }
  if (out.size() != p.clip_packets) {
    throw Error("trace plan segments do not cover the clip");
  }
  return out;
}

// Plan line: `seed, clip_packets, trace_id:count, ...`
inline std::string format_plan(const TracePlan& p) {
  std::ostringstream os;
  os << p.seed << ", " << p.clip_packets;
  for (const auto& s : p.segments) {
    os << ", " << s.trace->source_id << ':' << s.packets;
  }
  return os.str();
}

inline std::string format_subset_draws(const TracePlan& p) {
  std::string s;
  for (const auto& seg : p.segments) {
    if (!s.empty()) s += ';';
    s += std::to_string(static_cast<int>(seg.subset));
  }
  return s;
}

namespace detail {
inline std::string trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}
}  // namespace detail

inline TracePlan parse_plan(std::string_view line, const TracePools& library) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    fields.push_back(detail::trim(line.substr(start, comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  if (fields.size() < 2) throw Error("trace plan: expected seed and length");
  TracePlan p;
  try {
    p.seed = std::stoull(fields[0]);
    p.clip_packets = std::stoull(fields[1]);
  } catch (const std::exception&) {
    throw Error("trace plan: bad seed or clip length");
  }
  for (std::size_t i = 2; i < fields.size(); ++i) {
    const auto colon = fields[i].rfind(':');
    if (colon == std::string::npos) throw Error("trace plan: bad segment");
    const std::string id = fields[i].substr(0, colon);
    TraceRef t = library.find(id);
    if (!t) throw Error("trace plan: unknown trace id '" + id + "'");
    PlanSegment seg;
    seg.trace = t;
    seg.subset = classify_subset(burst_stats(*t));
    try {
      seg.packets = std::stoull(fields[i].substr(colon + 1));
    } catch (const std::exception&) {
      throw Error("trace plan: bad segment count");
    }
    p.segments.push_back(std::move(seg));
  }
  if (p.segments.size() > kMaxPlanSegments) {
    throw Error("trace plan: more than three segments");
  }
  return p;
}

}  // namespace plclab
