#pragma once

// Corpus-level evaluation of concealment systems: per-clip metric rows,
// per-system means (finite values only, infinities tallied), comparison
// table, and real-time factor measurement.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include "plclab/audio_io.hpp"
#include "plclab/conceal.hpp"
#include "plclab/csv.hpp"
#include "plclab/error.hpp"
#include "plclab/metrics.hpp"
#include "plclab/trace.hpp"

namespace plclab {

struct CorpusItem {
  std::string clip_id;
  Waveform clean;
  std::optional<Waveform> lossy;
  std::optional<PacketTrace> trace;
};

using Corpus = std::vector<CorpusItem>;

struct SystemUnderTest {
  std::string name;
  // Built-in concealer run through the causal engine, or a directory of
  // pre-enhanced WAVs named <clip_id>.wav.
  std::variant<ConcealMethod, std::filesystem::path> source;
  EngineConfig config;
  std::shared_ptr<ResidualPredictor> residual;

  bool builtin() const { return std::holds_alternative<ConcealMethod>(source); }

  static SystemUnderTest concealer(ConcealMethod m, EngineConfig cfg = {}) {
    return {to_string(m), m, cfg, nullptr};
  }
  static SystemUnderTest directory(std::string name, std::filesystem::path dir) {
    return {std::move(name), std::move(dir), {}, nullptr};
  }
};

struct ClipResult {
  std::string clip_id;
  std::string system;
  MetricReport report;
  std::map<std::string, double> extra;  // ingested external scores
};

enum class Metric { kMse, kSdr, kSiSdr, kLsd, kMcd };
inline constexpr Metric kAllMetrics[] = {Metric::kMse, Metric::kSdr,
                                         Metric::kSiSdr, Metric::kLsd,
                                         Metric::kMcd};

inline const char* metric_name(Metric m) {
  switch (m) {
    case Metric::kMse: return "mse";
    case Metric::kSdr: return "sdr_db";
    case Metric::kSiSdr: return "si_sdr_db";
    case Metric::kLsd: return "lsd";
    case Metric::kMcd: return "mcd";
  }
  return "?";
}

inline bool higher_is_better(Metric m) {
  return m == Metric::kSdr || m == Metric::kSiSdr;
}

inline double metric_value(const MetricReport& r, Metric m) {
  switch (m) {
    case Metric::kMse: return r.mse;
    case Metric::kSdr: return r.sdr_db;
    case Metric::kSiSdr: return r.si_sdr_db;
    case Metric::kLsd: return r.lsd;
    case Metric::kMcd: return r.mcd;
  }
  return 0.0;
}

struct MetricSummary {
  double mean = 0.0;        // over finite values
  std::size_t finite = 0;
  std::size_t infinite = 0;  // +/-inf occurrences, excluded from the mean
  double min = 0.0;
  double max = 0.0;
};

inline MetricSummary summarize(const std::vector<double>& values) {
  MetricSummary s;
  double acc = 0.0;
  bool first = true;
  double sentinel = 0.0;
  for (double v : values) {
    if (!std::isfinite(v)) {
      ++s.infinite;
      sentinel = v;
      continue;
    }
    acc += v;
    ++s.finite;
    s.min = first ? v : std::min(s.min, v);
    s.max = first ? v : std::max(s.max, v);
    first = false;
  }
  if (s.finite > 0) {
    s.mean = acc / static_cast<double>(s.finite);
  } else {
    // Nothing finite: carry the sentinel through rather than inventing 0.
    s.mean = s.min = s.max = sentinel;
  }
  return s;
}

struct CorpusReport {
  std::string system;
  std::vector<ClipResult> per_clip;  // corpus order
  std::map<Metric, MetricSummary> summary;
  std::map<std::string, MetricSummary> extra_summary;
  std::optional<double> rtf;  // built-ins only

  double mean(Metric m) const { return summary.at(m).mean; }
};

inline void recompute_summary(CorpusReport& rep) {
  rep.summary.clear();
  for (Metric m : kAllMetrics) {
    std::vector<double> v;
    for (const auto& c : rep.per_clip) v.push_back(metric_value(c.report, m));
    rep.summary[m] = summarize(v);
  }
  rep.extra_summary.clear();
  std::map<std::string, std::vector<double>> extra;
  for (const auto& c : rep.per_clip) {
    for (const auto& [k, v] : c.extra) extra[k].push_back(v);
  }
  for (const auto& [k, v] : extra) rep.extra_summary[k] = summarize(v);
}

namespace detail {

// Runs fn(i) for i in [0, n) on up to `jobs` threads; rethrows the first
// failure.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t jobs, Fn&& fn) {
  jobs = std::max<std::size_t>(1, std::min(jobs, n));
  if (jobs == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex mu;
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < jobs; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(mu);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace detail

// Loads a submission file and checks it against the lossy input (or the
// reference when no lossy input is known). Off-by-tail lengths are rejected.
inline Waveform load_submission(const std::filesystem::path& dir,
                                const CorpusItem& item) {
  const auto path = dir / (item.clip_id + ".wav");
  if (!std::filesystem::exists(path)) {
    throw Error("missing enhanced file for clip '" + item.clip_id +
                "': " + path.string());
  }
  Waveform est = read_wav(path);
  const Waveform& expected = item.lossy ? *item.lossy : item.clean;
  if (est.sample_rate != expected.sample_rate) {
    throw Error("sample-rate mismatch for clip '" + item.clip_id + "': " +
                std::to_string(est.sample_rate) + " vs " +
                std::to_string(expected.sample_rate));
  }
  if (est.size() != expected.size()) {
    throw Error("length mismatch for clip '" + item.clip_id + "': " +
                std::to_string(est.size()) + " vs " +
                std::to_string(expected.size()) + " samples");
  }
  return est;
}

inline Waveform run_builtin(const SystemUnderTest& sut, const CorpusItem& item) {
  if (!item.lossy || !item.trace) {
    throw Error("clip '" + item.clip_id +
                "' has no lossy audio/trace for a built-in concealer");
  }
  return conceal_clip(*item.lossy, *item.trace, sut.config,
                      std::get<ConcealMethod>(sut.source), sut.residual);
}

inline CorpusReport evaluate_system(const SystemUnderTest& sut,
                                    const Corpus& corpus, std::size_t jobs = 1) {
  if (corpus.empty()) throw Error("evaluate_system: empty corpus");
  CorpusReport rep;
  rep.system = sut.name;
  rep.per_clip.resize(corpus.size());
  std::vector<double> seconds(corpus.size(), 0.0);
  detail::parallel_for(corpus.size(), jobs, [&](std::size_t i) {
    const CorpusItem& item = corpus[i];
    Waveform est;
    if (sut.builtin()) {
      const auto t0 = std::chrono::steady_clock::now();
      est = run_builtin(sut, item);
      seconds[i] = std::chrono::duration<double>(
                       std::chrono::steady_clock::now() - t0)
                       .count();
    } else {
      est = load_submission(std::get<std::filesystem::path>(sut.source), item);
    }
    rep.per_clip[i] = {item.clip_id, sut.name, evaluate_clip(item.clean, est), {}};
  });
  if (sut.builtin()) {
    double audio = 0.0;
    double proc = 0.0;
    for (std::size_t i = 0; i < corpus.size(); ++i) {
      audio += corpus[i].clean.duration_seconds();
      proc += seconds[i];
    }
    if (audio > 0.0) rep.rtf = proc / audio;
  }
  recompute_summary(rep);
  return rep;
}

// Wall-clock processing time / clip duration; median of `runs`.
inline double measure_rtf(ConcealMethod method, const Waveform& lossy,
                          const PacketTrace& trace, const EngineConfig& config = {},
                          int runs = 3) {
  if (lossy.duration_seconds() <= 0.0) throw Error("measure_rtf: empty clip");
  std::vector<double> rtf;
  for (int r = 0; r < std::max(1, runs); ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    Waveform out = conceal_clip(lossy, trace, config, method);
    const double s = std::chrono::duration<double>(
                         std::chrono::steady_clock::now() - t0)
                         .count();
    rtf.push_back(s / lossy.duration_seconds());
  }
  std::sort(rtf.begin(), rtf.end());
  return rtf[rtf.size() / 2];
}

inline std::string format_rtf(double rtf) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", rtf);
  return buf;
}

// ---------------------------------------------------------------------------
// External scores (e.g. PEAQ ODG, PLCMOS) as extra CSV columns keyed by
// clip_id and system.

inline void ingest_external_scores(CorpusReport& rep, const csv::Table& t) {
  const auto c_clip = t.column("clip_id");
  const auto c_sys = t.column("system");
  for (const auto& row : t.rows) {
    if (row[c_sys] != rep.system) continue;
    auto it = std::find_if(rep.per_clip.begin(), rep.per_clip.end(),
                           [&](const ClipResult& c) { return c.clip_id == row[c_clip]; });
    if (it == rep.per_clip.end()) {
      throw Error("external score for unknown clip '" + row[c_clip] + "'");
    }
    for (std::size_t i = 0; i < t.header.size(); ++i) {
      if (i == c_clip || i == c_sys) continue;
      it->extra[t.header[i]] = csv::parse_double(row[i]);
    }
  }
  recompute_summary(rep);
}

// ---------------------------------------------------------------------------
// Comparison across systems

struct ComparisonRow {
  std::string system;
  std::map<Metric, MetricSummary> summary;
  std::map<Metric, bool> best;
  std::optional<double> rtf;
};

struct ComparisonTable {
  std::vector<ComparisonRow> rows;
};

inline ComparisonTable aggregate(const std::vector<CorpusReport>& reports) {
  ComparisonTable table;
  if (reports.empty()) return table;
  auto clip_set = [](const CorpusReport& r) {
    std::set<std::string> s;
    for (const auto& c : r.per_clip) s.insert(c.clip_id);
    return s;
  };
  const auto reference = clip_set(reports.front());
  for (const auto& r : reports) {
    if (clip_set(r) != reference) {
      throw Error("corpus mismatch: system '" + r.system +
                  "' was evaluated on a different clip set");
    }
    table.rows.push_back({r.system, r.summary, {}, r.rtf});
  }
  for (Metric m : kAllMetrics) {
    double best = 0.0;
    bool have = false;
    for (const auto& row : table.rows) {
      const double v = row.summary.at(m).mean;
      if (std::isnan(v)) continue;
      if (!have || (higher_is_better(m) ? v > best : v < best)) best = v;
      have = true;
    }
    for (auto& row : table.rows) row.best[m] = have && row.summary.at(m).mean == best;
  }
  return table;
}

// ---------------------------------------------------------------------------
// Output files

inline csv::Table per_clip_table(const std::vector<CorpusReport>& reports) {
  csv::Table t;
  t.header = {"clip_id", "system", "mse", "sdr_db", "si_sdr_db", "lsd", "mcd"};
  std::set<std::string> extras;
  for (const auto& r : reports) {
    for (const auto& c : r.per_clip) {
      for (const auto& [k, v] : c.extra) extras.insert(k);
    }
  }
  for (const auto& e : extras) t.header.push_back(e);
  for (const auto& r : reports) {
    for (const auto& c : r.per_clip) {
      csv::Row row = {c.clip_id, c.system};
      for (Metric m : kAllMetrics) {
        row.push_back(csv::format_double(metric_value(c.report, m)));
      }
      for (const auto& e : extras) {
        auto it = c.extra.find(e);
        row.push_back(it == c.extra.end() ? "" : csv::format_double(it->second));
      }
      t.rows.push_back(std::move(row));
    }
  }
  return t;
}

inline csv::Table summary_table(const ComparisonTable& table,
                                const std::vector<CorpusReport>& reports) {
  csv::Table t;
  t.header = {"system", "mse", "sdr_db", "si_sdr_db", "lsd", "mcd",
              "sdr_inf_count", "si_sdr_inf_count", "rtf"};
  std::set<std::string> extras;
  for (const auto& r : reports) {
    for (const auto& [k, v] : r.extra_summary) extras.insert(k);
  }
  for (const auto& e : extras) t.header.push_back(e);
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& row = table.rows[i];
    csv::Row out = {row.system};
    for (Metric m : kAllMetrics) {
      out.push_back(csv::format_double(row.summary.at(m).mean));
    }
    out.push_back(std::to_string(row.summary.at(Metric::kSdr).infinite));
    out.push_back(std::to_string(row.summary.at(Metric::kSiSdr).infinite));
    out.push_back(row.rtf ? format_rtf(*row.rtf) : "");
    for (const auto& e : extras) {
      auto it = reports[i].extra_summary.find(e);
      out.push_back(it == reports[i].extra_summary.end()
                        ? ""
                        : csv::format_double(it->second.mean));
    }
    t.rows.push_back(std::move(out));
  }
  return t;
}

inline std::string markdown_table(const ComparisonTable& table) {
  std::ostringstream os;
  os << "| System | MSE | SDR (dB) | SI-SDR (dB) | LSD | MCD | RTF |\n";
  os << "|---|---|---|---|---|---|---|\n";
  for (const auto& row : table.rows) {
    os << "| " << row.system;
    for (Metric m : kAllMetrics) {
      char buf[48];
      const double v = row.summary.at(m).mean;
      if (m == Metric::kMse) {
        std::snprintf(buf, sizeof buf, "%.3e", v);
      } else {
        std::snprintf(buf, sizeof buf, "%.3f", v);
      }
      os << " | " << (row.best.at(m) ? "**" : "") << buf
         << (row.best.at(m) ? "**" : "");
    }
    os << " | " << (row.rtf ? format_rtf(*row.rtf) : "-") << " |\n";
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Corpus loading

namespace detail {
inline std::vector<std::string> wav_stems(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw Error("directory not found: " + dir.string());
  }
  std::vector<std::string> ids;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".wav") {
      ids.push_back(e.path().stem().string());
    }
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}
}  // namespace detail

// References only (submission scoring): every <id>.wav under `ref_dir`.
// Lossy files are attached when `lossy_dir` is given.
inline Corpus load_reference_corpus(const std::filesystem::path& ref_dir,
                                    const std::filesystem::path& lossy_dir = {},
                                    const std::filesystem::path& trace_dir = {}) {
  Corpus corpus;
  for (const auto& id : detail::wav_stems(ref_dir)) {
    CorpusItem item;
    item.clip_id = id;
    item.clean = read_wav(ref_dir / (id + ".wav"));
    if (!lossy_dir.empty()) item.lossy = read_wav(lossy_dir / (id + ".wav"));
    if (!trace_dir.empty()) {
      item.trace = read_trace_file(trace_dir / (id + ".txt"));
    }
    corpus.push_back(std::move(item));
  }
  if (corpus.empty()) throw Error("no reference WAVs in " + ref_dir.string());
  return corpus;
}

// Layout written by `plc-lab degrade`: clean/, lossy/, traces/.
inline Corpus load_corpus_dir(const std::filesystem::path& root) {
  return load_reference_corpus(root / "clean", root / "lossy", root / "traces");
}

}  // namespace plclab
