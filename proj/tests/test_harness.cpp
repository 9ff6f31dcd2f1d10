#include <catch_amalgamated.hpp>

#include "plclab/degrade.hpp"
#include "plclab/harness.hpp"
#include "support.hpp"

using namespace plclab;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::WithinAbs;

namespace {

Corpus small_corpus(std::size_t clips, std::size_t packets = 40) {
  Corpus c;
  for (std::size_t i = 0; i < clips; ++i) {
    CorpusItem item;
    item.clip_id = "clip" + std::to_string(i);
    item.clean = plctest::tonal_clip(50 + i, packets * 512 + 31);
    PacketTrace t = plctest::subset1_trace(60 + i, packets, 0.15);
    item.lossy = apply_zero_fill(item.clean, t).audio;
    item.trace = t;
    c.push_back(std::move(item));
  }
  return c;
}

void write_dir(const Corpus& c, const std::filesystem::path& root) {
  for (const auto& item : c) {
    write_wav(item.clean, root / "clean" / (item.clip_id + ".wav"));
    write_wav(*item.lossy, root / "lossy" / (item.clip_id + ".wav"));
    write_trace_file(*item.trace, root / "traces" / (item.clip_id + ".txt"));
  }
}

}  // namespace

TEST_CASE("zero fill system reproduces the lost-energy identity") {
  const Corpus c = small_corpus(1);
  const CorpusReport r = evaluate_system(SystemUnderTest::concealer(ConcealMethod::kZero), c);
  REQUIRE(r.per_clip.size() == 1);
  double lost = 0;
  const auto& item = c.front();
  for (std::size_t n = 0; n < item.clean.size(); ++n) {
    const std::size_t p = n / 512;
    if (p < item.trace->size() && item.trace->lost[p]) lost += item.clean.samples[n] * item.clean.samples[n];
  }
  CHECK_THAT(r.per_clip[0].report.mse, WithinAbs(lost / item.clean.size(), 1e-12));
  REQUIRE(r.rtf.has_value());
}

TEST_CASE("passthrough of clean files scores perfectly") {
  plctest::TempDir dir("harness");
  const Corpus c = small_corpus(3);
  write_dir(c, dir.path());
  const Corpus loaded = load_corpus_dir(dir.path());
  REQUIRE(loaded.size() == 3);
  const CorpusReport r =
      evaluate_system(SystemUnderTest::directory("oracle", dir / "clean"), loaded);
  for (const auto& clip : r.per_clip) {
    CHECK(clip.report.mse == 0.0);
    CHECK(clip.report.lsd == 0.0);
    CHECK(clip.report.mcd == 0.0);
    CHECK(clip.report.sdr_db == kInfDb);
  }
  CHECK(r.summary.at(Metric::kSdr).infinite == 3);
  CHECK(r.summary.at(Metric::kSdr).finite == 0);
  CHECK(r.summary.at(Metric::kSdr).mean == kInfDb);
  CHECK_FALSE(r.rtf.has_value());
}

TEST_CASE("submission validation") {
  plctest::TempDir dir("harness");
  const Corpus c = small_corpus(2);
  write_dir(c, dir.path());
  const Corpus loaded = load_corpus_dir(dir.path());
  std::filesystem::create_directories(dir / "sub");
  write_wav(c[0].clean, dir / "sub" / "clip0.wav");
  CHECK_THROWS_WITH(evaluate_system(SystemUnderTest::directory("s", dir / "sub"), loaded),
                    ContainsSubstring("missing enhanced file"));
  Waveform shorter = c[1].clean;
  shorter.samples.pop_back();
  write_wav(shorter, dir / "sub" / "clip1.wav");
  CHECK_THROWS_WITH(evaluate_system(SystemUnderTest::directory("s", dir / "sub"), loaded),
                    ContainsSubstring("length mismatch"));
  Waveform other_rate = c[1].clean;
  other_rate.sample_rate = 48000;
  write_wav(other_rate, dir / "sub" / "clip1.wav");
  CHECK_THROWS_WITH(evaluate_system(SystemUnderTest::directory("s", dir / "sub"), loaded),
                    ContainsSubstring("sample-rate mismatch"));
}

TEST_CASE("per-clip rows and determinism") {
  const Corpus c = small_corpus(4);
  std::vector<CorpusReport> reports;
  for (ConcealMethod m : {ConcealMethod::kZero, ConcealMethod::kRepeat, ConcealMethod::kAr}) {
    reports.push_back(evaluate_system(SystemUnderTest::concealer(m), c, 2));
  }
  const csv::Table t = per_clip_table(reports);
  CHECK(t.rows.size() == 12);
  CHECK(t.header == csv::Row{"clip_id", "system", "mse", "sdr_db", "si_sdr_db", "lsd", "mcd"});
  // Same inputs, same CSV.
  std::vector<CorpusReport> again;
  for (ConcealMethod m : {ConcealMethod::kZero, ConcealMethod::kRepeat, ConcealMethod::kAr}) {
    again.push_back(evaluate_system(SystemUnderTest::concealer(m), c, 1));
  }
  CHECK(per_clip_table(again).rows == t.rows);
}

TEST_CASE("row count scales with clips and systems") {
  // 162 clips x 4 systems, metrics not needed for the shape check.
  std::vector<CorpusReport> reports(4);
  for (std::size_t s = 0; s < 4; ++s) {
    reports[s].system = "sys" + std::to_string(s);
    for (std::size_t i = 0; i < 162; ++i) {
      reports[s].per_clip.push_back({"c" + std::to_string(i), reports[s].system, {}, {}});
    }
    recompute_summary(reports[s]);
  }
  CHECK(per_clip_table(reports).rows.size() == 648);
}

TEST_CASE("aggregate") {
  auto report = [](const std::string& name, std::vector<double> mses) {
    CorpusReport r;
    r.system = name;
    for (std::size_t i = 0; i < mses.size(); ++i) {
      MetricReport m;
      m.mse = mses[i];
      m.sdr_db = -10 * std::log10(mses[i]);
      m.si_sdr_db = m.sdr_db;
      m.lsd = mses[i];
      m.mcd = mses[i];
      r.per_clip.push_back({"c" + std::to_string(i), name, m, {}});
    }
    recompute_summary(r);
    return r;
  };
  const CorpusReport a = report("A", {0.01, 0.02, 0.03});
  const CorpusReport b = report("B", {0.02, 0.03, 0.04});

  const ComparisonTable single = aggregate({a});
  CHECK(single.rows[0].summary.at(Metric::kMse).mean == a.mean(Metric::kMse));

  const ComparisonTable t = aggregate({a, b});
  CHECK(t.rows[0].summary.at(Metric::kMse).mean < t.rows[1].summary.at(Metric::kMse).mean);
  CHECK(t.rows[0].best.at(Metric::kMse));
  CHECK(t.rows[0].best.at(Metric::kSdr));
  CHECK_FALSE(t.rows[1].best.at(Metric::kMse));
  CHECK_THAT(markdown_table(t), ContainsSubstring("| A | **"));

  const CorpusReport short_b = report("B", {0.02, 0.03});
  CHECK_THROWS_WITH(aggregate({a, short_b}), ContainsSubstring("corpus mismatch"));
}

TEST_CASE("summaries exclude infinities") {
  const auto s = summarize({1.0, kInfDb, 3.0});
  CHECK(s.mean == 2.0);
  CHECK(s.finite == 2);
  CHECK(s.infinite == 1);
  CHECK(summarize({-kInfDb}).mean == -kInfDb);
}

TEST_CASE("external scores become extra columns") {
  const Corpus c = small_corpus(2);
  CorpusReport r = evaluate_system(SystemUnderTest::concealer(ConcealMethod::kZero), c);
  csv::Table ext;
  ext.header = {"clip_id", "system", "plcmos"};
  ext.rows = {{"clip0", "zero", "3.5"}, {"clip1", "zero", "2.5"}, {"clip0", "other", "1"}};
  ingest_external_scores(r, ext);
  CHECK(r.extra_summary.at("plcmos").mean == 3.0);
  const csv::Table t = per_clip_table({r});
  CHECK(t.header.back() == "plcmos");
  const auto table = aggregate({r});
  CHECK(summary_table(table, {r}).header.back() == "plcmos");
  ext.rows = {{"nope", "zero", "1"}};
  CHECK_THROWS_AS(ingest_external_scores(r, ext), Error);
}

TEST_CASE("rtf measurement") {
  const Waveform clean = plctest::tonal_clip(1, 512 * 100);
  const PacketTrace t = plctest::subset1_trace(2, 100);
  const Waveform lossy = apply_zero_fill(clean, t).audio;
  const double zero = measure_rtf(ConcealMethod::kZero, lossy, t);
  CHECK(zero < 0.1);
  CHECK(format_rtf(0.12345) == "0.123");
  CHECK(format_rtf(zero).size() == 5);
}
