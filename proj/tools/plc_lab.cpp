// plc-lab: degrade clips with packet traces, conceal losses, score outputs,
// and run/score MUSHRA sessions.

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "plclab/mushra_service.hpp"
#include "plclab/plclab.hpp"

namespace fs = std::filesystem;
using namespace plclab;

namespace {

struct EngineFlags {
  std::size_t order = 256;
  std::size_t context_packets = 8;
  std::size_t crossfade = 256;
  double noise_comp = 1e-3;
  std::string estimator = "autocorr";

  void add(CLI::App* app) {
    app->add_option("--order", order, "AR model order")->capture_default_str();
    app->add_option("--context-packets", context_packets,
                    "AR fitting context in packets")->capture_default_str();
    app->add_option("--crossfade", crossfade,
                    "crossfade / extra prediction length in samples")->capture_default_str();
    app->add_option("--noise-comp", noise_comp,
                    "white-noise compensation (relative r[0] loading)")->capture_default_str();
    app->add_option("--estimator", estimator, "AR estimator: autocorr or burg")
        ->capture_default_str();
  }

  EngineConfig config() const {
    EngineConfig c;
    c.ar_order = order;
    c.context_packets = context_packets;
    c.crossfade_len = crossfade;
    c.extra_pred = crossfade;
    c.noise_comp = noise_comp;
    c.estimator = parse_estimator(estimator);
    c.validate();
    return c;
  }
};

std::vector<std::string> split_list(const std::vector<std::string>& in) {
  std::vector<std::string> out;
  for (const auto& item : in) {
    std::stringstream ss(item);
    std::string part;
    while (std::getline(ss, part, ',')) {
      if (!part.empty()) out.push_back(part);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// degrade

struct DegradeArgs {
  std::string in;
  std::string traces;
  std::string out;
  double p_subset1 = 0.9;
  bool segment = false;
};

int run_degrade(const DegradeArgs& a, std::uint64_t seed) {
  std::vector<std::string> rejected_traces;
  const TracePools pools = load_trace_pools(a.traces, &rejected_traces);
  for (const auto& id : rejected_traces) {
    std::cerr << "warning: trace " << id << " has a burst > 50 packets; skipped\n";
  }
  std::vector<fs::path> inputs;
  if (fs::is_directory(a.in)) {
    for (const auto& e : fs::directory_iterator(a.in)) {
      if (e.is_regular_file() && e.path().extension() == ".wav") {
        inputs.push_back(e.path());
      }
    }
    std::sort(inputs.begin(), inputs.end());
  } else {
    inputs.push_back(a.in);
  }
  const fs::path out(a.out);
  const SubsetWeights weights{a.p_subset1, 1.0 - a.p_subset1};
  std::vector<ManifestRecord> manifest;
  std::size_t index = 0;
  std::size_t discarded = 0;
  for (const auto& path : inputs) {
    const Waveform rec = read_wav(path);
    if (rec.sample_rate != kChallengeRate) {
      throw Error(path.string() + ": expected 44100 Hz, got " +
                  std::to_string(rec.sample_rate));
    }
    std::vector<Waveform> clips;
    if (a.segment) {
      clips = segment_recording(rec);
    } else {
      clips.push_back(rec);
    }
    for (std::size_t c = 0; c < clips.size(); ++c) {
      std::string id = path.stem().string();
      if (a.segment) {
        std::ostringstream os;
        os << id << '_' << std::setw(3) << std::setfill('0') << c;
        id = os.str();
      }
      const std::uint64_t clip_seed = derive_seed(seed, index++);
      LossyClip item;
      try {
        item = build_blind_item(clips[c], pools, clip_seed, id, weights);
      } catch (const SilenceGateError& e) {
        std::cerr << "discarded " << id << ": " << e.what() << '\n';
        ++discarded;
        continue;
      }
      write_wav(clips[c], out / "clean" / (id + ".wav"));
      write_wav(item.audio, out / "lossy" / (id + ".wav"));
      write_trace_file(item.trace, out / "traces" / (id + ".txt"));
      manifest.push_back(manifest_record(item, id, path.filename().string()));
    }
  }
  write_manifest(manifest, out / "manifest.csv");
  std::cout << manifest.size() << " clips written, " << discarded
            << " discarded by the silence gate\n";
  return 0;
}

// ---------------------------------------------------------------------------
// conceal

struct ConcealArgs {
  std::string in;
  std::string trace;
  std::string out;
  std::string method = "ar";
  EngineFlags engine;
};

void conceal_file(const fs::path& in, const fs::path& trace, const fs::path& out,
                  ConcealMethod method, const EngineConfig& cfg) {
  const Waveform lossy = read_wav(in);
  const PacketTrace t = read_trace_file(trace);
  write_wav(conceal_clip(lossy, t, cfg, method), out);
}

int run_conceal(const ConcealArgs& a) {
  const ConcealMethod method = parse_method(a.method);
  const EngineConfig cfg = a.engine.config();
  if (fs::is_directory(a.in)) {
    if (!fs::is_directory(a.trace)) {
      throw Error("--in is a directory, so --trace must be one too");
    }
    std::size_t n = 0;
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(a.in)) {
      if (e.is_regular_file() && e.path().extension() == ".wav") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      const auto stem = f.stem().string();
      conceal_file(f, fs::path(a.trace) / (stem + ".txt"),
                   fs::path(a.out) / (stem + ".wav"), method, cfg);
      ++n;
    }
    std::cout << n << " clips concealed with " << to_string(method) << '\n';
    return 0;
  }
  conceal_file(a.in, a.trace, a.out, method, cfg);
  return 0;
}

// ---------------------------------------------------------------------------
// eval

struct EvalArgs {
  std::string corpus;
  std::string ref;
  std::string lossy;
  std::string traces;
  std::vector<std::string> est;
  std::vector<std::string> methods;
  std::string out = "per_clip.csv";
  std::string summary;
  std::string markdown;
  std::string extra;
  std::string export_dir;
  std::size_t jobs = 1;
  EngineFlags engine;
};

void export_for_external_tools(const Corpus& corpus,
                               const std::vector<SystemUnderTest>& systems,
                               const fs::path& dir) {
  for (int rate : {48000, 16000}) {
    const fs::path base = dir / std::to_string(rate);
    for (const auto& item : corpus) {
      Waveform ref = resample(item.clean, rate);
      clip_to_unit(ref);
      write_wav(ref, base / "reference" / (item.clip_id + ".wav"));
      for (const auto& sut : systems) {
        Waveform est = sut.builtin() ? run_builtin(sut, item)
                                     : load_submission(std::get<fs::path>(sut.source), item);
        est = resample(est, rate);
        clip_to_unit(est);
        write_wav(est, base / sut.name / (item.clip_id + ".wav"));
      }
    }
  }
}

int run_eval(const EvalArgs& a) {
  Corpus corpus;
  if (!a.corpus.empty()) {
    corpus = load_corpus_dir(a.corpus);
  } else if (!a.ref.empty()) {
    corpus = load_reference_corpus(a.ref, a.lossy, a.traces);
  } else {
    throw Error("eval needs --corpus or --ref");
  }
  std::vector<SystemUnderTest> systems;
  for (const auto& m : split_list(a.methods)) {
    systems.push_back(SystemUnderTest::concealer(parse_method(m), a.engine.config()));
  }
  for (const auto& e : a.est) {
    // name=dir or dir (name taken from the directory)
    const auto eq = e.find('=');
    if (eq != std::string::npos) {
      systems.push_back(SystemUnderTest::directory(e.substr(0, eq), e.substr(eq + 1)));
    } else {
      fs::path p(e);
      std::string name = p.filename().string();
      if (name.empty()) name = p.parent_path().filename().string();
      systems.push_back(SystemUnderTest::directory(name, p));
    }
  }
  if (systems.empty()) throw Error("eval needs --est and/or --method");

  std::vector<CorpusReport> reports;
  for (const auto& sut : systems) {
    reports.push_back(evaluate_system(sut, corpus, a.jobs));
  }
  if (!a.extra.empty()) {
    const csv::Table extra = csv::read_table(a.extra);
    for (auto& r : reports) ingest_external_scores(r, extra);
  }
  const ComparisonTable table = aggregate(reports);
  csv::write_table(per_clip_table(reports), a.out);
  const fs::path summary =
      a.summary.empty() ? fs::path(a.out).parent_path() / "summary.csv" : fs::path(a.summary);
  csv::write_table(summary_table(table, reports), summary);
  const std::string md = markdown_table(table);
  if (!a.markdown.empty()) {
    std::ofstream out(a.markdown);
    if (!out) throw Error("cannot write " + a.markdown);
    out << md;
  }
  std::cout << md;
  for (const auto& r : reports) {
    const auto& s = r.summary.at(Metric::kSdr);
    const auto& si = r.summary.at(Metric::kSiSdr);
    if (s.infinite || si.infinite) {
      std::cout << r.system << ": " << s.infinite << " infinite SDR, "
                << si.infinite << " infinite SI-SDR values excluded from means\n";
    }
  }
  if (!a.export_dir.empty()) export_for_external_tools(corpus, systems, a.export_dir);
  return 0;
}

// ---------------------------------------------------------------------------
// rank / mushra-report

void print_ranking(const mushra::RankingResult& r) {
  std::cout << "rank  system                    wins   mean    ci95\n";
  for (std::size_t i = 0; i < r.systems.size(); ++i) {
    const auto& s = r.systems[i];
    std::cout << std::setw(4) << i + 1 << "  " << std::left << std::setw(24) << s
              << std::right << std::setw(6) << r.wins.at(s) << std::fixed
              << std::setprecision(2) << std::setw(8) << r.overall_means.at(s)
              << std::setw(8) << r.ci95.at(s) << '\n';
    std::cout.unsetf(std::ios::floatfield);
  }
  for (const auto& w : r.warnings) std::cerr << "warning: " << w << '\n';
  if (!r.excluded_assessors.empty()) {
    std::cerr << "post-screening excluded " << r.excluded_assessors.size()
              << " assessor(s)\n";
  }
}

struct RankArgs {
  std::string ratings;
  std::string out;
  std::string per_trial;
  bool post_screening = false;
};

int run_rank(const RankArgs& a) {
  const auto ratings = mushra::ratings_from_table(csv::read_table(a.ratings));
  mushra::RankingOptions opt;
  opt.post_screening = a.post_screening;
  const auto result = mushra::compute_ranking(ratings, opt);
  print_ranking(result);
  if (!a.out.empty()) csv::write_table(mushra::ranking_table(result), a.out);
  if (!a.per_trial.empty()) csv::write_table(mushra::per_trial_table(result), a.per_trial);
  return 0;
}

// ---------------------------------------------------------------------------
// traces

struct TracesArgs {
  std::string dir;
  std::size_t sample = 0;
  std::size_t packets = kClipSamples / kPacketSize;
  double p_subset1 = 0.9;
  std::string plans_out;
};

int run_traces(const TracesArgs& a, std::uint64_t seed) {
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(a.dir)) {
    if (e.is_regular_file() && e.path().extension() == ".txt") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  csv::write_row(std::cout, {"trace_id", "packets", "loss_rate", "bursts",
                             "max_burst", "subset"});
  for (const auto& f : files) {
    const PacketTrace t = read_trace_file(f);
    const BurstStats s = burst_stats(t);
    char rate[32];
    std::snprintf(rate, sizeof rate, "%.4f", s.loss_rate);
    std::string subset = "rejected";
    if (s.max_burst <= kSubset3MaxBurst) subset = to_string(classify_subset(s));
    csv::write_row(std::cout, {t.source_id, std::to_string(t.size()), rate,
                               std::to_string(s.burst_lengths.size()),
                               std::to_string(s.max_burst), subset});
  }
  if (a.sample > 0) {
    const TracePools pools = load_trace_pools(a.dir);
    const SubsetWeights weights{a.p_subset1, 1.0 - a.p_subset1};
    std::ostringstream lines;
    for (std::size_t i = 0; i < a.sample; ++i) {
      lines << format_plan(sample_trace_plan(a.packets, pools,
                                             derive_seed(seed, i), weights))
            << '\n';
    }
    if (a.plans_out.empty()) {
      std::cout << lines.str();
    } else {
      std::ofstream out(a.plans_out);
      if (!out) throw Error("cannot write " + a.plans_out);
      out << lines.str();
    }
  }
  return 0;
}

// ---------------------------------------------------------------------------
// mushra-build / mushra-serve / mushra-report

struct MushraBuildArgs {
  std::string stimuli;
  std::vector<std::string> clips;
  std::vector<std::string> systems;
  std::vector<std::string> training;
  std::string out = "study.json";
  std::string assessor;
};

int run_mushra_build(const MushraBuildArgs& a, std::uint64_t seed) {
  mushra::StudyConfig study;
  study.trial_clips = split_list(a.clips);
  study.systems = split_list(a.systems);
  study.training_clips = split_list(a.training);
  study.stimuli_root = fs::absolute(a.stimuli);
  study.base_seed = seed;
  study.validate();
  {
    std::ofstream out(a.out);
    if (!out) throw Error("cannot write " + a.out);
    out << mushra::study_to_json(study).dump(2) << '\n';
  }
  if (!a.assessor.empty()) {
    const auto s = mushra::build_session(
        study, a.assessor, mushra::assessor_seed(seed, a.assessor));
    std::cout << mushra::session_to_json(s).dump(2) << '\n';
  }
  std::cerr << "study written to " << a.out << '\n';
  return 0;
}

struct MushraServeArgs {
  std::string study = "study.json";
  std::string data = "mushra-data";
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string ui;
};

int run_mushra_serve(const MushraServeArgs& a) {
  const char* key = std::getenv(mushra::kResultsKeyEnv);
  mushra::MushraService service(mushra::read_study(a.study), a.data,
                                key ? key : "");
  httplib::Server server;
  service.mount(server);
  if (!a.ui.empty() && !server.set_mount_point("/", a.ui)) {
    throw Error("UI directory not found: " + a.ui);
  }
  if (!key) {
    std::cerr << "note: " << mushra::kResultsKeyEnv
              << " is unset; /api/results is disabled\n";
  }
  std::cerr << "serving on http://" << a.host << ':' << a.port << '\n';
  if (!server.listen(a.host, a.port)) {
    throw Error("cannot listen on " + a.host + ":" + std::to_string(a.port));
  }
  return 0;
}

struct MushraReportArgs {
  std::string study = "study.json";
  std::string data = "mushra-data";
  std::string out = "mushra-report";
  bool post_screening = false;
};

int run_mushra_report(const MushraReportArgs& a) {
  const auto study = mushra::read_study(a.study);
  const auto sessions = mushra::load_sessions(study, a.data);
  mushra::RatingStore store(fs::path(a.data) / "ratings.jsonl");
  const auto resolved = mushra::resolve(store.ratings(), sessions);
  mushra::RankingOptions opt;
  opt.post_screening = a.post_screening;
  const auto result = mushra::compute_ranking(resolved, opt);
  const fs::path out(a.out);
  csv::write_table(mushra::ratings_table(resolved), out / "ratings.csv");
  csv::write_table(mushra::ranking_table(result), out / "ranking.csv");
  csv::write_table(mushra::per_trial_table(result), out / "per_trial.csv");
  print_ranking(result);
  return 0;
}

// One line with every option of the selected subcommand.
std::string effective_config(const CLI::App& app, const CLI::App* sub) {
  std::ostringstream os;
  os << "plc-lab " << sub->get_name();
  auto dump = [&](const CLI::App* a) {
    for (const CLI::Option* opt : a->get_options()) {
      const std::string name = opt->get_name(false, true);
      if (name.empty() || name == "--help" || name == "-h" || name == "--version" ||
          name == "--config") {
        continue;
      }
      std::string value;
      if (opt->count() > 0) {
        for (const auto& r : opt->results()) value += (value.empty() ? "" : ",") + r;
      } else {
        value = opt->get_default_str();
      }
      os << ' ' << opt->get_name() << '=' << value;
    }
  };
  dump(&app);
  dump(sub);
  return os.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Music packet loss concealment toolkit"};
  app.set_version_flag("--version", std::string("plc-lab ") + kVersion +
                                        " (trace-plan v" + std::to_string(kTracePlanFormat) +
                                        ", manifest v" + std::to_string(kManifestFormat) +
                                        ", ratings v" + std::to_string(kRatingsFormat) + ")");
  app.set_config("--config", "", "key = value config file (flags take precedence)");
  app.require_subcommand(1);

  std::uint64_t seed = 0;
  auto add_seed = [&](CLI::App* sub) {
    sub->add_option("--seed", seed, "random seed")->capture_default_str();
  };

  DegradeArgs degrade;
  auto* c_degrade = app.add_subcommand("degrade", "zero-fill clean clips with sampled packet traces");
  c_degrade->add_option("--in", degrade.in, "clean WAV file or directory")->required();
  c_degrade->add_option("--traces", degrade.traces, "directory of trace .txt files")->required();
  c_degrade->add_option("--out", degrade.out, "output directory")->required();
  c_degrade->add_option("--p-subset1", degrade.p_subset1, "probability of drawing from Subset1")
      ->capture_default_str()->check(CLI::Range(0.0, 1.0));
  c_degrade->add_flag("--segment", degrade.segment, "split recordings into 11.6 s clips");
  add_seed(c_degrade);

  ConcealArgs conceal;
  auto* c_conceal = app.add_subcommand("conceal", "conceal lost packets in a lossy WAV");
  c_conceal->add_option("--in", conceal.in, "lossy WAV (or directory)")->required();
  c_conceal->add_option("--trace", conceal.trace, "trace file (or directory)")->required();
  c_conceal->add_option("--out", conceal.out, "output WAV (or directory)")->required();
  c_conceal->add_option("--method", conceal.method, "zero, repeat or ar")->capture_default_str();
  conceal.engine.add(c_conceal);
  add_seed(c_conceal);

  EvalArgs eval;
  auto* c_eval = app.add_subcommand("eval", "score systems with MSE, SDR, SI-SDR, LSD, MCD");
  c_eval->add_option("--corpus", eval.corpus, "corpus directory written by degrade");
  c_eval->add_option("--ref", eval.ref, "directory of reference WAVs");
  c_eval->add_option("--lossy", eval.lossy, "directory of lossy WAVs (length check, built-ins)");
  c_eval->add_option("--traces", eval.traces, "directory of per-clip traces (built-ins)");
  c_eval->add_option("--est", eval.est, "submission directory, optionally name=dir");
  c_eval->add_option("--method", eval.methods, "built-in concealers, e.g. zero,repeat,ar");
  c_eval->add_option("--out", eval.out, "per-clip CSV")->capture_default_str();
  c_eval->add_option("--summary", eval.summary, "summary CSV (default: next to --out)");
  c_eval->add_option("--markdown", eval.markdown, "write the comparison table as Markdown");
  c_eval->add_option("--extra", eval.extra, "CSV of external scores (clip_id, system, ...)");
  c_eval->add_option("--export-dir", eval.export_dir, "write 48 kHz / 16 kHz copies for external tools");
  c_eval->add_option("--jobs", eval.jobs, "clip-parallel workers")->capture_default_str()
      ->check(CLI::PositiveNumber);
  eval.engine.add(c_eval);
  add_seed(c_eval);

  RankArgs rank;
  auto* c_rank = app.add_subcommand("rank", "challenge ranking from a ratings CSV");
  c_rank->add_option("--ratings", rank.ratings, "ratings.csv (assessor_id, trial_id, condition, score)")
      ->required();
  c_rank->add_option("--out", rank.out, "ranking CSV");
  c_rank->add_option("--per-trial", rank.per_trial, "per-trial means/CI CSV");
  c_rank->add_flag("--post-screening", rank.post_screening,
                   "exclude assessors who rate the hidden reference < 90 in > 15% of trials");
  add_seed(c_rank);

  TracesArgs traces;
  auto* c_traces = app.add_subcommand("traces", "trace statistics, subsets and sampled plans");
  c_traces->add_option("--dir", traces.dir, "directory of trace .txt files")->required();
  c_traces->add_option("--sample", traces.sample, "number of trace plans to sample");
  c_traces->add_option("--packets", traces.packets, "clip length in packets")->capture_default_str();
  c_traces->add_option("--p-subset1", traces.p_subset1, "probability of drawing from Subset1")
      ->capture_default_str()->check(CLI::Range(0.0, 1.0));
  c_traces->add_option("--plans-out", traces.plans_out, "write sampled plans to a file");
  add_seed(c_traces);

  MushraBuildArgs mbuild;
  auto* c_mbuild = app.add_subcommand("mushra-build", "create a MUSHRA study file");
  c_mbuild->add_option("--stimuli", mbuild.stimuli,
                       "root with reference/, anchor/ and one directory per system")->required();
  c_mbuild->add_option("--clips", mbuild.clips, "ten trial clip ids")->required();
  c_mbuild->add_option("--systems", mbuild.systems, "four system names")->required();
  c_mbuild->add_option("--training", mbuild.training, "two training clip ids");
  c_mbuild->add_option("--out", mbuild.out, "study JSON")->capture_default_str();
  c_mbuild->add_option("--assessor", mbuild.assessor, "print this assessor's session");
  add_seed(c_mbuild);

  MushraServeArgs mserve;
  auto* c_mserve = app.add_subcommand("mushra-serve", "serve a MUSHRA study over HTTP");
  c_mserve->add_option("--study", mserve.study, "study JSON")->capture_default_str();
  c_mserve->add_option("--data", mserve.data, "ratings/registry directory")->capture_default_str();
  c_mserve->add_option("--host", mserve.host)->capture_default_str();
  c_mserve->add_option("--port", mserve.port)->capture_default_str();
  c_mserve->add_option("--ui", mserve.ui, "static UI directory served at /");
  add_seed(c_mserve);

  MushraReportArgs mreport;
  auto* c_mreport = app.add_subcommand("mushra-report", "export ratings and ranking tables");
  c_mreport->add_option("--study", mreport.study, "study JSON")->capture_default_str();
  c_mreport->add_option("--data", mreport.data, "ratings/registry directory")->capture_default_str();
  c_mreport->add_option("--out", mreport.out, "output directory")->capture_default_str();
  c_mreport->add_flag("--post-screening", mreport.post_screening,
                      "exclude assessors who rate the hidden reference < 90 in > 15% of trials");
  add_seed(c_mreport);

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  const CLI::App* sub = app.get_subcommands().front();
  std::cerr << effective_config(app, sub) << '\n';
  try {
    if (sub == c_degrade) return run_degrade(degrade, seed);
    if (sub == c_conceal) return run_conceal(conceal);
    if (sub == c_eval) return run_eval(eval);
    if (sub == c_rank) return run_rank(rank);
    if (sub == c_traces) return run_traces(traces, seed);
    if (sub == c_mbuild) return run_mushra_build(mbuild, seed);
    if (sub == c_mserve) return run_mushra_serve(mserve);
    if (sub == c_mreport) return run_mushra_report(mreport);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
