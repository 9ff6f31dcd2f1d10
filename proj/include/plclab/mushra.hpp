#pragma once

// MUSHRA listening sessions and challenge ranking.
//
// A session has ten trials. Each trial presents six anonymous conditions
// (hidden reference, zero-fill anchor, four systems) against a labelled
// reference; scores are integers 0-100. A trial is won by the system with
// the highest mean score; systems are ranked by trials won, then by their
// overall mean score.

#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "plclab/csv.hpp"
#include "plclab/error.hpp"
#include "plclab/random.hpp"

namespace plclab::mushra {

inline constexpr std::size_t kTrials = 10;
inline constexpr std::size_t kSystems = 4;
inline constexpr std::size_t kConditionsPerTrial = kSystems + 2;
inline constexpr std::size_t kTrainingPairs = 2;
inline constexpr int kMinScore = 0;
inline constexpr int kMaxScore = 100;

inline const std::string kReference = "reference";
inline const std::string kAnchor = "anchor";

inline bool is_control(const std::string& condition) {
  return condition == kReference || condition == kAnchor;
}

// ---------------------------------------------------------------------------
// Study and session

// Stimuli live at <stimuli_root>/<condition>/<clip_id>.wav where condition is
// "reference", "anchor" or a system name.
struct StudyConfig {
  std::vector<std::string> trial_clips;
  std::vector<std::string> systems;
  std::vector<std::string> training_clips;  // defaults to the first two trials
  std::filesystem::path stimuli_root;
  std::uint64_t base_seed = 0;

  std::filesystem::path stimulus(const std::string& condition,
                                 const std::string& clip) const {
    return stimuli_root / condition / (clip + ".wav");
  }

  std::vector<std::string> training() const {
    if (!training_clips.empty()) return training_clips;
    return {trial_clips.begin(),
            trial_clips.begin() +
                static_cast<std::ptrdiff_t>(std::min(kTrainingPairs, trial_clips.size()))};
  }

  void validate(bool check_files = true) const {
    if (trial_clips.size() != kTrials) {
      throw Error("expected exactly 10 trial clips, got " +
                  std::to_string(trial_clips.size()));
    }
    if (std::set<std::string>(trial_clips.begin(), trial_clips.end()).size() !=
        trial_clips.size()) {
      throw Error("duplicate trial clip");
    }
    if (systems.size() != kSystems) {
      throw Error("expected exactly 4 systems, got " +
                  std::to_string(systems.size()));
    }
    if (std::set<std::string>(systems.begin(), systems.end()).size() !=
        systems.size()) {
      throw Error("duplicate system name");
    }
    for (const auto& s : systems) {
      if (is_control(s) || s.empty()) {
        throw Error("invalid system name '" + s + "'");
      }
    }
    if (training().size() != kTrainingPairs) {
      throw Error("expected 2 training clips");
    }
    if (!check_files) return;
    auto require = [&](const std::string& cond, const std::string& clip) {
      const auto p = stimulus(cond, clip);
      if (!std::filesystem::exists(p)) {
        throw Error("missing stimulus file: " + p.string());
      }
    };
    for (const auto& clip : trial_clips) {
      require(kReference, clip);
      require(kAnchor, clip);
      for (const auto& s : systems) require(s, clip);
    }
    for (const auto& clip : training()) {
      require(kReference, clip);
      require(kAnchor, clip);
    }
  }
};

struct Condition {
  std::string token;  // opaque, 128 random bits
  std::string name;   // system name, "reference" or "anchor"; never sent out
  std::filesystem::path file;
};

struct Trial {
  std::string trial_id;  // the clip id
  std::string reference_token;
  std::filesystem::path reference_file;
  std::vector<Condition> conditions;  // presentation order
};

struct TrainingItem {
  std::string clip_id;
  std::string clean_token;
  std::string anchor_token;
  std::filesystem::path clean_file;
  std::filesystem::path anchor_file;
};

struct MushraSession {
  std::string assessor_id;
  std::uint64_t assessor_seed = 0;
  std::vector<TrainingItem> training;
  std::vector<Trial> trials;  // presentation order

  const Trial* find_trial(const std::string& trial_id) const {
    for (const auto& t : trials) {
      if (t.trial_id == trial_id) return &t;
    }
    return nullptr;
  }
  const Condition* find_condition(const std::string& trial_id,
                                  const std::string& token) const {
    const Trial* t = find_trial(trial_id);
    if (!t) return nullptr;
    for (const auto& c : t->conditions) {
      if (c.token == token) return &c;
    }
    return nullptr;
  }
};

inline std::uint64_t assessor_seed(std::uint64_t base_seed,
                                   const std::string& assessor_id) {
  return derive_seed(base_seed, hash_label(assessor_id));
}

// Trial order, within-trial condition order and tokens are all drawn from
// one generator seeded by `seed`.
inline MushraSession build_session(const StudyConfig& study,
                                   const std::string& assessor_id,
                                   std::uint64_t seed, bool check_files = true) {
  study.validate(check_files);
  Rng rng(seed);
  MushraSession s;
  s.assessor_id = assessor_id;
  s.assessor_seed = seed;
  for (const auto& clip : study.training()) {
    TrainingItem item;
    item.clip_id = clip;
    item.clean_token = rng.token128();
    item.anchor_token = rng.token128();
    item.clean_file = study.stimulus(kReference, clip);
    item.anchor_file = study.stimulus(kAnchor, clip);
    s.training.push_back(std::move(item));
  }
  std::vector<std::string> order = study.trial_clips;
  rng.shuffle(order);
  for (const auto& clip : order) {
    Trial t;
    t.trial_id = clip;
    t.reference_token = rng.token128();
    t.reference_file = study.stimulus(kReference, clip);
    std::vector<std::string> names = {kReference, kAnchor};
    names.insert(names.end(), study.systems.begin(), study.systems.end());
    rng.shuffle(names);
    for (const auto& n : names) {
      t.conditions.push_back({rng.token128(), n, study.stimulus(n, clip)});
    }
    s.trials.push_back(std::move(t));
  }
  return s;
}

// Assessor-facing view: tokens and audio URLs only.
inline nlohmann::json session_to_json(const MushraSession& s,
                                      const std::set<std::string>& submitted = {}) {
  using nlohmann::json;
  auto url = [](const std::string& token) { return "/api/audio/" + token; };
  json j;
  j["assessor_id"] = s.assessor_id;
  j["training"] = json::array();
  for (const auto& t : s.training) {
    j["training"].push_back({{"clean", {{"token", t.clean_token}, {"url", url(t.clean_token)}}},
                             {"degraded", {{"token", t.anchor_token}, {"url", url(t.anchor_token)}}}});
  }
  j["trials"] = json::array();
  for (const auto& t : s.trials) {
    json conds = json::array();
    for (const auto& c : t.conditions) {
      conds.push_back({{"token", c.token}, {"url", url(c.token)}});
    }
    j["trials"].push_back({{"trial_id", t.trial_id},
                           {"reference", {{"token", t.reference_token},
                                          {"url", url(t.reference_token)}}},
                           {"conditions", conds},
                           {"submitted", submitted.count(t.trial_id) > 0}});
  }
  j["scale"] = {{"min", kMinScore}, {"max", kMaxScore}};
  return j;
}

// ---------------------------------------------------------------------------
// Ratings

struct Rating {
  std::string assessor_id;
  std::string trial_id;
  std::string condition_id;  // opaque token
  int score = 0;
};

// A rating with its token resolved to a condition name.
struct ResolvedRating {
  std::string assessor_id;
  std::string trial_id;
  std::string condition;
  double score = 0.0;
};

inline void check_score(int score) {
  if (score < kMinScore || score > kMaxScore) {
    throw Error("score " + std::to_string(score) + " outside [0, 100]");
  }
}

inline Rating rating_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error("rating must be a JSON object");
  for (const char* key : {"assessor_id", "trial_id", "condition_id", "score"}) {
    if (!j.contains(key)) throw Error(std::string("rating missing field '") + key + "'");
  }
  if (!j["score"].is_number_integer()) throw Error("score must be an integer");
  if (!j["assessor_id"].is_string() || !j["trial_id"].is_string() ||
      !j["condition_id"].is_string()) {
    throw Error("rating ids must be strings");
  }
  Rating r{j["assessor_id"].get<std::string>(), j["trial_id"].get<std::string>(),
           j["condition_id"].get<std::string>(), 0};
  const auto v = j["score"].get<long long>();
  if (v < kMinScore || v > kMaxScore) {
    throw Error("score " + std::to_string(v) + " outside [0, 100]");
  }
  r.score = static_cast<int>(v);
  return r;
}

inline nlohmann::json rating_to_json(const Rating& r) {
  return {{"assessor_id", r.assessor_id},
          {"trial_id", r.trial_id},
          {"condition_id", r.condition_id},
          {"score", r.score}};
}

// Append-only JSON-lines store with an in-memory index. Duplicate
// (assessor, trial, condition) keys resolve to the latest write. Writes are
// serialized; a batch is validated in full before anything is appended.
class RatingStore {
 public:
  using Validator = std::function<void(const Rating&)>;  // throws on reject

  RatingStore() = default;
  explicit RatingStore(std::filesystem::path path, Validator validator = {})
      : path_(std::move(path)), validator_(std::move(validator)) {
    if (!path_.empty() && std::filesystem::exists(path_)) replay();
  }

  void set_validator(Validator v) {
    std::lock_guard<std::mutex> lock(mu_);
    validator_ = std::move(v);
  }

  void record(const Rating& r) { record_batch({r}); }

  void record_batch(const std::vector<Rating>& batch) {
    std::lock_guard<std::mutex> lock(mu_);
    for (const auto& r : batch) {
      check_score(r.score);
      if (validator_) validator_(r);
    }
    if (!path_.empty()) {
      if (path_.has_parent_path()) {
        std::filesystem::create_directories(path_.parent_path());
      }
      std::ofstream out(path_, std::ios::app);
      if (!out) throw Error("cannot append to rating store " + path_.string());
      std::string lines;
      for (const auto& r : batch) lines += rating_to_json(r).dump() + "\n";
      out << lines;
      out.flush();
      if (!out) throw Error("write failed: " + path_.string());
    }
    for (const auto& r : batch) index(r);
  }

  std::vector<Rating> ratings() const {
    std::lock_guard<std::mutex> lock(mu_);
    std::vector<Rating> out;
    out.reserve(by_key_.size());
    for (const auto& [k, r] : by_key_) out.push_back(r);
    return out;
  }

  std::set<std::string> submitted_trials(const std::string& assessor) const {
    std::lock_guard<std::mutex> lock(mu_);
    std::set<std::string> out;
    for (const auto& [k, r] : by_key_) {
      if (r.assessor_id == assessor) out.insert(r.trial_id);
    }
    return out;
  }

  std::size_t size() const {
    std::lock_guard<std::mutex> lock(mu_);
    return by_key_.size();
  }

 private:
  using Key = std::tuple<std::string, std::string, std::string>;

  void index(const Rating& r) {
    by_key_[{r.assessor_id, r.trial_id, r.condition_id}] = r;
  }

  void replay() {
    std::ifstream in(path_);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      try {
        index(rating_from_json(nlohmann::json::parse(line)));
      } catch (const std::exception& e) {
        throw Error(path_.string() + ":" + std::to_string(line_no) + ": " + e.what());
      }
    }
  }

  std::filesystem::path path_;
  Validator validator_;
  mutable std::mutex mu_;
  std::map<Key, Rating> by_key_;
};

// Maps tokens back to condition names using the assessors' sessions.
inline std::vector<ResolvedRating> resolve(
    const std::vector<Rating>& ratings,
    const std::map<std::string, MushraSession>& sessions) {
  std::vector<ResolvedRating> out;
  for (const auto& r : ratings) {
    auto it = sessions.find(r.assessor_id);
    if (it == sessions.end()) {
      throw Error("rating from unknown assessor '" + r.assessor_id + "'");
    }
    const Condition* c = it->second.find_condition(r.trial_id, r.condition_id);
    if (!c) {
      throw Error("unknown condition token for trial '" + r.trial_id + "'");
    }
    out.push_back({r.assessor_id, r.trial_id, c->name, static_cast<double>(r.score)});
  }
  return out;
}

// ratings.csv: assessor_id, trial_id, condition, score
inline csv::Table ratings_table(const std::vector<ResolvedRating>& ratings) {
  csv::Table t;
  t.header = {"assessor_id", "trial_id", "condition", "score"};
  for (const auto& r : ratings) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", r.score);
    t.rows.push_back({r.assessor_id, r.trial_id, r.condition, buf});
  }
  return t;
}

inline std::vector<ResolvedRating> ratings_from_table(const csv::Table& t) {
  const auto c_a = t.column("assessor_id");
  const auto c_t = t.column("trial_id");
  const auto c_c = t.column("condition");
  const auto c_s = t.column("score");
  std::vector<ResolvedRating> out;
  for (const auto& row : t.rows) {
    const double s = csv::parse_double(row[c_s]);
    if (!(s >= kMinScore && s <= kMaxScore)) {
      throw Error("score " + row[c_s] + " outside [0, 100]");
    }
    out.push_back({row[c_a], row[c_t], row[c_c], s});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Statistics and ranking

inline double mean_of(const std::vector<double>& v) {
  if (v.empty()) throw Error("mean of empty sample");
  double acc = 0.0;
  for (double x : v) acc += x;
  return acc / static_cast<double>(v.size());
}

// Two-sided 95% half-width t_{0.975, n-1} * s / sqrt(n).
inline double confidence_interval(const std::vector<double>& scores) {
  const std::size_t n = scores.size();
  if (n < 2) throw Error("confidence interval needs at least 2 scores");
  const double m = mean_of(scores);
  double ss = 0.0;
  for (double x : scores) ss += (x - m) * (x - m);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  const boost::math::students_t dist(static_cast<double>(n - 1));
  const double t = boost::math::quantile(dist, 0.975);
  return t * sd / std::sqrt(static_cast<double>(n));
}

struct TrialWinner {
  std::string winner;
  double mean = 0.0;
  bool tie = false;  // exact tie broken lexicographically
};

// Highest mean among systems; the hidden reference and the anchor are
// never eligible.
inline TrialWinner trial_winner(
    const std::map<std::string, std::vector<double>>& scores_by_condition) {
  TrialWinner w;
  bool have = false;
  for (const auto& [name, scores] : scores_by_condition) {  // name order
    if (is_control(name) || scores.empty()) continue;
    const double m = mean_of(scores);
    if (!have || m > w.mean) {
      w = {name, m, false};
      have = true;
    } else if (m == w.mean) {
      w.tie = true;
    }
  }
  if (!have) throw Error("empty trial: no system ratings");
  return w;
}

struct ConditionStats {
  double mean = 0.0;
  double ci95 = 0.0;  // 0 when fewer than 2 ratings
  std::size_t n = 0;
};

struct RankingResult {
  std::vector<std::string> systems;  // ranked order
  std::map<std::string, int> wins;
  std::map<std::string, double> overall_means;
  std::map<std::string, double> ci95;
  std::vector<std::string> trial_ids;
  // trial -> condition (systems and controls) -> stats
  std::map<std::string, std::map<std::string, ConditionStats>> per_trial;
  std::map<std::string, std::string> trial_winners;
  std::map<std::string, ConditionStats> overall;  // includes controls
  std::vector<std::string> excluded_assessors;
  std::vector<std::string> warnings;

  double per_trial_mean(const std::string& trial, const std::string& sys) const {
    return per_trial.at(trial).at(sys).mean;
  }
};

struct RankingOptions {
  // Drop assessors who rate the hidden reference below 90 in more than 15%
  // of their trials. Off by default.
  bool post_screening = false;
  double screening_reference_min = 90.0;
  double screening_max_fraction = 0.15;
};

namespace detail {

inline ConditionStats condition_stats(const std::vector<double>& v) {
  ConditionStats s;
  s.n = v.size();
  s.mean = mean_of(v);
  s.ci95 = v.size() >= 2 ? confidence_interval(v) : 0.0;
  return s;
}

inline std::vector<std::string> screen_assessors(
    const std::vector<ResolvedRating>& ratings, const RankingOptions& opt) {
  std::map<std::string, std::pair<std::size_t, std::size_t>> counts;  // low, total
  for (const auto& r : ratings) {
    if (r.condition != kReference) continue;
    auto& c = counts[r.assessor_id];
    ++c.second;
    if (r.score < opt.screening_reference_min) ++c.first;
  }
  std::vector<std::string> excluded;
  for (const auto& [a, c] : counts) {
    if (c.second > 0 &&
        static_cast<double>(c.first) / static_cast<double>(c.second) >
            opt.screening_max_fraction) {
      excluded.push_back(a);
    }
  }
  return excluded;
}

}  // namespace detail

inline RankingResult compute_ranking(const std::vector<ResolvedRating>& all,
                                     const RankingOptions& opt = {}) {
  RankingResult res;
  std::vector<ResolvedRating> ratings = all;
  if (opt.post_screening) {
    res.excluded_assessors = detail::screen_assessors(all, opt);
    const std::set<std::string> drop(res.excluded_assessors.begin(),
                                     res.excluded_assessors.end());
    std::erase_if(ratings, [&](const ResolvedRating& r) {
      return drop.count(r.assessor_id) > 0;
    });
  }
  if (ratings.empty()) throw Error("no ratings to rank");

  std::set<std::string> systems;
  std::set<std::string> trials;
  std::map<std::string, std::map<std::string, std::vector<double>>> by_trial;
  std::map<std::string, std::vector<double>> by_condition;
  for (const auto& r : ratings) {
    if (!(r.score >= kMinScore && r.score <= kMaxScore)) {
      throw Error("score outside [0, 100]");
    }
    trials.insert(r.trial_id);
    if (!is_control(r.condition)) systems.insert(r.condition);
    by_trial[r.trial_id][r.condition].push_back(r.score);
    by_condition[r.condition].push_back(r.score);
  }
  if (systems.empty()) throw Error("no system ratings to rank");

  std::vector<std::string> incomplete;
  for (const auto& t : trials) {
    for (const auto& s : systems) {
      if (!by_trial[t].count(s)) {
        incomplete.push_back(t);
        break;
      }
    }
  }
  if (!incomplete.empty()) {
    std::string ids;
    for (const auto& t : incomplete) ids += (ids.empty() ? "" : ", ") + t;
    throw Error("incomplete trials: " + ids);
  }

  res.trial_ids.assign(trials.begin(), trials.end());
  for (const auto& s : systems) res.wins[s] = 0;
  for (const auto& t : trials) {
    for (const auto& [cond, scores] : by_trial[t]) {
      res.per_trial[t][cond] = detail::condition_stats(scores);
    }
    const TrialWinner w = trial_winner(by_trial[t]);
    if (w.tie) {
      res.warnings.push_back("trial " + t + ": exact tie in mean score, '" +
                             w.winner + "' chosen lexicographically");
    }
    res.trial_winners[t] = w.winner;
    ++res.wins[w.winner];
  }
  for (const auto& [cond, scores] : by_condition) {
    res.overall[cond] = detail::condition_stats(scores);
  }
  for (const auto& s : systems) {
    res.overall_means[s] = res.overall.at(s).mean;
    res.ci95[s] = res.overall.at(s).ci95;
  }
  res.systems.assign(systems.begin(), systems.end());
  std::stable_sort(res.systems.begin(), res.systems.end(),
                   [&](const std::string& a, const std::string& b) {
                     if (res.wins[a] != res.wins[b]) return res.wins[a] > res.wins[b];
                     if (res.overall_means[a] != res.overall_means[b]) {
                       return res.overall_means[a] > res.overall_means[b];
                     }
                     return a < b;
                   });
  return res;
}

// ranking.csv: rank, system, wins, mean, ci95
inline csv::Table ranking_table(const RankingResult& r) {
  csv::Table t;
  t.header = {"rank", "system", "wins", "mean", "ci95"};
  for (std::size_t i = 0; i < r.systems.size(); ++i) {
    const auto& s = r.systems[i];
    char mean[32];
    char ci[32];
    std::snprintf(mean, sizeof mean, "%.2f", r.overall_means.at(s));
    std::snprintf(ci, sizeof ci, "%.2f", r.ci95.at(s));
    t.rows.push_back({std::to_string(i + 1), s, std::to_string(r.wins.at(s)),
                      mean, ci});
  }
  return t;
}

// Per-trial means and CIs for every condition, plus an "all" row block.
inline csv::Table per_trial_table(const RankingResult& r) {
  csv::Table t;
  t.header = {"trial_id", "condition", "mean", "ci95", "n", "winner"};
  auto add = [&](const std::string& trial, const std::string& cond,
                 const ConditionStats& s, bool winner) {
    char mean[32];
    char ci[32];
    std::snprintf(mean, sizeof mean, "%.2f", s.mean);
    std::snprintf(ci, sizeof ci, "%.2f", s.ci95);
    t.rows.push_back({trial, cond, mean, ci, std::to_string(s.n),
                      winner ? "1" : "0"});
  };
  for (const auto& trial : r.trial_ids) {
    for (const auto& [cond, s] : r.per_trial.at(trial)) {
      add(trial, cond, s, r.trial_winners.at(trial) == cond);
    }
  }
  for (const auto& [cond, s] : r.overall) add("all", cond, s, false);
  return t;
}

inline nlohmann::json ranking_to_json(const RankingResult& r) {
  using nlohmann::json;
  json j;
  j["ranking"] = json::array();
  for (std::size_t i = 0; i < r.systems.size(); ++i) {
    const auto& s = r.systems[i];
    j["ranking"].push_back({{"rank", i + 1},
                            {"system", s},
                            {"wins", r.wins.at(s)},
                            {"mean", r.overall_means.at(s)},
                            {"ci95", r.ci95.at(s)}});
  }
  j["trials"] = json::array();
  for (const auto& trial : r.trial_ids) {
    json conds = json::object();
    for (const auto& [cond, s] : r.per_trial.at(trial)) {
      conds[cond] = {{"mean", s.mean}, {"ci95", s.ci95}, {"n", s.n}};
    }
    j["trials"].push_back({{"trial_id", trial},
                           {"winner", r.trial_winners.at(trial)},
                           {"conditions", conds}});
  }
  j["excluded_assessors"] = r.excluded_assessors;
  j["warnings"] = r.warnings;
  return j;
}

// ---------------------------------------------------------------------------
// Study file (JSON)

inline nlohmann::json study_to_json(const StudyConfig& s) {
  return {{"trial_clips", s.trial_clips},
          {"systems", s.systems},
          {"training_clips", s.training_clips},
          {"stimuli_root", s.stimuli_root.string()},
          {"base_seed", s.base_seed}};
}

inline StudyConfig study_from_json(const nlohmann::json& j) {
  StudyConfig s;
  try {
    s.trial_clips = j.at("trial_clips").get<std::vector<std::string>>();
    s.systems = j.at("systems").get<std::vector<std::string>>();
    if (j.contains("training_clips")) {
      s.training_clips = j.at("training_clips").get<std::vector<std::string>>();
    }
    s.stimuli_root = j.at("stimuli_root").get<std::string>();
    s.base_seed = j.value("base_seed", std::uint64_t{0});
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("study file: ") + e.what());
  }
  return s;
}

inline StudyConfig read_study(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open study file: " + path.string());
  try {
    StudyConfig s = study_from_json(nlohmann::json::parse(in));
    if (s.stimuli_root.is_relative()) {
      s.stimuli_root = path.parent_path() / s.stimuli_root;
    }
    return s;
  } catch (const nlohmann::json::parse_error& e) {
    throw Error("study file " + path.string() + ": " + e.what());
  }
}

}  // namespace plclab::mushra
