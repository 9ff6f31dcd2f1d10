#pragma once

// HTTP front for a MUSHRA study (consumed by the browser test client).
//
//   GET  /api/session?assessor=ID   session JSON (tokens and audio URLs only)
//   GET  /api/audio/{token}         WAV bytes for a token
//   POST /api/ratings               JSON array of ratings
//   GET  /api/results               ranking JSON; needs the results key
//                                   (X-Results-Key header or ?key=)

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "plclab/audio_io.hpp"
#include "plclab/error.hpp"
#include "plclab/mushra.hpp"

namespace plclab::mushra {

inline constexpr const char* kResultsKeyEnv = "PLCLAB_RESULTS_KEY";

class MushraService {
 public:
  // `data_dir` holds ratings.jsonl and assessors.json (assessor -> seed).
  MushraService(StudyConfig study, std::filesystem::path data_dir,
                std::string results_key)
      : study_(std::move(study)),
        data_dir_(std::move(data_dir)),
        results_key_(std::move(results_key)) {
    study_.validate();
    std::filesystem::create_directories(data_dir_);
    load_registry();
    store_ = std::make_unique<RatingStore>(
        data_dir_ / "ratings.jsonl",
        [this](const Rating& r) { validate_rating(r); });
  }

  const StudyConfig& study() const noexcept { return study_; }

  nlohmann::json session_json(const std::string& assessor_id) {
    if (assessor_id.empty()) throw Error("missing assessor id");
    const MushraSession& s = session_for(assessor_id);
    return session_to_json(s, store_->submitted_trials(assessor_id));
  }

  std::optional<std::filesystem::path> audio_file(const std::string& token) const {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = audio_.find(token);
    if (it == audio_.end()) return std::nullopt;
    return it->second;
  }

  // Validates and stores a JSON array of ratings atomically.
  std::size_t submit(const nlohmann::json& body) {
    if (!body.is_array()) throw Error("ratings payload must be a JSON array");
    std::vector<Rating> batch;
    for (const auto& j : body) batch.push_back(rating_from_json(j));
    store_->record_batch(batch);
    return batch.size();
  }

  bool results_authorized(const std::string& key) const {
    return !results_key_.empty() && key == results_key_;
  }

  std::vector<ResolvedRating> resolved_ratings() const {
    std::map<std::string, MushraSession> sessions;
    {
      std::lock_guard<std::mutex> lock(mu_);
      sessions = sessions_;
    }
    return resolve(store_->ratings(), sessions);
  }

  RankingResult results(const RankingOptions& opt = {}) const {
    return compute_ranking(resolved_ratings(), opt);
  }

  void mount(httplib::Server& server) {
    server.Get("/api/session", [this](const httplib::Request& req,
                                      httplib::Response& res) {
      guarded(res, [&] {
        const std::string id = req.get_param_value("assessor");
        if (id.empty()) {
          res.status = 400;
          res.set_content(error_json("missing assessor parameter"), "application/json");
          return;
        }
        res.set_content(session_json(id).dump(), "application/json");
      });
    });
    server.Get(R"(/api/audio/([0-9a-f]+))", [this](const httplib::Request& req,
                                                   httplib::Response& res) {
      guarded(res, [&] {
        const auto file = audio_file(req.matches[1]);
        if (!file) {
          res.status = 404;
          res.set_content(error_json("unknown token"), "application/json");
          return;
        }
        const auto bytes = read_file_bytes(*file);
        res.set_content(std::string(bytes.begin(), bytes.end()), "audio/wav");
      });
    });
    server.Post("/api/ratings", [this](const httplib::Request& req,
                                       httplib::Response& res) {
      guarded(res, [&] {
        nlohmann::json body;
        try {
          body = nlohmann::json::parse(req.body);
        } catch (const nlohmann::json::parse_error&) {
          res.status = 400;
          res.set_content(error_json("invalid JSON"), "application/json");
          return;
        }
        const std::size_t n = submit(body);
        res.set_content(nlohmann::json{{"stored", n}}.dump(), "application/json");
      });
    });
    server.Get("/api/results", [this](const httplib::Request& req,
                                      httplib::Response& res) {
      guarded(res, [&] {
        std::string key = req.get_header_value("X-Results-Key");
        if (key.empty()) key = req.get_param_value("key");
        if (!results_authorized(key)) {
          res.status = 403;
          res.set_content(error_json("results are organizer-only"), "application/json");
          return;
        }
        res.set_content(ranking_to_json(results()).dump(), "application/json");
      });
    });
  }

 private:
  static std::string error_json(const std::string& msg) {
    return nlohmann::json{{"error", msg}}.dump();
  }

  template <typename Fn>
  static void guarded(httplib::Response& res, Fn&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      res.status = 400;
      res.set_content(error_json(e.what()), "application/json");
    } catch (const std::exception& e) {
      res.status = 500;
      res.set_content(error_json(e.what()), "application/json");
    }
  }

  const MushraSession& session_for(const std::string& assessor_id) {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = sessions_.find(assessor_id);
    if (it != sessions_.end()) return it->second;
    const std::uint64_t seed = assessor_seed(study_.base_seed, assessor_id);
    seeds_[assessor_id] = seed;
    save_registry();
    return add_session(build_session(study_, assessor_id, seed));
  }

  // Caller holds mu_ (or is the constructor).
  const MushraSession& add_session(MushraSession s) {
    for (const auto& t : s.training) {
      audio_[t.clean_token] = t.clean_file;
      audio_[t.anchor_token] = t.anchor_file;
    }
    for (const auto& t : s.trials) {
      audio_[t.reference_token] = t.reference_file;
      for (const auto& c : t.conditions) audio_[c.token] = c.file;
    }
    const std::string id = s.assessor_id;
    return sessions_[id] = std::move(s);
  }

  void validate_rating(const Rating& r) const {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = sessions_.find(r.assessor_id);
    if (it == sessions_.end()) {
      throw Error("unknown assessor '" + r.assessor_id + "'");
    }
    if (!it->second.find_trial(r.trial_id)) {
      throw Error("unknown trial '" + r.trial_id + "'");
    }
    if (!it->second.find_condition(r.trial_id, r.condition_id)) {
      throw Error("unknown condition token for trial '" + r.trial_id + "'");
    }
  }

  void load_registry() {
    const auto path = data_dir_ / "assessors.json";
    if (!std::filesystem::exists(path)) return;
    std::ifstream in(path);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
      throw Error("assessor registry " + path.string() + ": " + e.what());
    }
    for (const auto& [id, seed] : j.items()) {
      seeds_[id] = seed.get<std::uint64_t>();
      add_session(build_session(study_, id, seeds_[id]));
    }
  }

  void save_registry() const {
    const auto path = data_dir_ / "assessors.json";
    const auto tmp = data_dir_ / "assessors.json.tmp";
    {
      std::ofstream out(tmp);
      if (!out) throw Error("cannot write assessor registry");
      out << nlohmann::json(seeds_).dump(2);
    }
    std::filesystem::rename(tmp, path);
  }

  StudyConfig study_;
  std::filesystem::path data_dir_;
  std::string results_key_;
  mutable std::mutex mu_;
  std::map<std::string, std::uint64_t> seeds_;
  std::map<std::string, MushraSession> sessions_;
  std::map<std::string, std::filesystem::path> audio_;
  std::unique_ptr<RatingStore> store_;
};

// Sessions for every registered assessor in a data directory (used by the
// offline report, which does not run the server).
inline std::map<std::string, MushraSession> load_sessions(
    const StudyConfig& study, const std::filesystem::path& data_dir) {
  std::map<std::string, MushraSession> out;
  const auto path = data_dir / "assessors.json";
  if (!std::filesystem::exists(path)) return out;
  std::ifstream in(path);
  const auto j = nlohmann::json::parse(in);
  for (const auto& [id, seed] : j.items()) {
    out[id] = build_session(study, id, seed.get<std::uint64_t>(), false);
  }
  return out;
}

}  // namespace plclab::mushra
