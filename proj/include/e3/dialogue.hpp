#pragma once

#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "e3/model.hpp"

namespace e3 {

enum class session_status { awaiting_user, concluded };

inline std::string_view to_string(session_status s) {
  return s == session_status::concluded ? "concluded" : "awaiting_user";
}

struct session {
  std::string id;
  dialogue_state state;
  model_move last_move;
  std::vector<rule_report> explain;
  std::array<double, decision_count> z{};
  session_status status = session_status::awaiting_user;
};

class session_error : public std::runtime_error {
 public:
  enum class kind { not_found, conflict, invalid };
  session_error(kind k, const std::string& what) : std::runtime_error(what), kind_(k) {}
  kind code() const { return kind_; }

 private:
  kind kind_;
};

inline nlohmann::json to_json(const model_move& m) {
  nlohmann::json j = {{"decision", std::string(to_string(m.label))}};
  j["rule_index"] = m.rule_index ? nlohmann::json(*m.rule_index) : nlohmann::json(nullptr);
  j["question"] = m.question ? nlohmann::json(*m.question) : nlohmann::json(nullptr);
  return j;
}

inline nlohmann::json to_json(const dialogue_state& s) {
  nlohmann::json history = nlohmann::json::array();
  for (const auto& t : s.history) history.push_back({{"follow_up_question", t.inquiry}, {"follow_up_answer", t.answer}});
  return {{"snippet", s.snippet}, {"question", s.question}, {"scenario", s.scenario}, {"history", history}};
}

inline nlohmann::json to_json(const session& s) {
  return {{"id", s.id}, {"status", std::string(to_string(s.status))}, {"state", to_json(s.state)},
          {"move", to_json(s.last_move)}};
}

/// Spans of the last turn with character offsets into the snippet, their
/// entailment and inquiry scores, and the class scores.
inline nlohmann::json explain_json(const session& s) {
  nlohmann::json spans = nlohmann::json::array();
  for (const auto& r : s.explain) {
    spans.push_back({{"start", r.char_start}, {"end", r.char_end}, {"text", r.text},
                     {"g", r.g}, {"h", r.h}, {"r", r.r}});
  }
  nlohmann::json z = nlohmann::json::object();
  for (auto d : all_decisions) z[std::string(to_string(d))] = s.z[index_of(d)];
  return {{"id", s.id}, {"spans", spans}, {"z", z}};
}

// Session contents without the id, as stored in transcripts.
inline nlohmann::json session_record(const session& s) {
  auto j = to_json(s);
  j.erase("id");
  auto ex = explain_json(s);
  ex.erase("id");
  j["explain"] = ex;
  return j;
}

/// Normalizes a user reply to "Yes" or "No".
inline std::optional<std::string> parse_user_answer(std::string_view text) {
  const auto n = normalize_label(text);
  if (n == "yes" || n == "y") return "Yes";
  if (n == "no" || n == "n") return "No";
  return std::nullopt;
}

/// In-memory sessions over a shared frozen system. Each session serializes
/// its own turns; the store lock only guards creation and lookup.
template <class T = float>
class session_store {
 public:
  explicit session_store(std::shared_ptr<const e3_system<T>> system,
                         std::optional<std::filesystem::path> transcript = std::nullopt)
      : system_(std::move(system)) {
    if (!system_) throw std::invalid_argument("session_store: no model loaded");
    if (transcript) {
      log_.open(*transcript, std::ios::app);
      if (!log_) throw std::runtime_error("cannot open transcript " + transcript->string());
    }
  }

  session create(const std::string& snippet, const std::string& question, const std::string& scenario) {
    if (snippet.find_first_not_of(" \t\r\n") == std::string::npos)
      throw session_error(session_error::kind::invalid, "snippet must not be empty");
    auto e = std::make_shared<entry>();
    {
      std::lock_guard lock(store_mutex_);
      e->s.id = "s" + std::to_string(++counter_);
      sessions_.emplace(e->s.id, e);
    }
    std::lock_guard lock(e->mutex);
    e->s.state = {snippet, question, scenario, {}};
    run_turn(e->s);
    record({{"event", "create"}, {"session", e->s.id}, {"snippet", snippet}, {"question", question},
            {"scenario", scenario}, {"result", session_record(e->s)}});
    return e->s;
  }

  session answer(const std::string& id, std::string_view reply) {
    auto e = find(id);
    std::lock_guard lock(e->mutex);
    if (e->s.status == session_status::concluded)
      throw session_error(session_error::kind::conflict, "session " + id + " is already concluded");
    auto a = parse_user_answer(reply);
    if (!a) throw session_error(session_error::kind::invalid, "answer must be yes or no");
    e->s.state.history.push_back({e->s.last_move.question.value_or(""), *a});
    run_turn(e->s);
    record({{"event", "answer"}, {"session", id}, {"answer", *a}, {"result", session_record(e->s)}});
    return e->s;
  }

  session get(const std::string& id) const {
    auto e = find(id);
    std::lock_guard lock(e->mutex);
    return e->s;
  }

  nlohmann::json explain(const std::string& id) const { return explain_json(get(id)); }

  std::size_t size() const {
    std::lock_guard lock(store_mutex_);
    return sessions_.size();
  }

 private:
  struct entry {
    mutable std::mutex mutex;
    session s;
  };

  std::shared_ptr<entry> find(const std::string& id) const {
    std::lock_guard lock(store_mutex_);
    auto it = sessions_.find(id);
    if (it == sessions_.end()) throw session_error(session_error::kind::not_found, "no session " + id);
    return it->second;
  }

  void run_turn(session& s) const {
    auto p = system_->respond(s.state);
    s.last_move = p.move;
    s.explain = p.rules;
    s.z = p.z;
    s.status = p.move.label == decision::inquire ? session_status::awaiting_user : session_status::concluded;
  }

  void record(const nlohmann::json& j) {
    if (!log_.is_open()) return;
    std::lock_guard lock(log_mutex_);
    log_ << j.dump() << "\n";
    log_.flush();
  }

  std::shared_ptr<const e3_system<T>> system_;
  mutable std::mutex store_mutex_;
  std::map<std::string, std::shared_ptr<entry>> sessions_;
  std::uint64_t counter_ = 0;
  std::mutex log_mutex_;
  std::ofstream log_;
};

struct replay_result {
  std::size_t events = 0;
  std::size_t mismatches = 0;
};

/// Re-runs every event of a transcript against `store` and compares each
/// resulting session with the recorded one. Session ids are mapped from the
/// recording to the new store.
template <class T>
replay_result replay_transcript(std::istream& transcript, session_store<T>& store) {
  replay_result r;
  std::map<std::string, std::string> ids;
  std::string line;
  while (std::getline(transcript, line)) {
    if (line.empty()) continue;
    auto ev = nlohmann::json::parse(line);
    ++r.events;
    session s;
    try {
      if (ev.at("event") == "create") {
        s = store.create(ev.at("snippet"), ev.at("question"), ev.at("scenario"));
        ids[ev.at("session")] = s.id;
      } else {
        auto it = ids.find(ev.at("session"));
        if (it == ids.end()) {
          ++r.mismatches;
          continue;
        }
        s = store.answer(it->second, ev.at("answer").get<std::string>());
      }
    } catch (const session_error&) {
      // the replayed dialogue diverged so far that the event is refused
      ++r.mismatches;
      continue;
    }
    if (session_record(s) != ev.at("result")) ++r.mismatches;
  }
  return r;
}

}  // namespace e3
