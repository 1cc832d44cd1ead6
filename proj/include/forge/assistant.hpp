#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "forge/corpus.hpp"
#include "forge/dialogue.hpp"
#include "forge/remuse.hpp"
#include "json.hpp"

namespace forge::assistant {

// Milliseconds since the Unix epoch.
using Millis = std::int64_t;

class Clock {
 public:
  virtual ~Clock() = default;
  virtual Millis now() const = 0;
};

class SystemClock : public Clock {
 public:
  Millis now() const override;
};

class ManualClock : public Clock {
 public:
  explicit ManualClock(Millis start = 0) : now_(start) {}
  Millis now() const override;
  void set(Millis t);
  void advance(Millis delta);

 private:
  mutable std::mutex mu_;
  Millis now_;
};

enum class SessionDecision { accept, reject };

std::string_view to_string(SessionDecision d);
SessionDecision session_decision_from_string(std::string_view s);

struct Session {
  std::string id;
  std::string paper_id;
  Millis created_at = 0;
  Dialogue transcript;  // provenance live
  std::optional<SessionDecision> decision;
  std::optional<std::string> meta_review;
  std::optional<Millis> closed_at;
  std::vector<Millis> message_timestamps;  // one per utterance

  bool closed() const { return closed_at.has_value(); }
  nlohmann::json to_json() const;

  friend bool operator==(const Session&, const Session&) = default;
};

struct StudyLogEntry {
  std::string session_id;
  std::string paper_id;
  double duration_seconds = 0.0;
  std::size_t turn_count = 0;
  SessionDecision decision = SessionDecision::accept;
  std::optional<corpus::Decision> gold_decision;

  nlohmann::json to_json() const;
};

// Append-only JSONL log of session events (created, message, decision).
// Without a path the log lives in memory only.
class EventStore {
 public:
  explicit EventStore(std::optional<std::filesystem::path> path = std::nullopt);

  /// Events already on disk, in write order. A torn final line is dropped.
  std::vector<nlohmann::json> replay();
  void append(const nlohmann::json& event);

 private:
  std::optional<std::filesystem::path> path_;
  std::mutex mu_;
  std::ofstream out_;
};

enum class BusyPolicy { queue, reject };

struct AssistantConfig {
  bool show_rewards = false;
  std::optional<remuse::RemuseConfig> refinement;  // response refinement when set
  std::size_t max_prompt_chars = 0;                // 0 disables history truncation
  BusyPolicy busy_policy = BusyPolicy::queue;
};

struct Reply {
  std::string text;
  std::optional<RewardVector> rewards;

  nlohmann::json to_json() const;
};

class Service {
 public:
  Service(std::vector<corpus::PaperRecord> papers, remuse::Pipeline pipeline, AssistantConfig cfg = {},
          std::shared_ptr<Clock> clock = std::make_shared<SystemClock>(),
          std::optional<std::filesystem::path> store_path = std::nullopt);

  nlohmann::json list_papers() const;
  /// Title, type and reviews; gold meta-review and decision are never exposed.
  nlohmann::json paper(const std::string& id) const;

  Session create_session(const std::string& paper_id);
  Session get_session(const std::string& id) const;
  std::vector<std::string> session_ids() const;

  /// Appends the seeker turn and the agent reply together once the reply is
  /// ready; on failure neither is kept and Error(upstream) is raised.
  Reply post_message(const std::string& session_id, const std::string& text);

  Session submit_decision(const std::string& session_id, const std::string& decision, const std::string& meta_review);

  /// Closed sessions only, in creation order.
  std::vector<StudyLogEntry> study_log(const std::optional<std::string>& paper_id = std::nullopt) const;

  /// History trimmed from the oldest turn until the response prompt fits
  /// max_prompt_chars; the knowledge and the final seeker turn always stay.
  Dialogue fit_history(const KnowledgeSource& k, const Dialogue& history) const;

 private:
  struct Slot {
    std::mutex turn;                  // serializes mutating calls on one session
    mutable std::mutex data;          // guards `session`
    Session session;
  };

  std::shared_ptr<Slot> slot(const std::string& id) const;
  std::unique_lock<std::mutex> acquire_turn(Slot& s) const;
  const corpus::PaperRecord& record(const std::string& paper_id) const;
  std::string new_session_id();
  void apply(const nlohmann::json& event);

  std::vector<corpus::PaperRecord> papers_;
  std::map<std::string, std::size_t> paper_index_;
  remuse::Pipeline pipeline_;
  AssistantConfig cfg_;
  std::shared_ptr<Clock> clock_;
  EventStore store_;

  mutable std::shared_mutex sessions_mu_;
  std::map<std::string, std::shared_ptr<Slot>> sessions_;
  std::vector<std::string> order_;
  std::mutex id_mu_;
  std::uint64_t id_state_;
};

}  // namespace forge::assistant
