#include "forge/assistant.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <random>

#include "text_util.hpp"

namespace forge::assistant {

std::string_view to_string(SessionDecision d) { return d == SessionDecision::accept ? "accept" : "reject"; }

SessionDecision session_decision_from_string(std::string_view s) {
  if (s == "accept") return SessionDecision::accept;
  if (s == "reject") return SessionDecision::reject;
  throw Error(ErrorKind::validation, "decision must be \"accept\" or \"reject\", got \"" + std::string(s) + "\"");
}

nlohmann::json Session::to_json() const {
  nlohmann::json j{{"id", id},
                   {"paper_id", paper_id},
                   {"created_at", created_at},
                   {"transcript", transcript},
                   {"message_timestamps", message_timestamps}};
  j["decision"] = decision ? nlohmann::json(to_string(*decision)) : nlohmann::json();
  j["meta_review"] = meta_review ? nlohmann::json(*meta_review) : nlohmann::json();
  j["closed_at"] = closed_at ? nlohmann::json(*closed_at) : nlohmann::json();
  return j;
}

nlohmann::json StudyLogEntry::to_json() const {
  nlohmann::json j{{"session_id", session_id},
                   {"paper_id", paper_id},
                   {"duration_seconds", duration_seconds},
                   {"turn_count", turn_count},
                   {"decision", to_string(decision)}};
  j["gold_decision"] = gold_decision ? nlohmann::json(corpus::to_string(*gold_decision)) : nlohmann::json();
  return j;
}

nlohmann::json Reply::to_json() const {
  nlohmann::json j{{"reply", text}};
  if (rewards) j["rewards"] = *rewards;
  return j;
}

Service::Service(std::vector<corpus::PaperRecord> papers, remuse::Pipeline pipeline, AssistantConfig cfg,
                 std::shared_ptr<Clock> clock, std::optional<std::filesystem::path> store_path)
    : papers_(std::move(papers)),
      pipeline_(std::move(pipeline)),
      cfg_(std::move(cfg)),
      clock_(std::move(clock)),
      store_(std::move(store_path)) {
  if (!clock_) throw Error(ErrorKind::invalid_argument, "service needs a clock");
  if (cfg_.refinement) cfg_.refinement->validate();
  for (std::size_t i = 0; i < papers_.size(); ++i) paper_index_.emplace(papers_[i].id, i);

  std::random_device rd;
  id_state_ = (static_cast<std::uint64_t>(rd()) << 32) ^ rd() ^
              static_cast<std::uint64_t>(std::chrono::steady_clock::now().time_since_epoch().count());

  for (const auto& event : store_.replay()) apply(event);
}

const corpus::PaperRecord& Service::record(const std::string& paper_id) const {
  auto it = paper_index_.find(paper_id);
  if (it == paper_index_.end()) throw Error(ErrorKind::not_found, "unknown paper \"" + paper_id + "\"");
  return papers_[it->second];
}

nlohmann::json Service::list_papers() const {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& p : papers_) {
    out.push_back({{"id", p.id},
                   {"title", p.title},
                   {"paper_type", forge::to_string(p.paper_type)},
                   {"review_count", p.reviews.size()}});
  }
  return out;
}

nlohmann::json Service::paper(const std::string& id) const {
  const auto& p = record(id);
  return {{"id", p.id}, {"title", p.title}, {"paper_type", forge::to_string(p.paper_type)}, {"reviews", p.reviews}};
}

std::string Service::new_session_id() {
  std::lock_guard lock(id_mu_);
  while (true) {
    // splitmix64
    std::uint64_t z = (id_state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    z ^= z >> 31;
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(z));
    std::string id(buf);
    std::shared_lock read(sessions_mu_);
    if (!sessions_.count(id)) return id;
  }
}

std::shared_ptr<Service::Slot> Service::slot(const std::string& id) const {
  std::shared_lock lock(sessions_mu_);
  auto it = sessions_.find(id);
  if (it == sessions_.end()) throw Error(ErrorKind::not_found, "unknown session \"" + id + "\"");
  return it->second;
}

std::unique_lock<std::mutex> Service::acquire_turn(Slot& s) const {
  if (cfg_.busy_policy == BusyPolicy::queue) return std::unique_lock(s.turn);
  std::unique_lock lock(s.turn, std::try_to_lock);
  if (!lock.owns_lock()) throw Error(ErrorKind::busy, "session is handling another request");
  return lock;
}

void Service::apply(const nlohmann::json& event) {
  const auto type = event.at("event").get<std::string>();
  const auto id = event.at("session").get<std::string>();

  if (type == "created") {
    auto s = std::make_shared<Slot>();
    s->session.id = id;
    s->session.paper_id = event.at("paper_id").get<std::string>();
    s->session.created_at = event.at("at").get<Millis>();
    s->session.transcript.paper_id = s->session.paper_id;
    s->session.transcript.provenance = Provenance::live;
    std::unique_lock lock(sessions_mu_);
    if (!sessions_.emplace(id, s).second) throw Error(ErrorKind::conflict, "session \"" + id + "\" already exists");
    order_.push_back(id);
    return;
  }

  auto target = slot(id);
  std::lock_guard lock(target->data);
  auto& s = target->session;
  if (type == "message") {
    const auto& seeker = event.at("seeker");
    const auto& agent = event.at("agent");
    s.transcript.utterances.push_back({Role::seeker, seeker.at("text").get<std::string>(), std::nullopt});
    s.message_timestamps.push_back(seeker.at("at").get<Millis>());
    s.transcript.utterances.push_back({Role::agent, agent.at("text").get<std::string>(), std::nullopt});
    s.message_timestamps.push_back(agent.at("at").get<Millis>());
  } else if (type == "decision") {
    s.decision = session_decision_from_string(event.at("decision").get<std::string>());
    s.meta_review = event.at("meta_review").get<std::string>();
    s.closed_at = event.at("at").get<Millis>();
  } else {
    throw Error(ErrorKind::malformed_record, "unknown session event \"" + type + "\"");
  }
}

Session Service::create_session(const std::string& paper_id) {
  (void)record(paper_id);
  auto id = new_session_id();
  nlohmann::json event{{"event", "created"}, {"session", id}, {"paper_id", paper_id}, {"at", clock_->now()}};
  store_.append(event);
  apply(event);
  return get_session(id);
}

Session Service::get_session(const std::string& id) const {
  auto s = slot(id);
  std::lock_guard lock(s->data);
  return s->session;
}

std::vector<std::string> Service::session_ids() const {
  std::shared_lock lock(sessions_mu_);
  return order_;
}

Dialogue Service::fit_history(const KnowledgeSource& k, const Dialogue& history) const {
  if (cfg_.max_prompt_chars == 0) return history;
  Dialogue fitted = history;
  while (fitted.utterances.size() > 1 && pipeline_.response_prompt(k, fitted).size() > cfg_.max_prompt_chars) {
    fitted.utterances.erase(fitted.utterances.begin());
  }
  return fitted;
}

Reply Service::post_message(const std::string& session_id, const std::string& text) {
  auto target = slot(session_id);
  auto turn = acquire_turn(*target);
  if (detail::trim(text).empty()) throw Error(ErrorKind::validation, "message text is empty");

  Session snapshot;
  {
    std::lock_guard lock(target->data);
    snapshot = target->session;
  }
  if (snapshot.closed()) throw Error(ErrorKind::conflict, "session \"" + session_id + "\" is closed");

  Millis last = snapshot.message_timestamps.empty() ? snapshot.created_at : snapshot.message_timestamps.back();
  Millis seeker_at = std::max(clock_->now(), last);

  const auto& paper = record(snapshot.paper_id);
  auto k = corpus::knowledge_source(paper);
  Dialogue history = snapshot.transcript;
  history.utterances.push_back({Role::seeker, text, std::nullopt});

  std::string reply;
  try {
    auto fitted = fit_history(k, history);
    reply = pipeline_.generate_response(k, fitted);
    if (cfg_.refinement) reply = pipeline_.refine_response(k, fitted, reply, *cfg_.refinement);
  } catch (const Error& e) {
    throw Error(ErrorKind::upstream, std::string("response generation failed (") + std::string(to_string(e.kind())) +
                                         "): " + e.what());
  }
  Millis agent_at = std::max(clock_->now(), seeker_at);

  nlohmann::json event{{"event", "message"},
                       {"session", session_id},
                       {"seeker", {{"text", text}, {"at", seeker_at}}},
                       {"agent", {{"text", reply}, {"at", agent_at}}}};
  store_.append(event);
  apply(event);

  Reply out{reply, std::nullopt};
  if (cfg_.show_rewards) {
    std::set<remuse::RewardAspect> subset{remuse::RewardAspect::k_prec, remuse::RewardAspect::specificity};
    try {
      out.rewards = pipeline_.score_texts({reply}, k, subset).front();
    } catch (const Error&) {
      out.rewards.reset();
    }
  }
  return out;
}

Session Service::submit_decision(const std::string& session_id, const std::string& decision,
                                 const std::string& meta_review) {
  auto target = slot(session_id);
  auto value = session_decision_from_string(decision);
  if (detail::trim(meta_review).empty()) throw Error(ErrorKind::validation, "meta_review is empty");

  auto turn = acquire_turn(*target);
  Millis last;
  {
    std::lock_guard lock(target->data);
    if (target->session.closed()) throw Error(ErrorKind::conflict, "session \"" + session_id + "\" is already closed");
    last = target->session.message_timestamps.empty() ? target->session.created_at
                                                      : target->session.message_timestamps.back();
  }
  nlohmann::json event{{"event", "decision"},
                       {"session", session_id},
                       {"decision", to_string(value)},
                       {"meta_review", meta_review},
                       {"at", std::max(clock_->now(), last)}};
  store_.append(event);
  apply(event);
  return get_session(session_id);
}

std::vector<StudyLogEntry> Service::study_log(const std::optional<std::string>& paper_id) const {
  std::vector<StudyLogEntry> out;
  for (const auto& id : session_ids()) {
    auto s = get_session(id);
    if (!s.closed()) continue;
    if (paper_id && s.paper_id != *paper_id) continue;
    StudyLogEntry e;
    e.session_id = s.id;
    e.paper_id = s.paper_id;
    e.duration_seconds = static_cast<double>(*s.closed_at - s.created_at) / 1000.0;
    e.turn_count = s.transcript.utterances.size();
    e.decision = *s.decision;
    auto it = paper_index_.find(s.paper_id);
    if (it != paper_index_.end() && papers_[it->second].decision != corpus::Decision::unknown) {
      e.gold_decision = papers_[it->second].decision;
    }
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace forge::assistant
