#include "forge/remuse.hpp"

#include <algorithm>

#include "text_util.hpp"

namespace forge::remuse {

using detail::trim;

std::string_view to_string(RewardAspect a) {
  switch (a) {
    case RewardAspect::k_prec: return "k_prec";
    case RewardAspect::q2: return "q2";
    case RewardAspect::specificity: return "specificity";
  }
  return "";
}

std::string_view to_string(FeedbackMode m) {
  switch (m) {
    case FeedbackMode::generic: return "generic";
    case FeedbackMode::actionable: return "actionable";
    case FeedbackMode::rewarded: return "rewarded";
  }
  return "";
}

std::string_view to_string(PromptVariant v) {
  switch (v) {
    case PromptVariant::extensive: return "extensive";
    case PromptVariant::paraphrased: return "paraphrased";
    case PromptVariant::tldr: return "tldr";
  }
  return "";
}

RewardAspect reward_aspect_from_string(std::string_view s) {
  for (auto a : {RewardAspect::k_prec, RewardAspect::q2, RewardAspect::specificity}) {
    if (to_string(a) == s) return a;
  }
  throw Error(ErrorKind::validation, "unknown reward aspect '" + std::string(s) + "'");
}

FeedbackMode feedback_mode_from_string(std::string_view s) {
  for (auto m : {FeedbackMode::generic, FeedbackMode::actionable, FeedbackMode::rewarded}) {
    if (to_string(m) == s) return m;
  }
  throw Error(ErrorKind::validation, "unknown feedback mode '" + std::string(s) + "'");
}

PromptVariant prompt_variant_from_string(std::string_view s) {
  for (auto v : {PromptVariant::extensive, PromptVariant::paraphrased, PromptVariant::tldr}) {
    if (to_string(v) == s) return v;
  }
  throw Error(ErrorKind::validation, "unknown prompt variant '" + std::string(s) + "'");
}

std::set<RewardAspect> parse_reward_subset(std::string_view csv) {
  std::set<RewardAspect> out;
  while (!csv.empty()) {
    auto comma = csv.find(',');
    auto item = trim(csv.substr(0, comma));
    if (!item.empty()) out.insert(reward_aspect_from_string(item));
    csv = comma == std::string_view::npos ? std::string_view{} : csv.substr(comma + 1);
  }
  if (out.empty()) throw Error(ErrorKind::validation, "reward subset is empty");
  return out;
}

void RemuseConfig::validate() const {
  if (reward_subset.empty()) throw Error(ErrorKind::validation, "reward_subset must not be empty");
  if (iterations < 0) throw Error(ErrorKind::validation, "iterations must be >= 0");
  if (parse_retry_budget < 0) throw Error(ErrorKind::validation, "parse_retry_budget must be >= 0");
}

RemuseConfig RemuseConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error(ErrorKind::validation, "remuse config must be an object");
  for (const auto& [key, _] : j.items()) {
    if (key != "reward_subset" && key != "feedback_mode" && key != "iterations" && key != "prompt_variant" &&
        key != "parse_retry_budget" && key != "select_best") {
      throw Error(ErrorKind::validation, "unknown remuse config field \"" + key + "\"");
    }
  }
  RemuseConfig c;
  if (j.contains("reward_subset")) {
    c.reward_subset.clear();
    for (const auto& a : j["reward_subset"]) c.reward_subset.insert(reward_aspect_from_string(a.get<std::string>()));
  }
  if (j.contains("feedback_mode")) c.feedback_mode = feedback_mode_from_string(j["feedback_mode"].get<std::string>());
  if (j.contains("prompt_variant")) c.variant = prompt_variant_from_string(j["prompt_variant"].get<std::string>());
  c.iterations = j.value("iterations", c.iterations);
  c.parse_retry_budget = j.value("parse_retry_budget", c.parse_retry_budget);
  c.select_best = j.value("select_best", c.select_best);
  c.validate();
  return c;
}

nlohmann::json RemuseConfig::to_json() const {
  nlohmann::json subset = nlohmann::json::array();
  for (auto a : reward_subset) subset.push_back(to_string(a));
  return {{"reward_subset", subset},
          {"feedback_mode", to_string(feedback_mode)},
          {"iterations", iterations},
          {"prompt_variant", to_string(variant)},
          {"parse_retry_budget", parse_retry_budget},
          {"select_best", select_best}};
}

std::vector<Metric> metrics_for(const std::set<RewardAspect>& subset) {
  std::vector<Metric> out;
  if (subset.count(RewardAspect::q2)) {
    out.push_back(Metric::q2_f1);
    out.push_back(Metric::q2_nli);
  }
  if (subset.count(RewardAspect::k_prec)) out.push_back(Metric::k_prec);
  if (subset.count(RewardAspect::specificity)) out.push_back(Metric::specificity);
  return out;
}

std::string score_names(const std::set<RewardAspect>& subset) {
  bool q2 = subset.count(RewardAspect::q2) != 0;
  bool kp = subset.count(RewardAspect::k_prec) != 0;
  bool sp = subset.count(RewardAspect::specificity) != 0;
  if (q2) {
    if (kp && sp) return "A Q2 F1 score, Q2 NLI score, KPrecision, and specificity scores";
    if (kp) return "A Q2 F1 score, Q2 NLI score, and KPrecision scores";
    if (sp) return "A Q2 F1 score, Q2 NLI score, and specificity scores";
    return "A Q2 F1 score and Q2 NLI score";
  }
  if (kp && sp) return "KPrecision and specificity scores";
  if (kp) return "KPrecision scores";
  if (sp) return "Specificity scores";
  throw Error(ErrorKind::validation, "reward subset is empty");
}

nlohmann::json trace_to_json(const RefinementTrace& t) {
  nlohmann::json rounds = nlohmann::json::array();
  for (const auto& r : t.rounds) {
    nlohmann::json before = nlohmann::json::array();
    for (const auto& rv : r.feedback.rewards_before) before.push_back(rv ? nlohmann::json(*rv) : nlohmann::json());
    rounds.push_back({{"scored", r.scored},
                      {"annotated", r.annotated},
                      {"feedback", {{"text", r.feedback.text}, {"rewards_before", before}}},
                      {"refined", r.refined}});
  }
  return {{"paper_id", t.final.paper_id}, {"initial", t.initial}, {"rounds", rounds}, {"final", t.final}};
}

namespace {

// Drops a leading "Feedback:" marker, tolerating markdown emphasis around it.
std::string strip_feedback_marker(std::string_view raw) {
  auto s = trim(raw);
  std::size_t i = 0;
  while (i < s.size() && (s[i] == '*' || s[i] == '#' || s[i] == '_')) ++i;
  if (detail::iequals_prefix(s.substr(i), "feedback")) {
    std::size_t j = i + 8;
    while (j < s.size() && (s[j] == '*' || s[j] == '_' || s[j] == ' ')) ++j;
    if (j < s.size() && s[j] == ':') {
      ++j;
      while (j < s.size() && (s[j] == '*' || s[j] == '_')) ++j;
      s = trim(s.substr(j));
    }
  }
  return std::string(s);
}

void require_seeker_last(const Dialogue& history) {
  if (history.utterances.empty() || history.utterances.back().role != Role::seeker) {
    throw Error(ErrorKind::precondition, "history must end on a seeker turn");
  }
}

}  // namespace

std::string extract_agent_response(std::string_view raw, const RoleLexicon& lexicon) {
  std::vector<std::string_view> lines;
  std::string_view rest = trim(raw);
  while (!rest.empty()) {
    auto nl = rest.find('\n');
    auto line = rest.substr(0, nl);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    rest = nl == std::string_view::npos ? std::string_view{} : rest.substr(nl + 1);
  }

  std::string body;
  bool labelled = false;
  bool in_agent = false;
  for (auto line : lines) {
    auto m = match_label(line, lexicon);
    if (m) {
      if (in_agent) break;
      labelled = true;
      if (m->role == Role::agent) {
        in_agent = true;
        body = std::string(m->rest);
      }
      continue;
    }
    if (in_agent || !labelled) {
      if (!body.empty()) body.push_back('\n');
      body += line;
    }
  }

  std::string_view text = trim(body);
  if (auto suffix = find_reward_suffix(text)) text = trim(text.substr(0, suffix->start));
  if (text.empty()) throw Error(ErrorKind::generation_unparseable, "completion holds no agent response");
  return std::string(text);
}

Pipeline::Pipeline(llm::TemplateRegistry registry, llm::Gateway gateway, Scenario scenario,
                   std::optional<metrics::ScorerEndpoint> scorer)
    : registry_(std::move(registry)),
      gateway_(std::move(gateway)),
      scenario_(scenario),
      scorer_(std::move(scorer)),
      lexicon_(RoleLexicon::for_scenario(scenario)) {
  if (scorer_) scorer_->validate();
}

void Pipeline::set_lexicon(RoleLexicon lexicon) {
  lexicon.validate();
  lexicon_ = std::move(lexicon);
}

std::string Pipeline::render(llm::PromptKind kind, const KnowledgeSource& k, llm::PromptVars vars) const {
  vars["knowledge"] = knowledge_text(k);
  vars["title"] = k.title;
  vars["paper_type"] = std::string(to_string(k.paper_type));
  return llm::render_prompt(registry_, llm::TemplateRegistry::make_id(scenario_, kind), vars);
}

Dialogue Pipeline::complete_dialogue(const std::string& prompt, int parse_retry_budget) const {
  std::string last_raw;
  std::string last_error;
  for (int attempt = 0; attempt <= parse_retry_budget; ++attempt) {
    last_raw = gateway_.complete(prompt);
    try {
      auto d = parse_transcript(last_raw, lexicon_);
      validate(d);
      return strip_rewards(std::move(d));
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::unparseable_transcript && e.kind() != ErrorKind::too_short &&
          e.kind() != ErrorKind::validation) {
        throw;
      }
      last_error = e.what();
    }
  }
  throw GenerationUnparseable("no parseable dialogue after " + std::to_string(parse_retry_budget + 1) +
                                  " completion(s): " + last_error,
                              last_raw);
}

Dialogue Pipeline::generate_initial(const KnowledgeSource& k, PromptVariant variant, int parse_retry_budget,
                                    const std::string& paper_id) const {
  validate(k);
  if (parse_retry_budget < 0) throw Error(ErrorKind::invalid_argument, "parse_retry_budget must be >= 0");
  llm::PromptKind kind = llm::PromptKind::initial_extensive;
  if (variant == PromptVariant::paraphrased) kind = llm::PromptKind::initial_paraphrased;
  if (variant == PromptVariant::tldr) kind = llm::PromptKind::initial_tldr;
  auto d = complete_dialogue(render(kind, k, {}), parse_retry_budget);
  d.paper_id = paper_id;
  d.provenance = Provenance::initial;
  return d;
}

std::vector<RewardVector> score_texts(const std::vector<std::string>& texts, const KnowledgeSource& k,
                                      const std::set<RewardAspect>& subset,
                                      const std::optional<metrics::ScorerEndpoint>& scorer) {
  std::vector<RewardVector> out(texts.size());
  if (texts.empty()) return out;
  auto ground = grounding_text(k);

  std::vector<metrics::ScoreItem> items;
  auto scorer_items = [&]() -> const std::vector<metrics::ScoreItem>& {
    if (items.empty()) {
      for (const auto& t : texts) items.push_back({t, ground, std::nullopt});
    }
    return items;
  };
  auto has_tokens = [](const std::string& t) { return !metrics::tokenize(t).empty(); };

  if (subset.count(RewardAspect::k_prec)) {
    metrics::KnowledgeIndex index(ground);
    for (std::size_t i = 0; i < texts.size(); ++i) {
      out[i].k_prec = has_tokens(texts[i]) ? index.precision(texts[i]) : 0.0;
    }
  }

  if (subset.count(RewardAspect::specificity)) {
    std::optional<std::vector<double>> external;
    if (scorer && scorer->serves("specificity")) {
      external = metrics::request_metric(*scorer, "specificity", scorer_items());
    }
    for (std::size_t i = 0; i < texts.size(); ++i) {
      if (external) {
        out[i].specificity = (*external)[i];
      } else {
        out[i].specificity = has_tokens(texts[i]) ? metrics::specificity(texts[i]) : 0.0;
      }
    }
  }

  if (subset.count(RewardAspect::q2)) {
    if (!scorer || !(scorer->serves("q2_f1") || scorer->serves("q2_nli"))) {
      throw Error(ErrorKind::precondition, "q2 rewards need a scorer serving q2_f1 / q2_nli");
    }
    for (auto m : {Metric::q2_f1, Metric::q2_nli}) {
      std::string name(metric_name(m));
      if (!scorer->serves(name)) continue;
      auto scores = metrics::request_metric(*scorer, name, scorer_items());
      if (!scores) continue;
      for (std::size_t i = 0; i < texts.size(); ++i) out[i].set(m, (*scores)[i]);
    }
  }
  return out;
}

Annotation Pipeline::evaluate_and_annotate(const Dialogue& d, const KnowledgeSource& k,
                                           const std::set<RewardAspect>& subset) const {
  if (subset.empty()) throw Error(ErrorKind::invalid_argument, "reward subset is empty");
  validate(d);
  std::vector<std::string> texts;
  for (const auto& u : d.utterances) texts.push_back(u.text);
  auto scores = score_texts(texts, k, subset);

  Annotation a;
  a.scored = d;
  for (std::size_t i = 0; i < scores.size(); ++i) a.scored.utterances[i].rewards = scores[i];
  a.text = render_transcript(a.scored, true, lexicon_);
  return a;
}

FeedbackRecord Pipeline::generate_feedback(std::string_view annotated, const KnowledgeSource& k, FeedbackMode mode,
                                           const std::set<RewardAspect>& subset) const {
  if (trim(annotated).empty()) throw Error(ErrorKind::invalid_argument, "annotated transcript is empty");
  auto parsed = parse_transcript(annotated, lexicon_);

  FeedbackRecord rec;
  bool annotated_any = false;
  for (const auto& u : parsed.utterances) {
    rec.rewards_before.push_back(u.rewards);
    annotated_any = annotated_any || (u.rewards && !u.rewards->empty());
  }

  llm::PromptVars vars;
  llm::PromptKind kind = llm::PromptKind::feedback_generic;
  if (mode == FeedbackMode::rewarded) {
    if (!annotated_any) throw Error(ErrorKind::precondition, "rewarded feedback needs a reward-annotated transcript");
    kind = llm::PromptKind::feedback_rewarded;
    vars["dialogue"] = std::string(trim(annotated));
    vars["score_names"] = score_names(subset);
  } else {
    if (mode == FeedbackMode::actionable) kind = llm::PromptKind::feedback_actionable;
    vars["dialogue"] = render_transcript(strip_rewards(parsed), false, lexicon_);
  }

  rec.text = strip_feedback_marker(gateway_.complete(render(kind, k, std::move(vars))));
  if (rec.text.empty()) throw Error(ErrorKind::generation_unparseable, "feedback completion is empty");
  return rec;
}

Dialogue Pipeline::refine(const KnowledgeSource& k, const FeedbackRecord& fb, const Dialogue& d,
                          int parse_retry_budget) const {
  validate(k);
  validate(d);
  if (trim(fb.text).empty()) throw Error(ErrorKind::invalid_argument, "feedback is empty");
  llm::PromptVars vars{{"feedback", fb.text}, {"dialogue", render_transcript(strip_rewards(d), false, lexicon_)}};
  auto refined = complete_dialogue(render(llm::PromptKind::refine, k, std::move(vars)), parse_retry_budget);
  refined.paper_id = d.paper_id;
  refined.provenance = Provenance::refined;
  return refined;
}

double Pipeline::trace_score(const Dialogue& d, const KnowledgeSource& k, const std::set<RewardAspect>& subset) const {
  auto scored = evaluate_and_annotate(d, k, subset).scored;
  auto agg = metrics::aggregate_dialogue(scored);
  double sum = 0.0;
  int n = 0;
  for (auto m : {Metric::k_prec, Metric::q2_f1, Metric::q2_nli}) {
    if (auto v = agg.agent_means.get(m)) {
      sum += *v;
      ++n;
    }
  }
  if (agg.specificity_mean) {
    sum += *agg.specificity_mean;
    ++n;
  }
  return n == 0 ? 0.0 : sum / n;
}

RefinementTrace Pipeline::run(const KnowledgeSource& k, const RemuseConfig& rc, const std::string& paper_id) const {
  rc.validate();
  RefinementTrace trace;
  try {
    trace.initial = generate_initial(k, rc.variant, rc.parse_retry_budget, paper_id);
  } catch (const Error& e) {
    throw TraceAborted(e.kind(), std::string("initial generation failed: ") + e.what(), trace);
  }

  Dialogue current = trace.initial;
  for (int i = 0; i < rc.iterations; ++i) {
    RefinementRound round;
    try {
      auto ann = evaluate_and_annotate(current, k, rc.reward_subset);
      round.scored = std::move(ann.scored);
      round.annotated = std::move(ann.text);
      round.feedback = generate_feedback(round.annotated, k, rc.feedback_mode, rc.reward_subset);
      round.refined = refine(k, round.feedback, current, rc.parse_retry_budget);
    } catch (const Error& e) {
      trace.final = current;
      throw TraceAborted(e.kind(), "round " + std::to_string(i + 1) + " failed: " + e.what(), trace);
    }
    current = round.refined;
    trace.rounds.push_back(std::move(round));
  }
  trace.final = current;

  if (rc.select_best && !trace.rounds.empty()) {
    try {
      double best = trace_score(trace.initial, k, rc.reward_subset);
      trace.final = trace.initial;
      for (const auto& r : trace.rounds) {
        double s = trace_score(r.refined, k, rc.reward_subset);
        if (s >= best) {
          best = s;
          trace.final = r.refined;
        }
      }
    } catch (const Error& e) {
      throw TraceAborted(e.kind(), std::string("best-of-trace scoring failed: ") + e.what(), trace);
    }
  }
  return trace;
}

std::string Pipeline::response_prompt(const KnowledgeSource& k, const Dialogue& history) const {
  llm::PromptVars vars{{"history", render_transcript(strip_rewards(history), false, lexicon_)}};
  return render(llm::PromptKind::response_generate, k, std::move(vars));
}

std::string Pipeline::generate_response(const KnowledgeSource& k, const Dialogue& history) const {
  validate(k);
  require_seeker_last(history);
  return extract_agent_response(gateway_.complete(response_prompt(k, history)), lexicon_);
}

std::string Pipeline::refine_response(const KnowledgeSource& k, const Dialogue& history, const std::string& response,
                                      const RemuseConfig& rc) const {
  rc.validate();
  validate(k);
  require_seeker_last(history);
  if (trim(response).empty()) throw Error(ErrorKind::invalid_argument, "response is empty");

  auto hist = render_transcript(strip_rewards(history), false, lexicon_);
  std::string current = response;
  for (int i = 0; i < rc.iterations; ++i) {
    auto rewards = score_texts({current}, k, rc.reward_subset).front();
    llm::PromptVars fb_vars{{"history", hist},
                            {"response", current + format_reward_suffix(rewards)},
                            {"score_names", score_names(rc.reward_subset)}};
    auto feedback = strip_feedback_marker(gateway_.complete(render(llm::PromptKind::response_feedback, k, fb_vars)));
    if (feedback.empty()) throw Error(ErrorKind::generation_unparseable, "feedback completion is empty");

    llm::PromptVars refine_vars{{"history", hist}, {"feedback", feedback}, {"response", current}};
    current = extract_agent_response(gateway_.complete(render(llm::PromptKind::response_refine, k, refine_vars)),
                                     lexicon_);
  }
  return current;
}

}  // namespace forge::remuse
