#pragma once

#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "forge/dialogue.hpp"
#include "forge/error.hpp"
#include "forge/llm.hpp"
#include "forge/metrics.hpp"
#include "forge/reward.hpp"
#include "forge/scorer.hpp"
#include "json.hpp"

namespace forge::remuse {

// q2 stands for the pair of external scores q2_f1 and q2_nli.
enum class RewardAspect { k_prec, q2, specificity };
enum class FeedbackMode { generic, actionable, rewarded };
enum class PromptVariant { extensive, paraphrased, tldr };

std::string_view to_string(RewardAspect a);
std::string_view to_string(FeedbackMode m);
std::string_view to_string(PromptVariant v);
RewardAspect reward_aspect_from_string(std::string_view s);
FeedbackMode feedback_mode_from_string(std::string_view s);
PromptVariant prompt_variant_from_string(std::string_view s);

/// Parses a comma-separated list such as "k_prec,q2,specificity".
std::set<RewardAspect> parse_reward_subset(std::string_view csv);

inline const std::set<RewardAspect> kAllAspects = {RewardAspect::k_prec, RewardAspect::q2,
                                                    RewardAspect::specificity};

struct RemuseConfig {
  std::set<RewardAspect> reward_subset = kAllAspects;
  FeedbackMode feedback_mode = FeedbackMode::rewarded;
  int iterations = 1;
  PromptVariant variant = PromptVariant::extensive;
  int parse_retry_budget = 2;
  bool select_best = false;  // keep the best-scoring dialogue of the trace instead of the last

  void validate() const;
  static RemuseConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

/// Reward fields an aspect subset expands to.
std::vector<Metric> metrics_for(const std::set<RewardAspect>& subset);

/// Phrase naming the annotated scores inside feedback prompts, e.g.
/// "A Q2 F1 score, Q2 NLI score, KPrecision, and specificity scores".
std::string score_names(const std::set<RewardAspect>& subset);

struct FeedbackRecord {
  std::string text;
  std::vector<std::optional<RewardVector>> rewards_before;  // one per utterance of the scored dialogue
};

struct RefinementRound {
  Dialogue scored;        // round input carrying its rewards
  std::string annotated;  // reward-annotated transcript shown to the feedback step
  FeedbackRecord feedback;
  Dialogue refined;
};

struct RefinementTrace {
  Dialogue initial;
  std::vector<RefinementRound> rounds;
  Dialogue final;
};

nlohmann::json trace_to_json(const RefinementTrace& t);

class GenerationUnparseable : public Error {
 public:
  GenerationUnparseable(const std::string& message, std::string last_raw)
      : Error(ErrorKind::generation_unparseable, message), last_raw_(std::move(last_raw)) {}
  const std::string& last_raw() const { return last_raw_; }

 private:
  std::string last_raw_;
};

// Raised by Pipeline::run when a step fails; keeps the kind of the failure
// and every artifact produced before it.
class TraceAborted : public Error {
 public:
  TraceAborted(ErrorKind kind, const std::string& message, RefinementTrace partial)
      : Error(kind, message), partial_(std::move(partial)) {}
  const RefinementTrace& partial() const { return partial_; }

 private:
  RefinementTrace partial_;
};

/// Scores for each text under the subset, grounded in `k`. k_prec is
/// computed locally; specificity comes from the scorer when it serves that
/// metric and locally otherwise; q2 needs a scorer (Error(precondition)
/// otherwise). Texts without tokens score 0 on local metrics.
std::vector<RewardVector> score_texts(const std::vector<std::string>& texts, const KnowledgeSource& k,
                                      const std::set<RewardAspect>& subset,
                                      const std::optional<metrics::ScorerEndpoint>& scorer);

struct Annotation {
  Dialogue scored;
  std::string text;
};

/// The agent's reply inside a completion: the first agent-labelled turn when
/// labels are present, otherwise the whole text, with any reward suffix
/// removed. Throws Error(generation_unparseable) when nothing remains.
std::string extract_agent_response(std::string_view raw, const RoleLexicon& lexicon);

class Pipeline {
 public:
  Pipeline(llm::TemplateRegistry registry, llm::Gateway gateway, Scenario scenario = Scenario::meta_review,
           std::optional<metrics::ScorerEndpoint> scorer = std::nullopt);

  void set_lexicon(RoleLexicon lexicon);
  const RoleLexicon& lexicon() const { return lexicon_; }
  Scenario scenario() const { return scenario_; }
  const std::optional<metrics::ScorerEndpoint>& scorer() const { return scorer_; }

  /// Zero-shot generation; unparseable completions are regenerated up to
  /// parse_retry_budget more times.
  Dialogue generate_initial(const KnowledgeSource& k, PromptVariant variant, int parse_retry_budget,
                            const std::string& paper_id = {}) const;

  std::vector<RewardVector> score_texts(const std::vector<std::string>& texts, const KnowledgeSource& k,
                                        const std::set<RewardAspect>& subset) const {
    return remuse::score_texts(texts, k, subset, scorer_);
  }

  Annotation evaluate_and_annotate(const Dialogue& d, const KnowledgeSource& k,
                                   const std::set<RewardAspect>& subset) const;

  FeedbackRecord generate_feedback(std::string_view annotated, const KnowledgeSource& k, FeedbackMode mode,
                                   const std::set<RewardAspect>& subset = kAllAspects) const;

  Dialogue refine(const KnowledgeSource& k, const FeedbackRecord& fb, const Dialogue& d,
                  int parse_retry_budget) const;

  /// One initial generation followed by rc.iterations rounds of
  /// evaluate, feedback and refine. Failures raise TraceAborted.
  RefinementTrace run(const KnowledgeSource& k, const RemuseConfig& rc, const std::string& paper_id = {}) const;

  /// The rendered response-generation prompt for `history`.
  std::string response_prompt(const KnowledgeSource& k, const Dialogue& history) const;

  /// Agent reply to a history ending on a seeker turn.
  std::string generate_response(const KnowledgeSource& k, const Dialogue& history) const;

  /// rc.iterations rounds of response-level scoring, feedback and rewrite.
  std::string refine_response(const KnowledgeSource& k, const Dialogue& history, const std::string& response,
                              const RemuseConfig& rc) const;

  std::string complete(std::string_view prompt) const { return gateway_.complete(prompt); }

 private:
  std::string render(llm::PromptKind kind, const KnowledgeSource& k, llm::PromptVars vars) const;
  Dialogue complete_dialogue(const std::string& prompt, int parse_retry_budget) const;
  double trace_score(const Dialogue& d, const KnowledgeSource& k, const std::set<RewardAspect>& subset) const;

  llm::TemplateRegistry registry_;
  llm::Gateway gateway_;
  Scenario scenario_;
  std::optional<metrics::ScorerEndpoint> scorer_;
  RoleLexicon lexicon_;
};

}  // namespace forge::remuse
