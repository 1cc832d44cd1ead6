#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "forge/reward.hpp"
#include "json.hpp"

namespace forge {

enum class Role { seeker, agent };
enum class Provenance { initial, refined, human, live };
enum class PaperType { long_paper, short_paper };
enum class Scenario { meta_review, debate, product_buying };

std::string_view to_string(Role r);
std::string_view to_string(Provenance p);
std::string_view to_string(PaperType t);  // "long" / "short"
std::string_view to_string(Scenario s);

Role role_from_string(std::string_view s);
Provenance provenance_from_string(std::string_view s);
PaperType paper_type_from_string(std::string_view s);
Scenario scenario_from_string(std::string_view s);

struct Utterance {
  Role role = Role::seeker;
  std::string text;
  std::optional<RewardVector> rewards;

  friend bool operator==(const Utterance&, const Utterance&) = default;
};

struct Dialogue {
  std::string paper_id;
  std::vector<Utterance> utterances;
  Provenance provenance = Provenance::initial;

  friend bool operator==(const Dialogue&, const Dialogue&) = default;
};

/// Throws Error(validation) if roles do not alternate or a text is blank.
void validate(const Dialogue& d);

/// A copy of `d` with every reward annotation removed.
Dialogue strip_rewards(Dialogue d);

struct KnowledgeDocument {
  std::string label;
  std::string body;

  friend bool operator==(const KnowledgeDocument&, const KnowledgeDocument&) = default;
};

struct KnowledgeSource {
  std::string title;
  PaperType paper_type = PaperType::long_paper;
  std::vector<KnowledgeDocument> documents;

  friend bool operator==(const KnowledgeSource&, const KnowledgeSource&) = default;
};

void validate(const KnowledgeSource& k);

/// "Title: <title>\nType: <type>\n<label>: <body>\n..." in document order.
std::string knowledge_text(const KnowledgeSource& k);

/// Title and document bodies without labels; the text utterances are
/// grounded against when computing knowledge precision.
std::string grounding_text(const KnowledgeSource& k);

// Maps speaker labels as they appear in transcripts onto roles. Lookup is
// insensitive to case, spacing and punctuation, so "Meta-Reviewer",
// "Meta Reviewer" and "MetaReviewer" resolve to the same entry. The first
// label registered for a role is the one used when rendering.
class RoleLexicon {
 public:
  RoleLexicon() = default;

  static RoleLexicon for_scenario(Scenario s);
  static RoleLexicon from_json(const nlohmann::json& j);

  void add(std::string label, Role role);
  std::optional<Role> lookup(std::string_view label) const;
  const std::string& label_for(Role role) const;

  /// Throws Error(validation) unless both roles have at least one label.
  void validate() const;

  // Role the first utterance must carry, when the scenario fixes one.
  std::optional<Role> opening_role;

 private:
  std::vector<std::pair<std::string, Role>> labels_;
  std::map<std::string, Role> index_;
};

struct LabeledLine {
  Role role;
  std::string_view rest;  // text after the label's colon
};

/// Recognises "<Label>: text" at the start of a line, ignoring markdown
/// decorations around the label.
std::optional<LabeledLine> match_label(std::string_view line, const RoleLexicon& lexicon);

/// Splits a raw transcript into role-alternating utterances. Throws
/// Error(unparseable_transcript) when no known label is present or the
/// opening role is wrong, Error(too_short) when fewer than two turns remain.
Dialogue parse_transcript(std::string_view raw,
                          const RoleLexicon& lexicon = RoleLexicon::for_scenario(Scenario::meta_review));

/// One "<Label>: <text>" line per utterance, optionally followed by the
/// reward suffix. Throws Error(missing_rewards) when with_rewards is set and
/// an utterance carries no rewards.
std::string render_transcript(const Dialogue& d, bool with_rewards,
                              const RoleLexicon& lexicon = RoleLexicon::for_scenario(Scenario::meta_review));

/// ", F1: a, NLI: b, Kprec: c, Specificity: d" for the fields present,
/// two decimals each. Empty when no field is present.
std::string format_reward_suffix(const RewardVector& r);

struct RewardSuffix {
  std::size_t start = 0;  // offset where the suffix (including its separator) begins
  RewardVector rewards;
};

/// Detects a reward annotation anchored at the end of `text`.
std::optional<RewardSuffix> find_reward_suffix(std::string_view text);

void to_json(nlohmann::json& j, const Utterance& u);
void from_json(const nlohmann::json& j, Utterance& u);
void to_json(nlohmann::json& j, const Dialogue& d);
void from_json(const nlohmann::json& j, Dialogue& d);

}  // namespace forge
