#include "forge/dialogue.hpp"

#include <cctype>
#include <cstdio>
#include <string>

#include "forge/error.hpp"
#include "text_util.hpp"

namespace forge {

using detail::is_space;
using detail::trim;

std::string_view to_string(Role r) { return r == Role::seeker ? "seeker" : "agent"; }

std::string_view to_string(Provenance p) {
  switch (p) {
    case Provenance::initial: return "initial";
    case Provenance::refined: return "refined";
    case Provenance::human: return "human";
    case Provenance::live: return "live";
  }
  return "";
}

std::string_view to_string(PaperType t) { return t == PaperType::long_paper ? "long" : "short"; }

std::string_view to_string(Scenario s) {
  switch (s) {
    case Scenario::meta_review: return "meta_review";
    case Scenario::debate: return "debate";
    case Scenario::product_buying: return "product_buying";
  }
  return "";
}

Role role_from_string(std::string_view s) {
  if (s == "seeker") return Role::seeker;
  if (s == "agent") return Role::agent;
  throw Error(ErrorKind::validation, "unknown role '" + std::string(s) + "'");
}

Provenance provenance_from_string(std::string_view s) {
  for (auto p : {Provenance::initial, Provenance::refined, Provenance::human, Provenance::live}) {
    if (to_string(p) == s) return p;
  }
  throw Error(ErrorKind::validation, "unknown provenance '" + std::string(s) + "'");
}

PaperType paper_type_from_string(std::string_view s) {
  if (s == "long") return PaperType::long_paper;
  if (s == "short") return PaperType::short_paper;
  throw Error(ErrorKind::validation, "paper_type must be \"long\" or \"short\", got '" + std::string(s) + "'");
}

Scenario scenario_from_string(std::string_view s) {
  for (auto sc : {Scenario::meta_review, Scenario::debate, Scenario::product_buying}) {
    if (to_string(sc) == s) return sc;
  }
  throw Error(ErrorKind::validation, "unknown scenario '" + std::string(s) + "'");
}

void validate(const Dialogue& d) {
  for (std::size_t i = 0; i < d.utterances.size(); ++i) {
    const auto& u = d.utterances[i];
    if (trim(u.text).empty()) {
      throw Error(ErrorKind::validation, "utterance " + std::to_string(i) + " has empty text");
    }
    if (i > 0 && d.utterances[i - 1].role == u.role) {
      throw Error(ErrorKind::validation, "roles do not alternate at utterance " + std::to_string(i));
    }
    if (u.rewards) validate(*u.rewards);
  }
}

Dialogue strip_rewards(Dialogue d) {
  for (auto& u : d.utterances) u.rewards.reset();
  return d;
}

void validate(const KnowledgeSource& k) {
  if (k.documents.empty()) throw Error(ErrorKind::validation, "knowledge source has no documents");
  for (std::size_t i = 0; i < k.documents.size(); ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      if (k.documents[i].label == k.documents[j].label) {
        throw Error(ErrorKind::validation, "duplicate document label '" + k.documents[i].label + "'");
      }
    }
  }
}

std::string knowledge_text(const KnowledgeSource& k) {
  std::string out = "Title: " + k.title + "\nType: " + std::string(to_string(k.paper_type)) + "\n";
  for (const auto& doc : k.documents) {
    out += doc.label;
    out += ": ";
    out += doc.body;
    out += "\n";
  }
  return out;
}

std::string grounding_text(const KnowledgeSource& k) {
  std::string out = k.title;
  for (const auto& doc : k.documents) {
    out += "\n";
    out += doc.body;
  }
  return out;
}

// ---------------------------------------------------------------------------
// RoleLexicon

namespace {

std::string normalize_label(std::string_view label) {
  std::string key;
  for (char c : label) {
    auto uc = static_cast<unsigned char>(c);
    if (std::isalnum(uc)) key.push_back(static_cast<char>(std::tolower(uc)));
  }
  return key;
}

struct LexiconEntry {
  Scenario scenario;
  const char* label;
  Role role;
};

// Surface labels seen in generated transcripts, per scenario. The first
// entry for each role is its rendering label.
constexpr LexiconEntry kDefaultLabels[] = {
    {Scenario::meta_review, "Meta-Reviewer", Role::seeker},
    {Scenario::meta_review, "Meta Reviewer", Role::seeker},
    {Scenario::meta_review, "Dialogue Agent", Role::agent},
    {Scenario::debate, "Decision Maker", Role::seeker},
    {Scenario::debate, "Decision-Maker", Role::seeker},
    {Scenario::debate, "Dialogue Agent", Role::agent},
    {Scenario::product_buying, "Buyer", Role::seeker},
    {Scenario::product_buying, "Dialogue Agent", Role::agent},
};

}  // namespace

RoleLexicon RoleLexicon::for_scenario(Scenario s) {
  RoleLexicon lex;
  for (const auto& e : kDefaultLabels) {
    if (e.scenario == s) lex.add(e.label, e.role);
  }
  lex.opening_role = Role::seeker;
  return lex;
}

RoleLexicon RoleLexicon::from_json(const nlohmann::json& j) {
  RoleLexicon lex;
  if (!j.is_object() || !j.contains("labels") || !j["labels"].is_array()) {
    throw Error(ErrorKind::malformed_record, "lexicon needs a \"labels\" array");
  }
  for (const auto& entry : j["labels"]) {
    lex.add(entry.at("label").get<std::string>(), role_from_string(entry.at("role").get<std::string>()));
  }
  if (j.contains("opening_role") && !j["opening_role"].is_null()) {
    lex.opening_role = role_from_string(j["opening_role"].get<std::string>());
  }
  lex.validate();
  return lex;
}

void RoleLexicon::add(std::string label, Role role) {
  auto key = normalize_label(label);
  if (key.empty()) throw Error(ErrorKind::validation, "role label '" + label + "' has no letters");
  if (auto it = index_.find(key); it != index_.end() && it->second != role) {
    throw Error(ErrorKind::validation, "label '" + label + "' already maps to the other role");
  }
  index_.emplace(key, role);
  labels_.emplace_back(std::move(label), role);
}

std::optional<Role> RoleLexicon::lookup(std::string_view label) const {
  auto it = index_.find(normalize_label(label));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

const std::string& RoleLexicon::label_for(Role role) const {
  for (const auto& [label, r] : labels_) {
    if (r == role) return label;
  }
  throw Error(ErrorKind::validation, "lexicon has no label for role " + std::string(to_string(role)));
}

void RoleLexicon::validate() const {
  (void)label_for(Role::seeker);
  (void)label_for(Role::agent);
}

// ---------------------------------------------------------------------------
// Reward annotations

std::string format_reward_suffix(const RewardVector& r) {
  std::string out;
  auto append = [&out](const char* name, const std::optional<double>& v) {
    if (!v) return;
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", *v);
    out += ", ";
    out += name;
    out += ": ";
    out += buf;
  };
  append("F1", r.q2_f1);
  append("NLI", r.q2_nli);
  append("Kprec", r.k_prec);
  append("Specificity", r.specificity);
  return out;
}

namespace {

std::optional<Metric> reward_key(std::string_view key) {
  auto k = normalize_label(key);
  if (k == "f1" || k == "q2f1") return Metric::q2_f1;
  if (k == "nli" || k == "q2nli") return Metric::q2_nli;
  if (k == "kprec" || k == "kprecision") return Metric::k_prec;
  if (k == "specificity" || k == "spec") return Metric::specificity;
  return std::nullopt;
}

bool is_key_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '-';
}

std::size_t skip_space_left(std::string_view s, std::size_t pos) {
  while (pos > 0 && is_space(s[pos - 1])) --pos;
  return pos;
}

struct Pair {
  std::size_t key_start;
  Metric metric;
  double value;
};

// Parses "<Key> : <number>" ending exactly at `end` (trailing spaces allowed).
std::optional<Pair> scan_pair_left(std::string_view s, std::size_t end) {
  std::size_t pos = skip_space_left(s, end);
  std::size_t num_end = pos;
  bool seen_digit = false;
  bool seen_dot = false;
  while (pos > 0) {
    char c = s[pos - 1];
    if (std::isdigit(static_cast<unsigned char>(c))) {
      seen_digit = true;
    } else if (c == '.' && !seen_dot) {
      seen_dot = true;
    } else {
      break;
    }
    --pos;
  }
  if (!seen_digit) return std::nullopt;
  std::string number(s.substr(pos, num_end - pos));
  pos = skip_space_left(s, pos);
  if (pos == 0 || s[pos - 1] != ':') return std::nullopt;
  pos = skip_space_left(s, pos - 1);
  std::size_t key_end = pos;
  while (pos > 0 && is_key_char(s[pos - 1])) --pos;
  if (pos == key_end) return std::nullopt;
  auto metric = reward_key(s.substr(pos, key_end - pos));
  if (!metric) return std::nullopt;
  // The key must start a word: "xF1: 0.2" is not an annotation.
  if (pos > 0 && std::isalnum(static_cast<unsigned char>(s[pos - 1]))) return std::nullopt;
  double value = std::stod(number);
  return Pair{pos, *metric, value};
}

// Position of the separator preceding a pair that starts at `key_start`:
// a comma/semicolon, the word "and", or bare whitespace.
std::size_t separator_start(std::string_view s, std::size_t key_start) {
  std::size_t pos = skip_space_left(s, key_start);
  if (pos > 0 && (s[pos - 1] == ',' || s[pos - 1] == ';')) return pos - 1;
  if (pos >= 3 && detail::to_lower(s.substr(pos - 3, 3)) == "and" &&
      (pos == 3 || is_space(s[pos - 4]))) {
    return pos - 3;
  }
  return pos;
}

}  // namespace

std::optional<RewardSuffix> find_reward_suffix(std::string_view text) {
  RewardVector rewards;
  std::size_t cut = text.size();
  bool any = false;
  while (true) {
    auto pair = scan_pair_left(text, cut);
    if (!pair) break;
    if (!(pair->value >= 0.0 && pair->value <= 1.0)) return std::nullopt;
    if (!rewards.get(pair->metric)) rewards.set(pair->metric, pair->value);
    any = true;
    cut = separator_start(text, pair->key_start);
  }
  if (!any) return std::nullopt;
  if (trim(text.substr(0, cut)).empty()) return std::nullopt;
  return RewardSuffix{cut, rewards};
}

// ---------------------------------------------------------------------------
// Transcript parsing and rendering

namespace {

constexpr std::size_t kMaxLabelLength = 48;

bool is_decoration(char c) { return c == '*' || c == '_' || c == '#' || c == '>' || c == '-' || c == '`'; }

struct Segment {
  Role role;
  std::string text;
};

}  // namespace

std::optional<LabeledLine> match_label(std::string_view line, const RoleLexicon& lexicon) {
  std::size_t start = 0;
  while (start < line.size() && (is_space(line[start]) || is_decoration(line[start]))) ++start;
  auto colon = line.find(':', start);
  if (colon == std::string_view::npos || colon - start > kMaxLabelLength) return std::nullopt;
  auto role = lexicon.lookup(line.substr(start, colon - start));
  if (!role) return std::nullopt;
  std::size_t rest = colon + 1;
  while (rest < line.size() && (line[rest] == '*' || line[rest] == '_')) ++rest;
  return LabeledLine{*role, line.substr(rest)};
}

Dialogue parse_transcript(std::string_view raw, const RoleLexicon& lexicon) {
  if (trim(raw).empty()) throw Error(ErrorKind::unparseable_transcript, "transcript is empty");

  // Single-line transcripts sometimes separate turns with a literal "\n".
  std::string source(raw);
  if (source.find('\n') == std::string::npos) {
    std::string expanded;
    for (std::size_t i = 0; i < source.size(); ++i) {
      if (source[i] == '\\' && i + 1 < source.size() && source[i + 1] == 'n') {
        expanded.push_back('\n');
        ++i;
      } else {
        expanded.push_back(source[i]);
      }
    }
    source = std::move(expanded);
  }

  std::vector<Segment> segments;
  bool any_label = false;
  std::string_view rest(source);
  while (!rest.empty()) {
    auto nl = rest.find('\n');
    std::string_view line = rest.substr(0, nl);
    rest = nl == std::string_view::npos ? std::string_view{} : rest.substr(nl + 1);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);

    if (auto labeled = match_label(line, lexicon)) {
      any_label = true;
      segments.push_back({labeled->role, std::string(trim(labeled->rest))});
    } else if (!segments.empty()) {
      auto& text = segments.back().text;
      if (!text.empty()) text.push_back('\n');
      text += line;
    }
  }
  if (!any_label) throw Error(ErrorKind::unparseable_transcript, "no speaker label found in transcript");

  Dialogue d;
  for (auto& seg : segments) {
    std::string_view text = trim(seg.text);
    std::optional<RewardVector> rewards;
    if (auto suffix = find_reward_suffix(text)) {
      rewards = suffix->rewards;
      text = trim(text.substr(0, suffix->start));
    }
    if (text.empty()) continue;
    if (!d.utterances.empty() && d.utterances.back().role == seg.role) {
      auto& prev = d.utterances.back();
      prev.text += "\n";
      prev.text += text;
      if (rewards) prev.rewards = rewards;
      continue;
    }
    d.utterances.push_back(Utterance{seg.role, std::string(text), rewards});
  }

  if (lexicon.opening_role && !d.utterances.empty() && d.utterances.front().role != *lexicon.opening_role) {
    throw Error(ErrorKind::unparseable_transcript,
                "transcript must open with a " + lexicon.label_for(*lexicon.opening_role) + " turn");
  }
  if (d.utterances.size() < 2) {
    throw Error(ErrorKind::too_short,
                "transcript has " + std::to_string(d.utterances.size()) + " utterance(s); at least 2 required");
  }
  return d;
}

std::string render_transcript(const Dialogue& d, bool with_rewards, const RoleLexicon& lexicon) {
  std::string out;
  for (std::size_t i = 0; i < d.utterances.size(); ++i) {
    const auto& u = d.utterances[i];
    if (i > 0) out.push_back('\n');
    out += lexicon.label_for(u.role);
    out += ": ";
    out += u.text;
    if (with_rewards) {
      if (!u.rewards) {
        throw Error(ErrorKind::missing_rewards, "utterance " + std::to_string(i) + " carries no rewards");
      }
      out += format_reward_suffix(*u.rewards);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Serialization

void to_json(nlohmann::json& j, const Utterance& u) {
  j = nlohmann::json{{"role", to_string(u.role)}, {"text", u.text}};
  if (u.rewards) j["rewards"] = *u.rewards;
}

void from_json(const nlohmann::json& j, Utterance& u) {
  u.role = role_from_string(j.at("role").get<std::string>());
  u.text = j.at("text").get<std::string>();
  u.rewards.reset();
  if (j.contains("rewards") && !j["rewards"].is_null()) u.rewards = j["rewards"].get<RewardVector>();
}

void to_json(nlohmann::json& j, const Dialogue& d) {
  j = nlohmann::json{{"paper_id", d.paper_id}, {"provenance", to_string(d.provenance)}, {"utterances", d.utterances}};
}

void from_json(const nlohmann::json& j, Dialogue& d) {
  d.paper_id = j.at("paper_id").get<std::string>();
  d.provenance = provenance_from_string(j.at("provenance").get<std::string>());
  d.utterances = j.at("utterances").get<std::vector<Utterance>>();
  validate(d);
}

}  // namespace forge
