#include "forge/corpus.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <set>
#include <unordered_set>

#include "forge/error.hpp"
#include "forge/metrics.hpp"
#include "text_util.hpp"

namespace forge::corpus {

std::string_view to_string(Decision d) {
  switch (d) {
    case Decision::accept: return "accept";
    case Decision::reject: return "reject";
    case Decision::unknown: return "unknown";
  }
  return "";
}

Decision decision_from_string(std::string_view s) {
  if (s == "accept") return Decision::accept;
  if (s == "reject") return Decision::reject;
  if (s == "unknown") return Decision::unknown;
  throw Error(ErrorKind::validation, "decision must be accept, reject or unknown, got '" + std::string(s) + "'");
}

namespace {

const std::set<std::string> kRecordFields = {"id", "title", "paper_type", "reviews", "meta_review", "decision"};

const nlohmann::json& require_string(const nlohmann::json& j, const char* field) {
  if (!j.contains(field)) throw Error(ErrorKind::malformed_record, std::string("missing field \"") + field + "\"");
  const auto& v = j[field];
  if (!v.is_string()) throw Error(ErrorKind::malformed_record, std::string("field \"") + field + "\" must be a string");
  return v;
}

}  // namespace

PaperRecord parse_record(std::string_view line) {
  auto j = nlohmann::json::parse(line, nullptr, false);
  if (j.is_discarded()) throw Error(ErrorKind::malformed_record, "not a valid JSON object");
  if (!j.is_object()) throw Error(ErrorKind::malformed_record, "record must be an object");
  for (const auto& [key, _] : j.items()) {
    if (!kRecordFields.count(key)) throw Error(ErrorKind::malformed_record, "unknown field \"" + key + "\"");
  }

  PaperRecord r;
  r.id = require_string(j, "id").get<std::string>();
  if (detail::trim(r.id).empty()) throw Error(ErrorKind::malformed_record, "field \"id\" is empty");
  r.title = require_string(j, "title").get<std::string>();
  try {
    r.paper_type = paper_type_from_string(require_string(j, "paper_type").get<std::string>());
  } catch (const Error& e) {
    throw Error(ErrorKind::malformed_record, e.what());
  }

  if (!j.contains("reviews")) throw Error(ErrorKind::malformed_record, "missing field \"reviews\"");
  if (!j["reviews"].is_array()) throw Error(ErrorKind::malformed_record, "field \"reviews\" must be an array");
  for (const auto& review : j["reviews"]) {
    if (!review.is_string()) throw Error(ErrorKind::malformed_record, "every review must be a string");
    auto text = review.get<std::string>();
    if (detail::trim(text).empty()) throw Error(ErrorKind::malformed_record, "empty review text");
    r.reviews.push_back(std::move(text));
  }
  if (r.reviews.empty()) throw Error(ErrorKind::malformed_record, "field \"reviews\" is empty");

  if (j.contains("meta_review") && !j["meta_review"].is_null()) {
    r.meta_review = require_string(j, "meta_review").get<std::string>();
  }
  if (j.contains("decision") && !j["decision"].is_null()) {
    try {
      r.decision = decision_from_string(require_string(j, "decision").get<std::string>());
    } catch (const Error& e) {
      throw Error(ErrorKind::malformed_record, e.what());
    }
  }
  return r;
}

nlohmann::json record_to_json(const PaperRecord& r) {
  nlohmann::json j{{"id", r.id}, {"title", r.title}, {"paper_type", forge::to_string(r.paper_type)},
                   {"reviews", r.reviews}, {"decision", to_string(r.decision)}};
  if (r.meta_review) j["meta_review"] = *r.meta_review;
  return j;
}

std::vector<PaperRecord> load_corpus(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io, "cannot open corpus file " + path.string());

  std::vector<PaperRecord> records;
  std::unordered_set<std::string> ids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    PaperRecord r;
    try {
      r = parse_record(line);
    } catch (const Error& e) {
      throw Error(ErrorKind::malformed_record, path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    if (!ids.insert(r.id).second) {
      throw Error(ErrorKind::duplicate_id,
                  path.string() + ":" + std::to_string(line_no) + ": duplicate id \"" + r.id + "\"");
    }
    records.push_back(std::move(r));
  }
  return records;
}

void write_corpus(const std::filesystem::path& path, const std::vector<PaperRecord>& records) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorKind::io, "cannot write " + path.string());
  for (const auto& r : records) out << record_to_json(r).dump() << '\n';
}

KnowledgeSource knowledge_source(const PaperRecord& r) {
  KnowledgeSource k;
  k.title = r.title;
  k.paper_type = r.paper_type;
  for (std::size_t i = 0; i < r.reviews.size(); ++i) {
    k.documents.push_back({"Review " + std::to_string(i + 1), r.reviews[i]});
  }
  return k;
}

std::vector<PaperRecord> filter_by_review_count(const std::vector<PaperRecord>& records, std::size_t n) {
  if (n < 1) throw Error(ErrorKind::invalid_argument, "review count must be >= 1");
  std::vector<PaperRecord> out;
  for (const auto& r : records) {
    if (r.reviews.size() == n) out.push_back(r);
  }
  return out;
}

std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::mt19937_64 rng(seed);
  for (std::size_t i = n; i > 1; --i) {
    // Uniform draw in [0, i) by rejection; std::uniform_int_distribution is
    // implementation-defined and would make splits differ across toolchains.
    const std::uint64_t bound = i;
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t draw;
    do {
      draw = rng();
    } while (draw >= limit);
    std::swap(order[i - 1], order[static_cast<std::size_t>(draw % bound)]);
  }
  return order;
}

CorpusSplit split_corpus(const std::vector<PaperRecord>& records, const SplitRatios& ratios, std::uint64_t seed) {
  if (records.empty()) throw Error(ErrorKind::invalid_argument, "cannot split an empty corpus");
  if (ratios.train < 0 || ratios.validation < 0 || ratios.test < 0 ||
      std::abs(ratios.train + ratios.validation + ratios.test - 1.0) > 1e-9) {
    throw Error(ErrorKind::invalid_argument, "split ratios must be non-negative and sum to 1");
  }

  const std::size_t n = records.size();
  // The epsilon keeps products like 0.2 * 15 = 2.9999999999999996 from flooring low.
  auto portion = [n](double ratio) { return static_cast<std::size_t>(std::floor(ratio * static_cast<double>(n) + 1e-9)); };
  const std::size_t n_val = portion(ratios.validation);
  const std::size_t n_test = portion(ratios.test);

  CorpusSplit split;
  split.seed = seed;
  auto order = seeded_permutation(n, seed);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& r = records[order[i]];
    if (i < n_val) split.validation.push_back(r);
    else if (i < n_val + n_test) split.test.push_back(r);
    else split.train.push_back(r);
  }
  return split;
}

nlohmann::json StatsReport::to_json() const {
  nlohmann::json ngrams = nlohmann::json::object();
  for (const auto& [n, count] : distinct_ngrams) ngrams[std::to_string(n)] = count;
  return {{"dialogue_count", dialogue_count},
          {"avg_agent_tokens", avg_agent_tokens},
          {"avg_seeker_tokens", avg_seeker_tokens},
          {"avg_turns", avg_turns},
          {"distinct_ngrams", ngrams}};
}

StatsReport corpus_stats(const std::vector<Dialogue>& dialogues) {
  if (dialogues.empty()) throw Error(ErrorKind::invalid_argument, "no dialogues to summarize");

  StatsReport report;
  report.dialogue_count = dialogues.size();
  std::size_t agent_tokens = 0, agent_utts = 0, seeker_tokens = 0, seeker_utts = 0, turns = 0;
  std::vector<std::string> seeker_texts;
  for (const auto& d : dialogues) {
    turns += d.utterances.size();
    for (const auto& u : d.utterances) {
      auto count = metrics::tokenize(u.text).size();
      if (u.role == Role::agent) {
        agent_tokens += count;
        ++agent_utts;
      } else {
        seeker_tokens += count;
        ++seeker_utts;
        seeker_texts.push_back(u.text);
      }
    }
  }
  auto ratio = [](std::size_t a, std::size_t b) { return b == 0 ? 0.0 : static_cast<double>(a) / static_cast<double>(b); };
  report.avg_agent_tokens = ratio(agent_tokens, agent_utts);
  report.avg_seeker_tokens = ratio(seeker_tokens, seeker_utts);
  report.avg_turns = ratio(turns, dialogues.size());
  for (int n : {2, 3, 4}) report.distinct_ngrams[n] = metrics::distinct_ngrams(seeker_texts, n);
  return report;
}

}  // namespace forge::corpus
