#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "forge/dialogue.hpp"
#include "json.hpp"

namespace forge::corpus {

enum class Decision { accept, reject, unknown };

std::string_view to_string(Decision d);
Decision decision_from_string(std::string_view s);

struct PaperRecord {
  std::string id;
  std::string title;
  PaperType paper_type = PaperType::long_paper;
  std::vector<std::string> reviews;
  std::optional<std::string> meta_review;
  Decision decision = Decision::unknown;

  friend bool operator==(const PaperRecord&, const PaperRecord&) = default;
};

/// Parses one corpus line. Only the documented fields are accepted.
/// Throws Error(malformed_record) with a description of the violation.
PaperRecord parse_record(std::string_view line);
nlohmann::json record_to_json(const PaperRecord& r);

/// One record per non-blank line, in file order. Errors name the 1-based line.
std::vector<PaperRecord> load_corpus(const std::filesystem::path& path);
void write_corpus(const std::filesystem::path& path, const std::vector<PaperRecord>& records);

/// Title, type and reviews labelled "Review 1".."Review n".
KnowledgeSource knowledge_source(const PaperRecord& r);

std::vector<PaperRecord> filter_by_review_count(const std::vector<PaperRecord>& records, std::size_t n);

struct SplitRatios {
  double train = 0.6;
  double validation = 0.2;
  double test = 0.2;
};

struct CorpusSplit {
  std::vector<PaperRecord> train;
  std::vector<PaperRecord> validation;
  std::vector<PaperRecord> test;
  std::uint64_t seed = 0;
};

/// Deterministic shuffle under `seed`, then validation = floor(r_val * N),
/// test = floor(r_test * N), train takes the remainder.
CorpusSplit split_corpus(const std::vector<PaperRecord>& records, const SplitRatios& ratios, std::uint64_t seed);

/// Fisher-Yates permutation of [0, n) from a 64-bit Mersenne Twister with
/// unbiased bounded draws; identical across platforms for a given seed.
std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed);

struct StatsReport {
  std::size_t dialogue_count = 0;
  double avg_agent_tokens = 0.0;
  double avg_seeker_tokens = 0.0;
  double avg_turns = 0.0;
  std::map<int, std::size_t> distinct_ngrams;  // n = 2, 3, 4 over seeker utterances

  nlohmann::json to_json() const;
};

StatsReport corpus_stats(const std::vector<Dialogue>& dialogues);

}  // namespace forge::corpus
