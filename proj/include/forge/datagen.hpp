#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "forge/corpus.hpp"
#include "forge/llm.hpp"
#include "forge/remuse.hpp"
#include "forge/scorer.hpp"
#include "json.hpp"

namespace forge::datagen {

enum class PaperStatus { pending, done, failed, skipped };

std::string_view to_string(PaperStatus s);
PaperStatus paper_status_from_string(std::string_view s);

struct StatusEntry {
  std::string id;
  PaperStatus status = PaperStatus::pending;
  std::string reason;  // failure or skip reason; empty otherwise

  friend bool operator==(const StatusEntry&, const StatusEntry&) = default;
};

struct RunManifest {
  std::string corpus_path;
  std::string output_path;
  std::optional<std::string> trace_path;
  remuse::RemuseConfig remuse;
  llm::ProviderConfig provider;
  std::optional<metrics::ScorerEndpoint> scorer;
  Scenario scenario = Scenario::meta_review;
  std::size_t review_count = 3;  // papers with another review count are skipped; 0 keeps all
  bool resume = false;
  std::vector<StatusEntry> statuses;  // corpus order, one per corpus id

  std::size_t count(PaperStatus s) const;

  nlohmann::json to_json() const;
  static RunManifest from_json(const nlohmann::json& j);

  /// Written to a temporary file and renamed over `path`.
  void save(const std::filesystem::path& path) const;
  static RunManifest load(const std::filesystem::path& path);

  /// "<output_path>.manifest.json"
  std::string manifest_path() const { return output_path + ".manifest.json"; }
};

struct SynthOptions {
  std::size_t workers = 1;
  std::optional<std::size_t> stop_after;  // stop once this many papers were attempted
};

struct SynthResult {
  RunManifest manifest;
  int exit_code = 0;  // 0 all attempted papers done, 2 some failed
  std::size_t written = 0;
};

/// Runs the refinement pipeline over every pending paper of the corpus and
/// appends final dialogues to output_path in corpus order. Per-paper failures
/// are recorded in the manifest; the batch continues. With resume set, a
/// truncated trailing line is dropped and papers already in the output are
/// kept as done. Throws for corpus or output I/O failures.
SynthResult synthesize_dataset(RunManifest manifest, const remuse::Pipeline& pipeline, const SynthOptions& opts = {});

// ---------------------------------------------------------------------------
// Evaluation

struct MetricSummary {
  std::size_t count = 0;
  double mean = 0.0;
  double stddev = 0.0;  // population
};

struct DialogueScores {
  std::size_t line = 0;  // 1-based line in the dataset file
  std::string paper_id;
  RewardVector agent_means;  // k_prec, q2_f1, q2_nli over agent turns
  std::optional<double> specificity_mean;
  std::size_t discrepancies = 0;
};

struct EvalFailure {
  std::size_t line = 0;
  std::string paper_id;
  std::string reason;
};

struct EvalReport {
  std::size_t total = 0;  // dialogues in the file
  std::size_t scored = 0;
  std::size_t failed = 0;
  std::size_t skipped = 0;  // left out by sampling
  std::vector<DialogueScores> dialogues;
  std::vector<EvalFailure> failures;
  // Utterance-level means: agent turns for k_prec and q2, all turns for specificity.
  std::map<std::string, MetricSummary> summary;
  std::size_t discrepancies = 0;  // stored annotations that differ from recomputation

  nlohmann::json to_json() const;
};

struct EvalOptions {
  std::optional<metrics::ScorerEndpoint> scorer;
  std::optional<std::size_t> sample;
  std::uint64_t seed = 0;
};

inline constexpr double kDiscrepancyTolerance = 0.005;

/// Scores are recomputed from the utterance texts; stored annotations only
/// feed the discrepancy count. Throws Error(not_found) listing every paper id
/// missing from the corpus and Error(validation) for an empty dataset.
EvalReport evaluate_dataset(const std::filesystem::path& dataset, const std::filesystem::path& corpus,
                            const EvalOptions& opts = {});

struct ResponseReport {
  std::size_t count = 0;
  double bleu = 0.0;
  MetricSummary k_prec;
  std::optional<MetricSummary> q2_f1;
  std::optional<MetricSummary> q2_nli;
  std::optional<MetricSummary> bertscore;

  nlohmann::json to_json() const;
};

/// Predictions hold {"id", "response"} lines, gold {"id", "paper_id",
/// "response"} lines. Ids must match one to one; the first unmatched id is
/// named in Error(validation).
ResponseReport eval_responses(const std::filesystem::path& predictions, const std::filesystem::path& gold,
                              const std::filesystem::path& corpus,
                              const std::optional<metrics::ScorerEndpoint>& scorer = std::nullopt);

std::vector<Dialogue> load_dataset(const std::filesystem::path& path);

/// Dataset statistics, optionally over a seeded sample of dialogues.
corpus::StatsReport dataset_stats(const std::filesystem::path& dataset, std::optional<std::size_t> sample = {},
                                  std::uint64_t seed = 0);

/// Indices of a seeded sample of size min(k, n), in ascending order.
std::vector<std::size_t> sample_indices(std::size_t n, std::size_t k, std::uint64_t seed);

}  // namespace forge::datagen
