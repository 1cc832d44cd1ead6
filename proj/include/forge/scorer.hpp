#pragma once

#include <chrono>
#include <cstddef>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "forge/reward.hpp"
#include "json.hpp"

namespace forge::metrics {

enum class UnavailablePolicy { omit, fail };

// An external model-backed scorer speaking the /score protocol:
//   POST {base_url}/score  {"metric": m, "items": [{utterance, knowledge, reference}]}
//   200 -> {"scores": [x, ...]}  one number in [0, 1] per item
struct ScorerEndpoint {
  std::string base_url;
  std::set<std::string> metric_names;
  std::chrono::milliseconds timeout{30000};
  UnavailablePolicy unavailable_policy = UnavailablePolicy::omit;
  std::size_t batch_size = 64;
  std::size_t max_concurrency = 4;

  bool serves(std::string_view metric) const { return metric_names.count(std::string(metric)) != 0; }
  void validate() const;

  static ScorerEndpoint from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

struct ScoreItem {
  std::string utterance;
  std::string knowledge;
  std::optional<std::string> reference;
};

/// Scores for one metric, in item order. Returns nullopt when the scorer is
/// unreachable under the omit policy; throws Error(scorer_unavailable) under
/// the fail policy and Error(protocol) for malformed or out-of-range replies.
std::optional<std::vector<double>> request_metric(const ScorerEndpoint& endpoint, const std::string& metric,
                                                  const std::vector<ScoreItem>& items);

/// One partial RewardVector per item, filled for each of the endpoint's
/// metric names that maps to a reward field.
std::vector<RewardVector> request_scores(const ScorerEndpoint& endpoint, const std::vector<ScoreItem>& items);

}  // namespace forge::metrics
