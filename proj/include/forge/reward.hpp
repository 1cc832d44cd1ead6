#pragma once

#include <array>
#include <optional>
#include <string_view>

#include "json.hpp"

namespace forge {

enum class Metric { k_prec, q2_f1, q2_nli, specificity };

inline constexpr std::array<Metric, 4> kAllMetrics = {
    Metric::k_prec, Metric::q2_f1, Metric::q2_nli, Metric::specificity};

/// Wire name of a metric ("k_prec", "q2_f1", "q2_nli", "specificity").
std::string_view metric_name(Metric m);
std::optional<Metric> metric_from_name(std::string_view name);

/// Per-utterance scores. Any subset may be present; present values lie in [0, 1].
struct RewardVector {
  std::optional<double> k_prec;
  std::optional<double> q2_f1;
  std::optional<double> q2_nli;
  std::optional<double> specificity;

  std::optional<double> get(Metric m) const;
  void set(Metric m, std::optional<double> value);
  bool empty() const;

  friend bool operator==(const RewardVector&, const RewardVector&) = default;
};

// Throws Error(validation) when a present value falls outside [0, 1].
void validate(const RewardVector& rewards);

void to_json(nlohmann::json& j, const RewardVector& r);
void from_json(const nlohmann::json& j, RewardVector& r);

}  // namespace forge
