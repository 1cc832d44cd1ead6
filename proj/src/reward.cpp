#include "forge/reward.hpp"

#include <string>

#include "forge/error.hpp"

namespace forge {

std::string_view metric_name(Metric m) {
  switch (m) {
    case Metric::k_prec: return "k_prec";
    case Metric::q2_f1: return "q2_f1";
    case Metric::q2_nli: return "q2_nli";
    case Metric::specificity: return "specificity";
  }
  return "";
}

std::optional<Metric> metric_from_name(std::string_view name) {
  for (Metric m : kAllMetrics) {
    if (metric_name(m) == name) return m;
  }
  return std::nullopt;
}

std::optional<double> RewardVector::get(Metric m) const {
  switch (m) {
    case Metric::k_prec: return k_prec;
    case Metric::q2_f1: return q2_f1;
    case Metric::q2_nli: return q2_nli;
    case Metric::specificity: return specificity;
  }
  return std::nullopt;
}

void RewardVector::set(Metric m, std::optional<double> value) {
  switch (m) {
    case Metric::k_prec: k_prec = value; break;
    case Metric::q2_f1: q2_f1 = value; break;
    case Metric::q2_nli: q2_nli = value; break;
    case Metric::specificity: specificity = value; break;
  }
}

bool RewardVector::empty() const {
  return !k_prec && !q2_f1 && !q2_nli && !specificity;
}

void validate(const RewardVector& rewards) {
  for (Metric m : kAllMetrics) {
    auto v = rewards.get(m);
    if (v && !(*v >= 0.0 && *v <= 1.0)) {
      throw Error(ErrorKind::validation,
                  std::string(metric_name(m)) + " = " + std::to_string(*v) + " is outside [0, 1]");
    }
  }
}

void to_json(nlohmann::json& j, const RewardVector& r) {
  j = nlohmann::json::object();
  for (Metric m : kAllMetrics) {
    if (auto v = r.get(m)) j[std::string(metric_name(m))] = *v;
  }
}

void from_json(const nlohmann::json& j, RewardVector& r) {
  if (!j.is_object()) throw Error(ErrorKind::malformed_record, "rewards must be an object");
  r = RewardVector{};
  for (const auto& [key, value] : j.items()) {
    auto m = metric_from_name(key);
    if (!m) throw Error(ErrorKind::malformed_record, "unknown reward field '" + key + "'");
    if (value.is_null()) continue;
    if (!value.is_number()) throw Error(ErrorKind::malformed_record, "reward '" + key + "' is not a number");
    r.set(*m, value.get<double>());
  }
  validate(r);
}

}  // namespace forge
