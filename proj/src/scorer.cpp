#include "forge/scorer.hpp"

#include <future>
#include <string>
#include <variant>

#include "forge/error.hpp"
#include "http_util.hpp"
#include "httplib.h"

namespace forge::metrics {

namespace {

struct Unavailable {
  std::string reason;
};

using ChunkResult = std::variant<std::vector<double>, Unavailable>;

ChunkResult post_chunk(const ScorerEndpoint& endpoint, const std::string& metric,
                       const std::vector<ScoreItem>& items, std::size_t begin, std::size_t end) {
  nlohmann::json body{{"metric", metric}, {"items", nlohmann::json::array()}};
  for (std::size_t i = begin; i < end; ++i) {
    const auto& item = items[i];
    body["items"].push_back({{"utterance", item.utterance},
                             {"knowledge", item.knowledge},
                             {"reference", item.reference ? nlohmann::json(*item.reference) : nlohmann::json()}});
  }

  auto url = detail::split_url(endpoint.base_url);
  httplib::Client client(url.origin);
  auto secs = std::chrono::duration_cast<std::chrono::seconds>(endpoint.timeout);
  auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(endpoint.timeout - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());
  client.set_write_timeout(secs.count(), usecs.count());

  auto res = client.Post(url.path_prefix + "/score", body.dump(), "application/json");
  if (!res) return Unavailable{"scorer at " + endpoint.base_url + ": " + httplib::to_string(res.error())};
  if (res->status >= 500 || res->status == 429 || res->status == 408) {
    return Unavailable{"scorer at " + endpoint.base_url + " returned HTTP " + std::to_string(res->status)};
  }
  if (res->status != 200) {
    throw Error(ErrorKind::protocol, "scorer returned HTTP " + std::to_string(res->status) + " for " + metric);
  }

  auto reply = nlohmann::json::parse(res->body, nullptr, false);
  if (reply.is_discarded() || !reply.is_object() || !reply.contains("scores") || !reply["scores"].is_array()) {
    throw Error(ErrorKind::protocol, "scorer reply for " + metric + " is not {\"scores\": [...]}");
  }
  const auto& scores = reply["scores"];
  if (scores.size() != end - begin) {
    throw Error(ErrorKind::protocol, "scorer returned " + std::to_string(scores.size()) + " scores for " +
                                         std::to_string(end - begin) + " items");
  }
  std::vector<double> out;
  out.reserve(scores.size());
  for (const auto& s : scores) {
    if (!s.is_number()) throw Error(ErrorKind::protocol, "non-numeric score in reply for " + metric);
    double v = s.get<double>();
    if (!(v >= 0.0 && v <= 1.0)) {
      throw Error(ErrorKind::protocol, metric + " score " + std::to_string(v) + " is outside [0, 1]");
    }
    out.push_back(v);
  }
  return out;
}

}  // namespace

void ScorerEndpoint::validate() const {
  if (metric_names.empty()) throw Error(ErrorKind::validation, "scorer endpoint lists no metrics");
  if (batch_size == 0 || max_concurrency == 0) {
    throw Error(ErrorKind::validation, "scorer batch_size and max_concurrency must be positive");
  }
  (void)detail::split_url(base_url);
}

ScorerEndpoint ScorerEndpoint::from_json(const nlohmann::json& j) {
  ScorerEndpoint e;
  e.base_url = j.at("base_url").get<std::string>();
  for (const auto& m : j.at("metric_names")) e.metric_names.insert(m.get<std::string>());
  if (j.contains("timeout_ms")) e.timeout = std::chrono::milliseconds(j["timeout_ms"].get<long>());
  if (j.contains("unavailable_policy")) {
    auto p = j["unavailable_policy"].get<std::string>();
    if (p == "omit") e.unavailable_policy = UnavailablePolicy::omit;
    else if (p == "fail") e.unavailable_policy = UnavailablePolicy::fail;
    else throw Error(ErrorKind::validation, "unavailable_policy must be omit or fail");
  }
  if (j.contains("batch_size")) e.batch_size = j["batch_size"].get<std::size_t>();
  if (j.contains("max_concurrency")) e.max_concurrency = j["max_concurrency"].get<std::size_t>();
  e.validate();
  return e;
}

nlohmann::json ScorerEndpoint::to_json() const {
  return {{"base_url", base_url},
          {"metric_names", metric_names},
          {"timeout_ms", timeout.count()},
          {"unavailable_policy", unavailable_policy == UnavailablePolicy::omit ? "omit" : "fail"},
          {"batch_size", batch_size},
          {"max_concurrency", max_concurrency}};
}

std::optional<std::vector<double>> request_metric(const ScorerEndpoint& endpoint, const std::string& metric,
                                                  const std::vector<ScoreItem>& items) {
  endpoint.validate();
  if (items.empty()) throw Error(ErrorKind::invalid_argument, "no items to score");

  std::vector<std::pair<std::size_t, std::size_t>> chunks;
  for (std::size_t b = 0; b < items.size(); b += endpoint.batch_size) {
    chunks.emplace_back(b, std::min(items.size(), b + endpoint.batch_size));
  }

  // Chunks run in waves of max_concurrency; results are stitched back in
  // chunk order regardless of completion order.
  std::vector<double> scores;
  scores.reserve(items.size());
  std::optional<Unavailable> unavailable;
  for (std::size_t w = 0; w < chunks.size(); w += endpoint.max_concurrency) {
    std::vector<std::future<ChunkResult>> wave;
    for (std::size_t c = w; c < std::min(chunks.size(), w + endpoint.max_concurrency); ++c) {
      wave.push_back(std::async(std::launch::async, post_chunk, std::cref(endpoint), std::cref(metric),
                                std::cref(items), chunks[c].first, chunks[c].second));
    }
    for (auto& f : wave) {
      auto result = f.get();
      if (auto* u = std::get_if<Unavailable>(&result)) {
        if (!unavailable) unavailable = *u;
        continue;
      }
      auto& part = std::get<std::vector<double>>(result);
      scores.insert(scores.end(), part.begin(), part.end());
    }
  }

  if (unavailable) {
    if (endpoint.unavailable_policy == UnavailablePolicy::fail) {
      throw Error(ErrorKind::scorer_unavailable, unavailable->reason);
    }
    return std::nullopt;
  }
  return scores;
}

std::vector<RewardVector> request_scores(const ScorerEndpoint& endpoint, const std::vector<ScoreItem>& items) {
  endpoint.validate();
  if (items.empty()) throw Error(ErrorKind::invalid_argument, "no items to score");
  std::vector<RewardVector> out(items.size());
  for (const auto& name : endpoint.metric_names) {
    auto metric = metric_from_name(name);
    if (!metric) continue;
    auto scores = request_metric(endpoint, name, items);
    if (!scores) continue;
    for (std::size_t i = 0; i < items.size(); ++i) out[i].set(*metric, (*scores)[i]);
  }
  return out;
}

}  // namespace forge::metrics
