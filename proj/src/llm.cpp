#include "forge/llm.hpp"

#include <cstdlib>
#include <set>
#include <thread>

#include "http_util.hpp"
#include "httplib.h"
#include "text_util.hpp"

namespace forge::llm {

// ---------------------------------------------------------------------------
// ProviderConfig

void ProviderConfig::validate() const {
  if (!(temperature >= 0.0 && temperature <= 2.0)) {
    throw Error(ErrorKind::validation, "temperature must lie in [0, 2]");
  }
  if (!(top_p > 0.0 && top_p <= 1.0)) throw Error(ErrorKind::validation, "top_p must lie in (0, 1]");
  if (retry_budget < 0) throw Error(ErrorKind::validation, "retry_budget must be >= 0");
  if (max_tokens && *max_tokens <= 0) throw Error(ErrorKind::validation, "max_tokens must be positive");
  if (max_concurrency == 0) throw Error(ErrorKind::validation, "max_concurrency must be >= 1");
}

std::chrono::milliseconds ProviderConfig::delay_before_retry(int retry) const {
  if (backoff.empty()) return std::chrono::milliseconds(0);
  auto idx = std::min<std::size_t>(static_cast<std::size_t>(retry), backoff.size() - 1);
  return backoff[idx];
}

ProviderConfig ProviderConfig::from_json(const nlohmann::json& j) {
  static const std::set<std::string> known = {"base_url",     "model_name", "api_key_env",     "temperature",
                                              "top_p",        "max_tokens", "retry_budget",    "backoff_ms",
                                              "max_concurrency", "timeout_ms"};
  if (!j.is_object()) throw Error(ErrorKind::validation, "provider config must be an object");
  if (j.contains("api_key")) {
    throw Error(ErrorKind::validation, "provider config must not contain \"api_key\"; name an environment variable in \"api_key_env\"");
  }
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key)) throw Error(ErrorKind::validation, "unknown provider config field \"" + key + "\"");
  }
  ProviderConfig c;
  c.base_url = j.value("base_url", "");
  c.model_name = j.value("model_name", "");
  c.api_key_env = j.value("api_key_env", "");
  c.temperature = j.value("temperature", c.temperature);
  c.top_p = j.value("top_p", c.top_p);
  if (j.contains("max_tokens") && !j["max_tokens"].is_null()) c.max_tokens = j["max_tokens"].get<int>();
  c.retry_budget = j.value("retry_budget", c.retry_budget);
  if (j.contains("backoff_ms")) {
    c.backoff.clear();
    for (const auto& ms : j["backoff_ms"]) c.backoff.emplace_back(ms.get<long>());
  }
  c.max_concurrency = j.value("max_concurrency", c.max_concurrency);
  if (j.contains("timeout_ms")) c.timeout = std::chrono::milliseconds(j["timeout_ms"].get<long>());
  c.validate();
  return c;
}

nlohmann::json ProviderConfig::to_json() const {
  nlohmann::json backoff_ms = nlohmann::json::array();
  for (auto d : backoff) backoff_ms.push_back(d.count());
  nlohmann::json j{{"base_url", base_url},         {"model_name", model_name},
                   {"api_key_env", api_key_env},   {"temperature", temperature},
                   {"top_p", top_p},               {"retry_budget", retry_budget},
                   {"backoff_ms", backoff_ms},     {"max_concurrency", max_concurrency},
                   {"timeout_ms", timeout.count()}};
  j["max_tokens"] = max_tokens ? nlohmann::json(*max_tokens) : nlohmann::json();
  return j;
}

// ---------------------------------------------------------------------------
// HttpProvider

HttpProvider::HttpProvider(ProviderConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  (void)detail::split_url(cfg_.base_url);
}

nlohmann::json HttpProvider::request_body(const CompletionRequest& request) {
  nlohmann::json body{{"model", request.model},
                      {"messages", nlohmann::json::array({{{"role", "user"}, {"content", request.prompt}}})},
                      {"temperature", request.temperature},
                      {"top_p", request.top_p}};
  if (request.max_tokens) body["max_tokens"] = *request.max_tokens;
  return body;
}

std::string HttpProvider::interpret_response(int status, const std::string& body) {
  if (status == 200) {
    auto j = nlohmann::json::parse(body, nullptr, false);
    if (!j.is_discarded() && j.contains("choices") && j["choices"].is_array() && !j["choices"].empty()) {
      const auto& choice = j["choices"][0];
      if (choice.contains("message") && choice["message"].contains("content") &&
          choice["message"]["content"].is_string()) {
        return choice["message"]["content"].get<std::string>();
      }
      if (choice.contains("text") && choice["text"].is_string()) return choice["text"].get<std::string>();
    }
    throw Error(ErrorKind::provider, "completion response has no choices[0] text");
  }
  if (status == 429 || status == 408 || status >= 500) {
    throw Error(ErrorKind::transient, "provider returned HTTP " + std::to_string(status));
  }
  if (status == 401 || status == 403) {
    throw Error(ErrorKind::auth, "provider rejected credentials (HTTP " + std::to_string(status) + ")");
  }
  auto lower = detail::to_lower(body);
  if (lower.find("context_length") != std::string::npos || lower.find("context length") != std::string::npos ||
      lower.find("maximum context") != std::string::npos || lower.find("too many tokens") != std::string::npos) {
    throw Error(ErrorKind::context_overflow, "prompt exceeds the model context window");
  }
  throw Error(ErrorKind::provider, "provider returned HTTP " + std::to_string(status) + ": " + body.substr(0, 200));
}

std::string HttpProvider::send(const CompletionRequest& request) {
  auto url = detail::split_url(cfg_.base_url);
  httplib::Client client(url.origin);
  auto secs = std::chrono::duration_cast<std::chrono::seconds>(cfg_.timeout);
  client.set_connection_timeout(secs.count(), 0);
  client.set_read_timeout(secs.count(), 0);
  client.set_write_timeout(secs.count(), 0);

  httplib::Headers headers;
  if (!cfg_.api_key_env.empty()) {
    const char* key = std::getenv(cfg_.api_key_env.c_str());
    if (key && *key) headers.emplace("Authorization", std::string("Bearer ") + key);
  }
  auto res = client.Post(url.path_prefix + "/chat/completions", headers, request_body(request).dump(),
                         "application/json");
  if (!res) {
    throw Error(ErrorKind::transient, "provider at " + cfg_.base_url + ": " + httplib::to_string(res.error()));
  }
  return interpret_response(res->status, res->body);
}

// ---------------------------------------------------------------------------
// ScriptedProvider

ScriptedProvider::ScriptedProvider(std::vector<Step> script) : script_(script.begin(), script.end()) {}

ScriptedProvider::ScriptedProvider(Responder responder) : responder_(std::move(responder)) {}

std::string ScriptedProvider::send(const CompletionRequest& request) {
  Step step;
  {
    std::lock_guard lock(mu_);
    prompts_.push_back(request.prompt);
    if (responder_) {
      step = std::string{};
    } else {
      if (script_.empty()) throw Error(ErrorKind::provider, "scripted provider ran out of replies");
      step = script_.front();
      script_.pop_front();
    }
  }
  if (responder_) return responder_(request);
  if (auto* kind = std::get_if<ErrorKind>(&step)) throw Error(*kind, "scripted failure");
  return std::get<std::string>(step);
}

std::size_t ScriptedProvider::calls() const {
  std::lock_guard lock(mu_);
  return prompts_.size();
}

std::vector<std::string> ScriptedProvider::prompts() const {
  std::lock_guard lock(mu_);
  return prompts_;
}

// ---------------------------------------------------------------------------
// Gateway

void Gateway::Slots::acquire() {
  std::unique_lock lock(mu_);
  cv_.wait(lock, [this] { return free_ > 0; });
  --free_;
}

void Gateway::Slots::release() {
  {
    std::lock_guard lock(mu_);
    ++free_;
  }
  cv_.notify_one();
}

Gateway::Gateway(ProviderConfig cfg, std::shared_ptr<Provider> provider, Sleeper sleeper)
    : cfg_(std::move(cfg)), provider_(std::move(provider)), sleeper_(std::move(sleeper)) {
  cfg_.validate();
  if (!provider_) throw Error(ErrorKind::invalid_argument, "gateway needs a provider");
  if (!sleeper_) sleeper_ = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
  slots_ = std::make_shared<Slots>(cfg_.max_concurrency);
}

std::string Gateway::complete(std::string_view prompt) const {
  if (detail::trim(prompt).empty()) throw Error(ErrorKind::invalid_argument, "prompt is empty");

  CompletionRequest request{cfg_.model_name, std::string(prompt), cfg_.temperature, cfg_.top_p, cfg_.max_tokens};
  std::string last_failure;
  for (int attempt = 0; attempt <= cfg_.retry_budget; ++attempt) {
    if (attempt > 0) sleeper_(cfg_.delay_before_retry(attempt - 1));
    slots_->acquire();
    try {
      auto text = provider_->send(request);
      slots_->release();
      return text;
    } catch (const Error& e) {
      slots_->release();
      if (e.kind() != ErrorKind::transient) throw;
      last_failure = e.what();
    } catch (...) {
      slots_->release();
      throw;
    }
  }
  throw Error(ErrorKind::gateway_unavailable, "gave up after " + std::to_string(cfg_.retry_budget + 1) +
                                                  " attempt(s): " + last_failure);
}

}  // namespace forge::llm
