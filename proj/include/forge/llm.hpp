#pragma once

#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "forge/dialogue.hpp"
#include "forge/error.hpp"
#include "json.hpp"

namespace forge::llm {

struct ProviderConfig {
  std::string base_url;
  std::string model_name;
  std::string api_key_env;  // name of the environment variable holding the key
  double temperature = 0.95;
  double top_p = 0.95;
  std::optional<int> max_tokens;
  int retry_budget = 3;
  std::vector<std::chrono::milliseconds> backoff{std::chrono::milliseconds(1000), std::chrono::milliseconds(2000),
                                                 std::chrono::milliseconds(4000)};
  std::size_t max_concurrency = 4;
  std::chrono::milliseconds timeout{120000};

  void validate() const;

  /// Delay before retry number `retry` (0-based); the last entry repeats.
  std::chrono::milliseconds delay_before_retry(int retry) const;

  /// Rejects an inline "api_key" field: keys only come from the environment.
  static ProviderConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

struct CompletionRequest {
  std::string model;
  std::string prompt;
  double temperature = 0.95;
  double top_p = 0.95;
  std::optional<int> max_tokens;
};

// Chat-completion backend. Implementations report failures as forge::Error
// with kind transient (rate limit, timeout, 5xx), context_overflow, auth or
// provider; the gateway retries only transient ones.
class Provider {
 public:
  virtual ~Provider() = default;
  virtual std::string send(const CompletionRequest& request) = 0;
};

/// OpenAI-style POST {base_url}/chat/completions with a single user message.
class HttpProvider : public Provider {
 public:
  explicit HttpProvider(ProviderConfig cfg);
  std::string send(const CompletionRequest& request) override;

  static nlohmann::json request_body(const CompletionRequest& request);
  /// Maps an HTTP status and body onto a completion or a typed Error.
  static std::string interpret_response(int status, const std::string& body);

 private:
  ProviderConfig cfg_;
};

// Deterministic test double. Either replays a fixed script of replies and
// failures in call order, or answers through a function of the request.
class ScriptedProvider : public Provider {
 public:
  using Step = std::variant<std::string, ErrorKind>;
  using Responder = std::function<std::string(const CompletionRequest&)>;

  explicit ScriptedProvider(std::vector<Step> script);
  explicit ScriptedProvider(Responder responder);

  std::string send(const CompletionRequest& request) override;

  std::size_t calls() const;
  std::vector<std::string> prompts() const;

 private:
  mutable std::mutex mu_;
  std::deque<Step> script_;
  Responder responder_;
  std::vector<std::string> prompts_;
};

class Gateway {
 public:
  using Sleeper = std::function<void(std::chrono::milliseconds)>;

  Gateway(ProviderConfig cfg, std::shared_ptr<Provider> provider, Sleeper sleeper = {});

  /// Completion text for `prompt`. Transient failures are retried up to
  /// retry_budget times; exhaustion raises Error(gateway_unavailable).
  /// Other failures propagate unchanged on the first attempt.
  std::string complete(std::string_view prompt) const;

  const ProviderConfig& config() const { return cfg_; }

 private:
  class Slots {
   public:
    explicit Slots(std::size_t n) : free_(n) {}
    void acquire();
    void release();

   private:
    std::mutex mu_;
    std::condition_variable cv_;
    std::size_t free_;
  };

  ProviderConfig cfg_;
  std::shared_ptr<Provider> provider_;
  Sleeper sleeper_;
  std::shared_ptr<Slots> slots_;
};

// ---------------------------------------------------------------------------
// Prompt templates

enum class PromptKind {
  initial_extensive,
  initial_paraphrased,
  initial_tldr,
  feedback_generic,
  feedback_actionable,
  feedback_rewarded,
  refine,
  response_generate,
  response_feedback,
  response_refine,
};

inline constexpr PromptKind kAllPromptKinds[] = {
    PromptKind::initial_extensive, PromptKind::initial_paraphrased, PromptKind::initial_tldr,
    PromptKind::feedback_generic,  PromptKind::feedback_actionable, PromptKind::feedback_rewarded,
    PromptKind::refine,            PromptKind::response_generate,   PromptKind::response_feedback,
    PromptKind::response_refine,
};

std::string_view to_string(PromptKind k);
PromptKind prompt_kind_from_string(std::string_view s);

/// Placeholders a template of this kind must contain.
std::vector<std::string> required_placeholders(PromptKind k);

struct PromptTemplate {
  std::string id;  // "<scenario>/<kind>"
  Scenario scenario = Scenario::meta_review;
  PromptKind kind = PromptKind::initial_extensive;
  std::string body;
};

using PromptVars = std::map<std::string, std::string>;

/// "{name}" placeholders in `body`, in order of first appearance.
std::vector<std::string> placeholders_in(std::string_view body);

class TemplateRegistry {
 public:
  static std::string make_id(Scenario s, PromptKind k);

  /// Loads <dir>/<scenario>/<kind>.txt for every file present.
  static TemplateRegistry load_directory(const std::string& dir);
  /// FORGE_PROMPT_DIR from the environment, else the bundled assets.
  static TemplateRegistry load_default();

  void add(PromptTemplate t);
  bool contains(std::string_view id) const;
  const PromptTemplate& get(std::string_view id) const;
  std::size_t size() const { return templates_.size(); }

 private:
  std::map<std::string, PromptTemplate, std::less<>> templates_;
};

/// Substitutes every placeholder in one pass; substituted values are not
/// rescanned. Throws Error(not_found) for an unknown id and
/// Error(invalid_argument) for a placeholder without a value.
std::string render_prompt(const TemplateRegistry& registry, std::string_view template_id, const PromptVars& vars);

}  // namespace forge::llm
