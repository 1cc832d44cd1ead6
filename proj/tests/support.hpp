#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "forge/corpus.hpp"
#include "forge/llm.hpp"
#include "forge/remuse.hpp"
#include "httplib.h"

namespace forge::test {

namespace fs = std::filesystem;

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    std::random_device rd;
    path_ = fs::temp_directory_path() /
            ("forge-test-" + std::to_string(rd()) + "-" + std::to_string(counter++));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

inline std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const fs::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << content;
}

inline std::vector<std::string> lines_of(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

// Three-review paper whose reviews are plain declarative sentences, so an
// utterance copied from any of them has knowledge precision 1.
inline corpus::PaperRecord paper(const std::string& id, std::size_t reviews = 3) {
  corpus::PaperRecord r;
  r.id = id;
  r.title = "Sparse Attention for Long Documents " + id;
  r.paper_type = PaperType::long_paper;
  const std::vector<std::string> pool = {
      "The method improves accuracy on three benchmarks.",
      "The ablation study is missing for the sparse attention module.",
      "The writing is clear but the baselines are weak.",
      "Reviewer confidence is high and the results look reproducible.",
      "The evaluation ignores long documents beyond 4096 tokens.",
  };
  for (std::size_t i = 0; i < reviews; ++i) r.reviews.push_back(pool[i % pool.size()]);
  r.meta_review = "The paper is accepted.";
  r.decision = corpus::Decision::accept;
  return r;
}

inline llm::ProviderConfig quick_provider() {
  llm::ProviderConfig cfg;
  cfg.base_url = "http://127.0.0.1:1";
  cfg.model_name = "mock";
  cfg.retry_budget = 0;
  cfg.backoff = {std::chrono::milliseconds(0)};
  return cfg;
}

inline llm::TemplateRegistry templates() { return llm::TemplateRegistry::load_directory(FORGE_TEST_PROMPT_DIR); }

inline remuse::Pipeline pipeline(std::shared_ptr<llm::Provider> provider, Scenario scenario = Scenario::meta_review,
                                 std::optional<metrics::ScorerEndpoint> scorer = std::nullopt,
                                 llm::ProviderConfig cfg = quick_provider()) {
  return remuse::Pipeline(templates(), llm::Gateway(cfg, std::move(provider), [](std::chrono::milliseconds) {}),
                          scenario, std::move(scorer));
}

enum class PromptRole { initial, feedback, refine, response, response_feedback, response_refine };

// Identifies which template produced a prompt from its instruction line.
inline PromptRole classify(const std::string& prompt) {
  if (prompt.find("improve the response based on the feedback") != std::string::npos) {
    return PromptRole::response_refine;
  }
  if (prompt.find("feedback to improve the response") != std::string::npos) return PromptRole::response_feedback;
  if (prompt.find("Generate a response") != std::string::npos) return PromptRole::response;
  if (prompt.find("improve the dialogue based on the feedback") != std::string::npos) return PromptRole::refine;
  if (prompt.find("feedback to improve the dialogues") != std::string::npos) return PromptRole::feedback;
  return PromptRole::initial;
}

// Responder for the dialogue loop: fixed initial transcript and feedback,
// refinements produced by `refiner` from the round number (1-based).
inline std::shared_ptr<llm::ScriptedProvider> loop_provider(std::string initial, std::string feedback,
                                                            std::function<std::string(int)> refiner) {
  auto rounds = std::make_shared<std::atomic<int>>(0);
  return std::make_shared<llm::ScriptedProvider>(
      [initial, feedback, refiner, rounds](const llm::CompletionRequest& req) -> std::string {
        switch (classify(req.prompt)) {
          case PromptRole::initial: return initial;
          case PromptRole::feedback: return feedback;
          case PromptRole::refine: return refiner(++*rounds);
          default: return "Dialogue Agent: unexpected prompt";
        }
      });
}

inline const char* kInitialTranscript =
    "Meta-Reviewer: What do the reviewers think about the results?\n"
    "Dialogue Agent: I think they probably like it overall, honestly.\n"
    "Meta-Reviewer: Is anything missing?\n"
    "Dialogue Agent: Perhaps some things could maybe be better.";

// Agent turns copied from the reviews of paper().
inline const char* kGroundedTranscript =
    "Meta-Reviewer: What do the reviewers think about the results?\n"
    "Dialogue Agent: The method improves accuracy on three benchmarks.\n"
    "Meta-Reviewer: Is anything missing?\n"
    "Dialogue Agent: The ablation study is missing for the sparse attention module.";

// httplib server on an ephemeral port, serving from a background thread.
class MockServer {
 public:
  explicit MockServer(const std::function<void(httplib::Server&)>& routes) {
    routes(server_);
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~MockServer() {
    server_.stop();
    if (thread_.joinable()) thread_.join();
  }
  MockServer(const MockServer&) = delete;
  MockServer& operator=(const MockServer&) = delete;

  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }
  int port() const { return port_; }

 private:
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
};

// A port nothing listens on: bind, remember, release.
inline std::string dead_url() {
  httplib::Server probe;
  int port = probe.bind_to_any_port("127.0.0.1");
  return "http://127.0.0.1:" + std::to_string(port);
}

}  // namespace forge::test
