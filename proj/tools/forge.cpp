#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "forge/assistant.hpp"
#include "forge/corpus.hpp"
#include "forge/datagen.hpp"
#include "forge/llm.hpp"
#include "forge/remuse.hpp"
#include "forge/scorer.hpp"
#include "forge/server.hpp"

namespace {

using namespace forge;

nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io, "cannot read " + path);
  auto j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) throw Error(ErrorKind::validation, path + " is not valid JSON");
  return j;
}

struct ProviderFlags {
  std::string config_file;
  std::string base_url;
  std::string model;
  std::string api_key_env;

  void add(CLI::App* cmd) {
    cmd->add_option("--provider-config", config_file, "JSON provider config");
    cmd->add_option("--base-url", base_url, "Chat-completion API base URL");
    cmd->add_option("--model", model, "Model name");
    cmd->add_option("--api-key-env", api_key_env, "Environment variable holding the API key");
  }

  llm::ProviderConfig build() const {
    llm::ProviderConfig cfg;
    if (!config_file.empty()) cfg = llm::ProviderConfig::from_json(read_json_file(config_file));
    if (!base_url.empty()) cfg.base_url = base_url;
    if (!model.empty()) cfg.model_name = model;
    if (!api_key_env.empty()) cfg.api_key_env = api_key_env;
    if (cfg.base_url.empty()) throw Error(ErrorKind::validation, "provider base URL is not configured");
    cfg.validate();
    return cfg;
  }
};

struct ScorerFlags {
  std::string config_file;
  std::string url;
  std::string metrics = "q2_f1,q2_nli";

  void add(CLI::App* cmd) {
    cmd->add_option("--scorer", url, "Base URL of a /score endpoint");
    cmd->add_option("--scorer-metrics", metrics, "Metrics the scorer serves (comma-separated)")->capture_default_str();
    cmd->add_option("--scorer-config", config_file, "JSON scorer config");
  }

  std::optional<metrics::ScorerEndpoint> build() const {
    if (!config_file.empty()) return metrics::ScorerEndpoint::from_json(read_json_file(config_file));
    if (url.empty()) return std::nullopt;
    metrics::ScorerEndpoint ep;
    ep.base_url = url;
    std::string_view rest(metrics);
    while (!rest.empty()) {
      auto comma = rest.find(',');
      auto item = rest.substr(0, comma);
      if (!item.empty()) ep.metric_names.insert(std::string(item));
      rest = comma == std::string_view::npos ? std::string_view{} : rest.substr(comma + 1);
    }
    ep.validate();
    return ep;
  }
};

llm::TemplateRegistry load_templates(const std::string& dir) {
  return dir.empty() ? llm::TemplateRegistry::load_default() : llm::TemplateRegistry::load_directory(dir);
}

remuse::Pipeline make_pipeline(const llm::ProviderConfig& provider, const std::string& prompt_dir, Scenario scenario,
                               std::optional<metrics::ScorerEndpoint> scorer) {
  llm::Gateway gateway(provider, std::make_shared<llm::HttpProvider>(provider));
  return remuse::Pipeline(load_templates(prompt_dir), gateway, scenario, std::move(scorer));
}

void print(const nlohmann::json& j) { std::cout << j.dump(2) << std::endl; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Knowledge-grounded dialogue synthesis, evaluation and assistant service"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a refined dialogue dataset from a corpus");
  std::string corpus_path, out_path, trace_path, prompt_dir, variant = "extensive", rewards = "k_prec,q2,specificity",
                                                 feedback = "rewarded", scenario = "meta_review";
  int iterations = 1, parse_retries = 2;
  std::size_t review_count = 3, workers = 0;
  bool resume = false, select_best = false;
  ProviderFlags synth_provider;
  ScorerFlags synth_scorer;
  synth->add_option("--corpus", corpus_path, "Corpus JSONL")->required();
  synth->add_option("--out", out_path, "Output dataset JSONL")->required();
  synth->add_option("--trace", trace_path, "Optional sidecar file for full refinement traces");
  synth->add_option("--variant", variant, "extensive|paraphrased|tldr")->capture_default_str();
  synth->add_option("--rewards", rewards, "Reward subset")->capture_default_str();
  synth->add_option("--feedback", feedback, "generic|actionable|rewarded")->capture_default_str();
  synth->add_option("--iterations", iterations, "Refinement rounds")->capture_default_str();
  synth->add_option("--parse-retries", parse_retries, "Regenerations after an unparseable completion")->capture_default_str();
  synth->add_option("--scenario", scenario, "meta_review|debate|product_buying")->capture_default_str();
  synth->add_option("--review-count", review_count, "Keep papers with exactly this many reviews (0 keeps all)")->capture_default_str();
  synth->add_option("--workers", workers, "Parallel papers (default: provider concurrency)");
  synth->add_option("--prompts", prompt_dir, "Prompt template directory");
  synth->add_flag("--resume", resume, "Continue a previous run");
  synth->add_flag("--select-best", select_best, "Keep the best-scoring dialogue of each trace");
  synth_provider.add(synth);
  synth_scorer.add(synth);

  // eval
  auto* eval = app.add_subcommand("eval", "Recompute rewards for a dataset");
  std::string eval_dataset, eval_corpus;
  std::optional<std::size_t> eval_sample;
  std::uint64_t eval_seed = 0;
  ScorerFlags eval_scorer;
  eval->add_option("--dataset", eval_dataset, "Dataset JSONL")->required();
  eval->add_option("--corpus", eval_corpus, "Corpus JSONL")->required();
  eval->add_option("--sample", eval_sample, "Evaluate a seeded sample of N dialogues");
  eval->add_option("--seed", eval_seed, "Sampling seed")->capture_default_str();
  eval_scorer.add(eval);

  // eval-responses
  auto* eval_resp = app.add_subcommand("eval-responses", "Score response predictions against gold responses");
  std::string pred_path, gold_path, resp_corpus;
  ScorerFlags resp_scorer;
  eval_resp->add_option("--pred", pred_path, "Predictions JSONL")->required();
  eval_resp->add_option("--gold", gold_path, "Gold JSONL")->required();
  eval_resp->add_option("--corpus", resp_corpus, "Corpus JSONL")->required();
  resp_scorer.add(eval_resp);

  // stats
  auto* stats = app.add_subcommand("stats", "Dataset statistics");
  std::string stats_dataset;
  std::optional<std::size_t> stats_sample;
  std::uint64_t stats_seed = 0;
  stats->add_option("--dataset", stats_dataset, "Dataset JSONL")->required();
  stats->add_option("--sample", stats_sample, "Use a seeded sample of N dialogues");
  stats->add_option("--seed", stats_seed, "Sampling seed")->capture_default_str();

  // split
  auto* split = app.add_subcommand("split", "Seeded train/validation/test split of a corpus");
  std::string split_corpus, split_dir;
  std::uint64_t split_seed = 0;
  forge::corpus::SplitRatios ratios;
  split->add_option("--corpus", split_corpus, "Corpus JSONL")->required();
  split->add_option("--out-dir", split_dir, "Directory for train/validation/test JSONL")->required();
  split->add_option("--seed", split_seed, "Shuffle seed")->capture_default_str();
  split->add_option("--validation-ratio", ratios.validation, "")->capture_default_str();
  split->add_option("--test-ratio", ratios.test, "")->capture_default_str();

  // serve
  auto* serve = app.add_subcommand("serve", "Run the assistant HTTP service");
  std::string serve_corpus, host = "127.0.0.1", store_path, serve_prompts, serve_scenario = "meta_review",
                            busy = "queue";
  int port = 8080, refine_iterations = 0;
  std::size_t max_prompt_chars = 0;
  bool show_rewards = false;
  ProviderFlags serve_provider;
  ScorerFlags serve_scorer;
  serve->add_option("--corpus", serve_corpus, "Corpus JSONL")->required();
  serve->add_option("--host", host, "Bind address")->capture_default_str();
  serve->add_option("--port", port, "Port")->capture_default_str();
  serve->add_option("--store", store_path, "Session event log (JSONL); in-memory when omitted");
  serve->add_option("--prompts", serve_prompts, "Prompt template directory");
  serve->add_option("--scenario", serve_scenario, "Prompt scenario")->capture_default_str();
  serve->add_option("--refine-iterations", refine_iterations, "Response refinement rounds (0 disables)")->capture_default_str();
  serve->add_option("--max-prompt-chars", max_prompt_chars, "Drop oldest history beyond this prompt size (0: off)")
      ->capture_default_str();
  serve->add_option("--busy", busy, "queue|reject concurrent messages on one session")->capture_default_str();
  serve->add_flag("--show-rewards", show_rewards, "Return k_prec/specificity with each reply");
  serve_provider.add(serve);
  serve_scorer.add(serve);

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) {
      datagen::RunManifest m;
      m.corpus_path = corpus_path;
      m.output_path = out_path;
      if (!trace_path.empty()) m.trace_path = trace_path;
      m.remuse.variant = remuse::prompt_variant_from_string(variant);
      m.remuse.reward_subset = remuse::parse_reward_subset(rewards);
      m.remuse.feedback_mode = remuse::feedback_mode_from_string(feedback);
      m.remuse.iterations = iterations;
      m.remuse.parse_retry_budget = parse_retries;
      m.remuse.select_best = select_best;
      m.remuse.validate();
      m.provider = synth_provider.build();
      m.scorer = synth_scorer.build();
      m.scenario = scenario_from_string(scenario);
      m.review_count = review_count;
      m.resume = resume;
      auto pipeline = make_pipeline(m.provider, prompt_dir, m.scenario, m.scorer);
      datagen::SynthOptions opts;
      opts.workers = workers == 0 ? m.provider.max_concurrency : workers;
      auto result = datagen::synthesize_dataset(m, pipeline, opts);
      print({{"written", result.written},
             {"done", result.manifest.count(datagen::PaperStatus::done)},
             {"failed", result.manifest.count(datagen::PaperStatus::failed)},
             {"skipped", result.manifest.count(datagen::PaperStatus::skipped)},
             {"pending", result.manifest.count(datagen::PaperStatus::pending)},
             {"manifest", result.manifest.manifest_path()}});
      return result.exit_code;
    }
    if (eval->parsed()) {
      datagen::EvalOptions opts;
      opts.scorer = eval_scorer.build();
      opts.sample = eval_sample;
      opts.seed = eval_seed;
      auto report = datagen::evaluate_dataset(eval_dataset, eval_corpus, opts);
      print(report.to_json());
      return report.failed > 0 ? 2 : 0;
    }
    if (eval_resp->parsed()) {
      print(datagen::eval_responses(pred_path, gold_path, resp_corpus, resp_scorer.build()).to_json());
      return 0;
    }
    if (stats->parsed()) {
      print(datagen::dataset_stats(stats_dataset, stats_sample, stats_seed).to_json());
      return 0;
    }
    if (split->parsed()) {
      ratios.train = 1.0 - ratios.validation - ratios.test;
      auto parts = corpus::split_corpus(corpus::load_corpus(split_corpus), ratios, split_seed);
      std::filesystem::create_directories(split_dir);
      auto dir = std::filesystem::path(split_dir);
      corpus::write_corpus(dir / "train.jsonl", parts.train);
      corpus::write_corpus(dir / "validation.jsonl", parts.validation);
      corpus::write_corpus(dir / "test.jsonl", parts.test);
      print({{"train", parts.train.size()},
             {"validation", parts.validation.size()},
             {"test", parts.test.size()},
             {"seed", parts.seed}});
      return 0;
    }
    if (serve->parsed()) {
      auto provider = serve_provider.build();
      assistant::AssistantConfig cfg;
      cfg.show_rewards = show_rewards;
      cfg.max_prompt_chars = max_prompt_chars;
      if (busy == "reject") {
        cfg.busy_policy = assistant::BusyPolicy::reject;
      } else if (busy != "queue") {
        throw Error(ErrorKind::validation, "--busy must be queue or reject");
      }
      if (refine_iterations > 0) {
        remuse::RemuseConfig rc;
        rc.iterations = refine_iterations;
        auto scorer = serve_scorer.build();
        if (!scorer) rc.reward_subset = {remuse::RewardAspect::k_prec, remuse::RewardAspect::specificity};
        cfg.refinement = rc;
      }
      std::optional<std::filesystem::path> store;
      if (!store_path.empty()) store = store_path;
      assistant::Service service(corpus::load_corpus(serve_corpus),
                                 make_pipeline(provider, serve_prompts, scenario_from_string(serve_scenario),
                                               serve_scorer.build()),
                                 cfg, std::make_shared<assistant::SystemClock>(), store);
      assistant::HttpServer server(service);
      server.bind(host, port);
      std::cerr << "listening on http://" << host << ":" << port << std::endl;
      server.serve();
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << to_string(e.kind()) << ": " << e.what() << std::endl;
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 1;
  }
  return 1;
}
