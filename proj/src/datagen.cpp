#include "forge/datagen.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>
#include <unordered_map>

#include "text_util.hpp"

namespace forge::datagen {

namespace fs = std::filesystem;

std::string_view to_string(PaperStatus s) {
  switch (s) {
    case PaperStatus::pending: return "pending";
    case PaperStatus::done: return "done";
    case PaperStatus::failed: return "failed";
    case PaperStatus::skipped: return "skipped";
  }
  return "";
}

PaperStatus paper_status_from_string(std::string_view s) {
  for (auto st : {PaperStatus::pending, PaperStatus::done, PaperStatus::failed, PaperStatus::skipped}) {
    if (to_string(st) == s) return st;
  }
  throw Error(ErrorKind::validation, "unknown paper status '" + std::string(s) + "'");
}

// ---------------------------------------------------------------------------
// RunManifest

std::size_t RunManifest::count(PaperStatus s) const {
  return static_cast<std::size_t>(
      std::count_if(statuses.begin(), statuses.end(), [s](const StatusEntry& e) { return e.status == s; }));
}

nlohmann::json RunManifest::to_json() const {
  nlohmann::json status = nlohmann::json::array();
  for (const auto& e : statuses) {
    nlohmann::json entry{{"id", e.id}, {"status", to_string(e.status)}};
    if (!e.reason.empty()) entry["reason"] = e.reason;
    status.push_back(std::move(entry));
  }
  return {{"corpus_path", corpus_path},
          {"output_path", output_path},
          {"trace_path", trace_path ? nlohmann::json(*trace_path) : nlohmann::json()},
          {"remuse", remuse.to_json()},
          {"provider", provider.to_json()},
          {"scorer", scorer ? scorer->to_json() : nlohmann::json()},
          {"scenario", forge::to_string(scenario)},
          {"review_count", review_count},
          {"resume", resume},
          {"statuses", status}};
}

RunManifest RunManifest::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error(ErrorKind::validation, "manifest must be an object");
  RunManifest m;
  try {
    m.corpus_path = j.at("corpus_path").get<std::string>();
    m.output_path = j.at("output_path").get<std::string>();
    if (j.contains("trace_path") && !j["trace_path"].is_null()) m.trace_path = j["trace_path"].get<std::string>();
    if (j.contains("remuse")) m.remuse = remuse::RemuseConfig::from_json(j["remuse"]);
    if (j.contains("provider")) m.provider = llm::ProviderConfig::from_json(j["provider"]);
    if (j.contains("scorer") && !j["scorer"].is_null()) m.scorer = metrics::ScorerEndpoint::from_json(j["scorer"]);
    if (j.contains("scenario")) m.scenario = scenario_from_string(j["scenario"].get<std::string>());
    m.review_count = j.value("review_count", m.review_count);
    m.resume = j.value("resume", m.resume);
    if (j.contains("statuses")) {
      for (const auto& e : j["statuses"]) {
        m.statuses.push_back({e.at("id").get<std::string>(), paper_status_from_string(e.at("status").get<std::string>()),
                              e.value("reason", "")});
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::validation, std::string("malformed manifest: ") + e.what());
  }
  return m;
}

void RunManifest::save(const fs::path& path) const {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw Error(ErrorKind::io, "cannot write " + tmp.string());
    out << to_json().dump(2) << '\n';
    if (!out) throw Error(ErrorKind::io, "write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw Error(ErrorKind::io, "cannot replace " + path.string() + ": " + ec.message());
}

RunManifest RunManifest::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io, "cannot read " + path.string());
  auto j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) throw Error(ErrorKind::validation, path.string() + " is not valid JSON");
  return from_json(j);
}

// ---------------------------------------------------------------------------
// Synthesis

namespace {

// Cuts everything after the last newline, dropping a half-written record.
void truncate_partial_line(const fs::path& path) {
  std::string content;
  {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::io, "cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    content = ss.str();
  }
  if (content.empty() || content.back() == '\n') return;
  auto nl = content.rfind('\n');
  std::uintmax_t keep = nl == std::string::npos ? 0 : nl + 1;
  std::error_code ec;
  fs::resize_file(path, keep, ec);
  if (ec) throw Error(ErrorKind::io, "cannot truncate " + path.string() + ": " + ec.message());
}

void reset_file(const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorKind::io, "cannot write " + path.string());
}

template <typename Fn>
void for_each_line(const fs::path& path, Fn&& fn) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io, "cannot open " + path.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    fn(line_no, line);
  }
}

Dialogue parse_dialogue_line(const fs::path& path, std::size_t line_no, const std::string& line) {
  auto where = path.string() + ":" + std::to_string(line_no) + ": ";
  auto j = nlohmann::json::parse(line, nullptr, false);
  if (j.is_discarded()) throw Error(ErrorKind::malformed_record, where + "not valid JSON");
  try {
    return j.get<Dialogue>();
  } catch (const Error& e) {
    throw Error(ErrorKind::malformed_record, where + e.what());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::malformed_record, where + e.what());
  }
}

struct Outcome {
  bool ok = false;
  std::string record;
  std::string trace;
  std::string reason;
};

std::string describe(const std::exception& e) {
  if (auto* err = dynamic_cast<const Error*>(&e)) return std::string(to_string(err->kind())) + ": " + e.what();
  return e.what();
}

}  // namespace

SynthResult synthesize_dataset(RunManifest m, const remuse::Pipeline& pipeline, const SynthOptions& opts) {
  if (opts.workers == 0) throw Error(ErrorKind::invalid_argument, "workers must be >= 1");
  m.remuse.validate();
  auto records = corpus::load_corpus(m.corpus_path);
  const fs::path output(m.output_path);

  std::set<std::string> done_ids;
  if (m.resume && fs::exists(output)) {
    truncate_partial_line(output);
    for_each_line(output, [&](std::size_t n, const std::string& line) {
      done_ids.insert(parse_dialogue_line(output, n, line).paper_id);
    });
  } else {
    reset_file(output);
  }
  if (m.trace_path) {
    if (m.resume && fs::exists(*m.trace_path)) {
      truncate_partial_line(*m.trace_path);
    } else {
      reset_file(*m.trace_path);
    }
  }

  m.statuses.clear();
  std::vector<std::size_t> pending;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    StatusEntry e{r.id, PaperStatus::pending, {}};
    if (m.review_count != 0 && r.reviews.size() != m.review_count) {
      e.status = PaperStatus::skipped;
      e.reason = "has " + std::to_string(r.reviews.size()) + " review(s), expected " + std::to_string(m.review_count);
    } else if (done_ids.count(r.id)) {
      e.status = PaperStatus::done;
    } else {
      pending.push_back(i);
    }
    m.statuses.push_back(std::move(e));
  }
  m.save(m.manifest_path());

  std::size_t limit = pending.size();
  if (opts.stop_after) limit = std::min(limit, *opts.stop_after);

  std::ofstream out(output, std::ios::app);
  if (!out) throw Error(ErrorKind::io, "cannot append to " + output.string());
  std::ofstream trace_out;
  if (m.trace_path) {
    trace_out.open(*m.trace_path, std::ios::app);
    if (!trace_out) throw Error(ErrorKind::io, "cannot append to " + *m.trace_path);
  }

  SynthResult result;
  std::mutex mu;
  std::map<std::size_t, Outcome> ready;  // reorder buffer keyed by position in `pending`
  std::size_t flush_pos = 0;
  std::atomic<std::size_t> next{0};
  std::atomic<bool> stop{false};
  std::exception_ptr fatal;

  auto process = [&](std::size_t idx) {
    const auto& r = records[idx];
    Outcome o;
    try {
      auto trace = pipeline.run(corpus::knowledge_source(r), m.remuse, r.id);
      o.ok = true;
      o.record = nlohmann::json(trace.final).dump();
      if (m.trace_path) o.trace = remuse::trace_to_json(trace).dump();
    } catch (const std::exception& e) {
      o.reason = describe(e);
    }
    return o;
  };

  // Caller holds `mu`.
  auto flush = [&]() {
    while (true) {
      auto it = ready.find(flush_pos);
      if (it == ready.end()) break;
      auto& o = it->second;
      auto& status = m.statuses[pending[flush_pos]];
      if (o.ok) {
        out << o.record << '\n';
        out.flush();
        if (!out) throw Error(ErrorKind::io, "write failed for " + output.string());
        if (m.trace_path) {
          trace_out << o.trace << '\n';
          trace_out.flush();
          if (!trace_out) throw Error(ErrorKind::io, "write failed for " + *m.trace_path);
        }
        status.status = PaperStatus::done;
        status.reason.clear();
        ++result.written;
      } else {
        status.status = PaperStatus::failed;
        status.reason = o.reason;
      }
      m.save(m.manifest_path());
      ready.erase(it);
      ++flush_pos;
    }
  };

  auto worker = [&]() {
    while (!stop) {
      std::size_t pos = next++;
      if (pos >= limit) break;
      auto o = process(pending[pos]);
      std::lock_guard lock(mu);
      ready.emplace(pos, std::move(o));
      try {
        flush();
      } catch (...) {
        if (!fatal) fatal = std::current_exception();
        stop = true;
      }
    }
  };

  std::size_t n_threads = std::min(opts.workers, std::max<std::size_t>(limit, 1));
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    for (std::size_t t = 0; t < n_threads; ++t) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
  }
  if (fatal) std::rethrow_exception(fatal);

  result.exit_code = m.count(PaperStatus::failed) > 0 ? 2 : 0;
  result.manifest = std::move(m);
  return result;
}

// ---------------------------------------------------------------------------
// Evaluation

namespace {

MetricSummary summarize(const std::vector<double>& xs) {
  MetricSummary s;
  s.count = xs.size();
  if (xs.empty()) return s;
  double sum = 0.0;
  for (double x : xs) sum += x;
  s.mean = sum / static_cast<double>(xs.size());
  double sq = 0.0;
  for (double x : xs) sq += (x - s.mean) * (x - s.mean);
  s.stddev = std::sqrt(sq / static_cast<double>(xs.size()));
  return s;
}

nlohmann::json summary_json(const MetricSummary& s) {
  return {{"count", s.count}, {"mean", s.mean}, {"std", s.stddev}};
}

std::unordered_map<std::string, KnowledgeSource> knowledge_by_id(const fs::path& corpus_path) {
  std::unordered_map<std::string, KnowledgeSource> out;
  for (const auto& r : corpus::load_corpus(corpus_path)) out.emplace(r.id, corpus::knowledge_source(r));
  return out;
}

std::string id_string(const nlohmann::json& j, const std::string& where) {
  if (!j.contains("id")) throw Error(ErrorKind::malformed_record, where + "missing \"id\"");
  if (j["id"].is_string()) return j["id"].get<std::string>();
  if (j["id"].is_number_integer()) return std::to_string(j["id"].get<long long>());
  throw Error(ErrorKind::malformed_record, where + "\"id\" must be a string or integer");
}

std::string string_field(const nlohmann::json& j, const char* key, const std::string& where) {
  if (!j.contains(key) || !j[key].is_string()) {
    throw Error(ErrorKind::malformed_record, where + "missing string field \"" + key + "\"");
  }
  return j[key].get<std::string>();
}

nlohmann::json parse_object_line(const fs::path& path, std::size_t n, const std::string& line) {
  auto j = nlohmann::json::parse(line, nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    throw Error(ErrorKind::malformed_record, path.string() + ":" + std::to_string(n) + ": not a JSON object");
  }
  return j;
}

}  // namespace

std::vector<std::size_t> sample_indices(std::size_t n, std::size_t k, std::uint64_t seed) {
  auto perm = corpus::seeded_permutation(n, seed);
  perm.resize(std::min(k, n));
  std::sort(perm.begin(), perm.end());
  return perm;
}

std::vector<Dialogue> load_dataset(const fs::path& path) {
  std::vector<Dialogue> out;
  for_each_line(path, [&](std::size_t n, const std::string& line) { out.push_back(parse_dialogue_line(path, n, line)); });
  return out;
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json per = nlohmann::json::array();
  for (const auto& d : dialogues) {
    nlohmann::json e{{"line", d.line}, {"paper_id", d.paper_id}, {"agent_means", d.agent_means},
                     {"discrepancies", d.discrepancies}};
    e["specificity_mean"] = d.specificity_mean ? nlohmann::json(*d.specificity_mean) : nlohmann::json();
    per.push_back(std::move(e));
  }
  nlohmann::json fails = nlohmann::json::array();
  for (const auto& f : failures) fails.push_back({{"line", f.line}, {"paper_id", f.paper_id}, {"reason", f.reason}});
  nlohmann::json sum = nlohmann::json::object();
  for (const auto& [name, s] : summary) sum[name] = summary_json(s);
  return {{"total", total},   {"scored", scored},     {"failed", failed},         {"skipped", skipped},
          {"summary", sum},   {"discrepancies", discrepancies}, {"dialogues", per}, {"failures", fails}};
}

EvalReport evaluate_dataset(const fs::path& dataset, const fs::path& corpus_path, const EvalOptions& opts) {
  std::vector<std::pair<std::size_t, Dialogue>> rows;
  for_each_line(dataset, [&](std::size_t n, const std::string& line) {
    rows.emplace_back(n, parse_dialogue_line(dataset, n, line));
  });
  if (rows.empty()) throw Error(ErrorKind::validation, "dataset " + dataset.string() + " is empty");

  auto knowledge = knowledge_by_id(corpus_path);
  std::vector<std::string> missing;
  for (const auto& [_, d] : rows) {
    if (!knowledge.count(d.paper_id) && std::find(missing.begin(), missing.end(), d.paper_id) == missing.end()) {
      missing.push_back(d.paper_id);
    }
  }
  if (!missing.empty()) {
    std::string ids;
    for (const auto& id : missing) ids += (ids.empty() ? "" : ", ") + id;
    throw Error(ErrorKind::not_found, "paper ids not in corpus: " + ids);
  }

  std::set<remuse::RewardAspect> subset{remuse::RewardAspect::k_prec, remuse::RewardAspect::specificity};
  if (opts.scorer && (opts.scorer->serves("q2_f1") || opts.scorer->serves("q2_nli"))) {
    subset.insert(remuse::RewardAspect::q2);
  }

  std::vector<std::size_t> selected;
  if (opts.sample) {
    selected = sample_indices(rows.size(), *opts.sample, opts.seed);
  } else {
    for (std::size_t i = 0; i < rows.size(); ++i) selected.push_back(i);
  }

  EvalReport report;
  report.total = rows.size();
  report.skipped = rows.size() - selected.size();
  std::map<Metric, std::vector<double>> pooled;

  for (auto idx : selected) {
    const auto& [line, d] = rows[idx];
    const auto& k = knowledge.at(d.paper_id);
    std::vector<std::string> texts;
    for (const auto& u : d.utterances) texts.push_back(u.text);

    std::vector<RewardVector> scores;
    try {
      scores = remuse::score_texts(texts, k, subset, opts.scorer);
    } catch (const Error& e) {
      ++report.failed;
      report.failures.push_back({line, d.paper_id, std::string(to_string(e.kind())) + ": " + e.what()});
      continue;
    }

    DialogueScores ds;
    ds.line = line;
    ds.paper_id = d.paper_id;
    Dialogue rescored = d;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      const auto& u = d.utterances[i];
      rescored.utterances[i].rewards = scores[i];
      if (u.rewards) {
        for (auto m : kAllMetrics) {
          auto stored = u.rewards->get(m);
          auto fresh = scores[i].get(m);
          if (stored && fresh && std::abs(*stored - *fresh) > kDiscrepancyTolerance) ++ds.discrepancies;
        }
      }
      for (auto m : kAllMetrics) {
        auto v = scores[i].get(m);
        if (!v) continue;
        if (m == Metric::specificity || u.role == Role::agent) pooled[m].push_back(*v);
      }
    }
    auto agg = metrics::aggregate_dialogue(rescored);
    ds.agent_means = agg.agent_means;
    ds.specificity_mean = agg.specificity_mean;
    report.discrepancies += ds.discrepancies;
    report.dialogues.push_back(std::move(ds));
    ++report.scored;
  }

  for (const auto& [m, xs] : pooled) report.summary[std::string(metric_name(m))] = summarize(xs);
  return report;
}

nlohmann::json ResponseReport::to_json() const {
  nlohmann::json j{{"count", count}, {"bleu", bleu}, {"k_prec", summary_json(k_prec)}};
  if (q2_f1) j["q2_f1"] = summary_json(*q2_f1);
  if (q2_nli) j["q2_nli"] = summary_json(*q2_nli);
  if (bertscore) j["bertscore"] = summary_json(*bertscore);
  return j;
}

ResponseReport eval_responses(const fs::path& predictions, const fs::path& gold, const fs::path& corpus_path,
                              const std::optional<metrics::ScorerEndpoint>& scorer) {
  std::map<std::string, std::string> predicted;
  for_each_line(predictions, [&](std::size_t n, const std::string& line) {
    auto where = predictions.string() + ":" + std::to_string(n) + ": ";
    auto j = parse_object_line(predictions, n, line);
    auto id = id_string(j, where);
    if (!predicted.emplace(id, string_field(j, "response", where)).second) {
      throw Error(ErrorKind::validation, where + "duplicate prediction id \"" + id + "\"");
    }
  });

  struct GoldRow {
    std::string id;
    std::string paper_id;
    std::string response;
  };
  std::vector<GoldRow> rows;
  std::set<std::string> gold_ids;
  for_each_line(gold, [&](std::size_t n, const std::string& line) {
    auto where = gold.string() + ":" + std::to_string(n) + ": ";
    auto j = parse_object_line(gold, n, line);
    GoldRow g{id_string(j, where), string_field(j, "paper_id", where), string_field(j, "response", where)};
    if (!gold_ids.insert(g.id).second) throw Error(ErrorKind::validation, where + "duplicate gold id \"" + g.id + "\"");
    if (!predicted.count(g.id)) throw Error(ErrorKind::validation, "no prediction for gold id \"" + g.id + "\"");
    rows.push_back(std::move(g));
  });
  for (const auto& [id, _] : predicted) {
    if (!gold_ids.count(id)) throw Error(ErrorKind::validation, "prediction id \"" + id + "\" has no gold entry");
  }
  if (rows.empty()) throw Error(ErrorKind::validation, "gold file " + gold.string() + " is empty");

  auto knowledge = knowledge_by_id(corpus_path);
  std::vector<std::string> hyps;
  std::vector<std::string> refs;
  std::vector<double> kp;
  std::vector<metrics::ScoreItem> items;
  for (const auto& g : rows) {
    auto it = knowledge.find(g.paper_id);
    if (it == knowledge.end()) throw Error(ErrorKind::not_found, "gold id \"" + g.id + "\" names unknown paper \"" + g.paper_id + "\"");
    const auto& hyp = predicted.at(g.id);
    auto ground = grounding_text(it->second);
    hyps.push_back(hyp);
    refs.push_back(g.response);
    kp.push_back(metrics::tokenize(hyp).empty() ? 0.0 : metrics::k_precision(hyp, ground));
    items.push_back({hyp, ground, g.response});
  }

  ResponseReport report;
  report.count = rows.size();
  report.bleu = metrics::corpus_bleu(hyps, refs);
  report.k_prec = summarize(kp);
  if (scorer) {
    auto external = [&](const char* name) -> std::optional<MetricSummary> {
      if (!scorer->serves(name)) return std::nullopt;
      auto scores = metrics::request_metric(*scorer, name, items);
      if (!scores) return std::nullopt;
      return summarize(*scores);
    };
    report.q2_f1 = external("q2_f1");
    report.q2_nli = external("q2_nli");
    report.bertscore = external("bertscore");
  }
  return report;
}

corpus::StatsReport dataset_stats(const fs::path& dataset, std::optional<std::size_t> sample, std::uint64_t seed) {
  auto dialogues = load_dataset(dataset);
  if (sample) {
    std::vector<Dialogue> picked;
    for (auto i : sample_indices(dialogues.size(), *sample, seed)) picked.push_back(std::move(dialogues[i]));
    dialogues = std::move(picked);
  }
  return corpus::corpus_stats(dialogues);
}

}  // namespace forge::datagen
