#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "forge/llm.hpp"

#ifndef FORGE_DEFAULT_PROMPT_DIR
#define FORGE_DEFAULT_PROMPT_DIR "assets/prompts"
#endif

namespace forge::llm {

std::string_view to_string(PromptKind k) {
  switch (k) {
    case PromptKind::initial_extensive: return "initial_extensive";
    case PromptKind::initial_paraphrased: return "initial_paraphrased";
    case PromptKind::initial_tldr: return "initial_tldr";
    case PromptKind::feedback_generic: return "feedback_generic";
    case PromptKind::feedback_actionable: return "feedback_actionable";
    case PromptKind::feedback_rewarded: return "feedback_rewarded";
    case PromptKind::refine: return "refine";
    case PromptKind::response_generate: return "response_generate";
    case PromptKind::response_feedback: return "response_feedback";
    case PromptKind::response_refine: return "response_refine";
  }
  return "";
}

PromptKind prompt_kind_from_string(std::string_view s) {
  for (auto k : kAllPromptKinds) {
    if (to_string(k) == s) return k;
  }
  throw Error(ErrorKind::validation, "unknown prompt kind '" + std::string(s) + "'");
}

std::vector<std::string> required_placeholders(PromptKind k) {
  switch (k) {
    case PromptKind::initial_extensive:
    case PromptKind::initial_paraphrased:
    case PromptKind::initial_tldr:
      return {"knowledge"};
    case PromptKind::feedback_generic:
    case PromptKind::feedback_actionable:
      return {"knowledge", "dialogue"};
    case PromptKind::feedback_rewarded:
      return {"knowledge", "dialogue", "score_names"};
    case PromptKind::refine:
      return {"knowledge", "feedback", "dialogue"};
    case PromptKind::response_generate:
      return {"knowledge", "history"};
    case PromptKind::response_feedback:
      return {"knowledge", "history", "response", "score_names"};
    case PromptKind::response_refine:
      return {"knowledge", "feedback", "history", "response"};
  }
  return {};
}

namespace {

bool is_placeholder_char(char c) { return (c >= 'a' && c <= 'z') || c == '_'; }

// Calls fn(name, begin, end) for each "{name}" occurrence.
template <typename Fn>
void scan_placeholders(std::string_view body, Fn&& fn) {
  std::size_t i = 0;
  while (i < body.size()) {
    if (body[i] != '{') {
      ++i;
      continue;
    }
    std::size_t j = i + 1;
    while (j < body.size() && is_placeholder_char(body[j])) ++j;
    if (j > i + 1 && j < body.size() && body[j] == '}') {
      fn(body.substr(i + 1, j - i - 1), i, j + 1);
      i = j + 1;
    } else {
      ++i;
    }
  }
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, "cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

std::vector<std::string> placeholders_in(std::string_view body) {
  std::vector<std::string> names;
  scan_placeholders(body, [&names](std::string_view name, std::size_t, std::size_t) {
    if (std::find(names.begin(), names.end(), name) == names.end()) names.emplace_back(name);
  });
  return names;
}

std::string TemplateRegistry::make_id(Scenario s, PromptKind k) {
  return std::string(forge::to_string(s)) + "/" + std::string(to_string(k));
}

TemplateRegistry TemplateRegistry::load_directory(const std::string& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw Error(ErrorKind::io, "prompt directory " + dir + " does not exist");
  TemplateRegistry reg;
  for (auto scenario : {Scenario::meta_review, Scenario::debate, Scenario::product_buying}) {
    for (auto kind : kAllPromptKinds) {
      fs::path file = fs::path(dir) / std::string(forge::to_string(scenario)) / (std::string(to_string(kind)) + ".txt");
      if (!fs::exists(file)) continue;
      reg.add(PromptTemplate{make_id(scenario, kind), scenario, kind, read_file(file)});
    }
  }
  if (reg.size() == 0) throw Error(ErrorKind::io, "no prompt templates found under " + dir);
  return reg;
}

TemplateRegistry TemplateRegistry::load_default() {
  const char* env = std::getenv("FORGE_PROMPT_DIR");
  return load_directory(env && *env ? env : FORGE_DEFAULT_PROMPT_DIR);
}

void TemplateRegistry::add(PromptTemplate t) {
  auto present = placeholders_in(t.body);
  for (const auto& name : required_placeholders(t.kind)) {
    if (std::find(present.begin(), present.end(), name) == present.end()) {
      throw Error(ErrorKind::validation, "template " + t.id + " lacks required placeholder {" + name + "}");
    }
  }
  auto id = t.id;
  templates_.insert_or_assign(std::move(id), std::move(t));
}

bool TemplateRegistry::contains(std::string_view id) const { return templates_.find(id) != templates_.end(); }

const PromptTemplate& TemplateRegistry::get(std::string_view id) const {
  auto it = templates_.find(id);
  if (it == templates_.end()) throw Error(ErrorKind::not_found, "unknown prompt template '" + std::string(id) + "'");
  return it->second;
}

std::string render_prompt(const TemplateRegistry& registry, std::string_view template_id, const PromptVars& vars) {
  const auto& tmpl = registry.get(template_id);
  std::string out;
  out.reserve(tmpl.body.size());
  std::size_t copied = 0;
  scan_placeholders(tmpl.body, [&](std::string_view name, std::size_t begin, std::size_t end) {
    auto it = vars.find(std::string(name));
    if (it == vars.end()) {
      throw Error(ErrorKind::invalid_argument,
                  "template " + tmpl.id + " needs a value for {" + std::string(name) + "}");
    }
    out.append(tmpl.body, copied, begin - copied);
    out += it->second;
    copied = end;
  });
  out.append(tmpl.body, copied, std::string::npos);
  return out;
}

}  // namespace forge::llm
