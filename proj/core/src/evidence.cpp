// SPDX-License-Identifier: Apache-2.0
#include "lgdea/evidence.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>

#include "httplib.h"
#include "lgdea/errors.hpp"
#include "lgdea/util.hpp"

namespace lgdea {

std::vector<EvidencePhrase> extract_ground_truth(const Report& report, const ConceptWorld& world) {
  if (report.sentences.empty()) throw InputError("extract_ground_truth: empty report");
  std::vector<EvidencePhrase> phrases;
  for (const auto& sentence : report.sentences) {
    int concept_id = -1;
    bool multiple = false;
    for (int tok : sentence) {
      const int c = world.concept_of_token(tok);
      if (c < 0) continue;
      if (concept_id >= 0 && c != concept_id) multiple = true;
      concept_id = c;
    }
    if (multiple)
      throw InputError("extract_ground_truth: sentence references multiple concepts");
    if (concept_id >= 0) phrases.push_back({sentence, report.id});
  }
  return phrases;
}

std::vector<EvidencePhrase> extract_rule_based(const Report& report, const ConceptWorld& world) {
  if (report.sentences.empty()) throw InputError("extract_rule_based: empty report");
  std::vector<EvidencePhrase> phrases;
  for (const auto& sentence : report.sentences) {
    const bool has_finding = std::any_of(sentence.begin(), sentence.end(),
                                         [&](int tok) { return !world.is_background(tok); });
    if (has_finding) phrases.push_back({sentence, report.id});
  }
  return phrases;
}

// -- LLM backend ----------------------------------------------------------------

namespace {
constexpr const char* kDefaultPromptTemplate =
    "Extract the key abnormal findings from the following radiology report.\n"
    "Return one finding per line, using the same token vocabulary as the report.\n"
    "Report:\n{report}\n";

std::mutex g_cache_mutex;

std::string env_or(const char* name, const std::string& fallback) {
  const char* v = std::getenv(name);
  return v ? std::string(v) : fallback;
}

struct ParsedEndpoint {
  std::string base;  // scheme://host:port
  std::string path;  // /v1/...
};

ParsedEndpoint split_endpoint(const std::string& endpoint) {
  const auto scheme_end = endpoint.find("://");
  if (scheme_end == std::string::npos)
    throw ConfigError("LlmExtractor: endpoint must include a scheme: " + endpoint);
  const auto path_start = endpoint.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {endpoint, "/"};
  return {endpoint.substr(0, path_start), endpoint.substr(path_start)};
}
}  // namespace

const char* LlmExtractor::default_prompt_template() { return kDefaultPromptTemplate; }

LlmExtractor::LlmExtractor(LlmBackendConfig config) : config_(std::move(config)) {
  if (config_.endpoint.empty()) throw ConfigError("LlmExtractor: endpoint not configured");
  if (config_.prompt_template.find("{report}") == std::string::npos)
    throw ConfigError("LlmExtractor: prompt template is missing the {report} placeholder");
}

LlmBackendConfig LlmExtractor::config_from_env() {
  LlmBackendConfig cfg;
  cfg.endpoint = env_or("LGDEA_LLM_ENDPOINT", "");
  cfg.api_key = env_or("LGDEA_LLM_API_KEY", "");
  cfg.cache_dir = env_or("LGDEA_LLM_CACHE_DIR", "");
  cfg.prompt_template = kDefaultPromptTemplate;
  const std::string prompt_file = env_or("LGDEA_LLM_PROMPT_FILE", "");
  if (!prompt_file.empty()) {
    std::ifstream in(prompt_file);
    if (!in) throw ConfigError("LlmExtractor: cannot read prompt file " + prompt_file);
    std::ostringstream ss;
    ss << in.rdbuf();
    cfg.prompt_template = ss.str();
  }
  return cfg;
}

std::string LlmExtractor::render_report_text(const Report& report) {
  std::ostringstream out;
  for (std::size_t s = 0; s < report.sentences.size(); ++s) {
    for (std::size_t i = 0; i < report.sentences[s].size(); ++i) {
      if (i > 0) out << ' ';
      out << 't' << report.sentences[s][i];
    }
    out << " .";
    if (s + 1 < report.sentences.size()) out << ' ';
  }
  return out.str();
}

std::vector<int> LlmExtractor::parse_phrase_line(const std::string& line) {
  std::vector<int> tokens;
  std::istringstream words(line);
  std::string word;
  while (words >> word) {
    std::size_t start = 0;
    if (word[0] == 't') start = 1;
    if (start >= word.size()) continue;
    bool numeric = true;
    for (std::size_t i = start; i < word.size() && numeric; ++i)
      numeric = std::isdigit(static_cast<unsigned char>(word[i])) != 0;
    if (numeric) tokens.push_back(std::stoi(word.substr(start)));
  }
  return tokens;
}

std::string LlmExtractor::render_prompt(const Report& report) const {
  std::string prompt = config_.prompt_template;
  const std::string placeholder = "{report}";
  const auto pos = prompt.find(placeholder);
  prompt.replace(pos, placeholder.size(), render_report_text(report));
  return prompt;
}

std::vector<EvidencePhrase> LlmExtractor::extract(const Report& report) const {
  if (report.sentences.empty()) throw InputError("LlmExtractor: empty report");
  const std::string prompt = render_prompt(report);

  std::string body;
  bool from_cache = false;
  std::filesystem::path cache_file;
  if (!config_.cache_dir.empty()) {
    char hex[17];
    std::snprintf(hex, sizeof(hex), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(prompt)));
    cache_file = std::filesystem::path(config_.cache_dir) / (std::string(hex) + ".txt");
    std::ifstream cached(cache_file);
    if (cached) {
      std::ostringstream ss;
      ss << cached.rdbuf();
      body = ss.str();
      from_cache = true;
    }
  }

  if (!from_cache) {
    const ParsedEndpoint ep = split_endpoint(config_.endpoint);
    httplib::Client client(ep.base);
    client.set_connection_timeout(config_.timeout_seconds);
    client.set_read_timeout(config_.timeout_seconds);
    httplib::Headers headers;
    if (!config_.api_key.empty())
      headers.emplace("Authorization", "Bearer " + config_.api_key);
    auto res = client.Post(ep.path, headers, prompt, "text/plain");
    if (!res)
      throw ExtractionError("LlmExtractor: request to " + config_.endpoint + " failed: " +
                                httplib::to_string(res.error()),
                            "");
    if (res->status != 200)
      throw ExtractionError(
          "LlmExtractor: endpoint returned status " + std::to_string(res->status), res->body);
    body = res->body;
    if (!config_.cache_dir.empty()) {
      std::lock_guard<std::mutex> lock(g_cache_mutex);
      std::filesystem::create_directories(cache_file.parent_path());
      std::ofstream out(cache_file);
      out << body;
    }
  }

  std::vector<EvidencePhrase> phrases;
  std::istringstream lines(body);
  std::string line;
  while (std::getline(lines, line)) {
    std::vector<int> tokens = parse_phrase_line(line);
    if (!tokens.empty()) phrases.push_back({std::move(tokens), report.id});
  }
  return phrases;
}

std::vector<EvidencePhrase> extract_evidence(const Report& report, const ConceptWorld& world,
                                             ExtractorBackend backend, const LlmExtractor* llm) {
  switch (backend) {
    case ExtractorBackend::GroundTruth:
      return extract_ground_truth(report, world);
    case ExtractorBackend::RuleBased:
      return extract_rule_based(report, world);
    case ExtractorBackend::Llm:
      if (!llm) throw ConfigError("extract_evidence: LLM backend selected but not configured");
      return llm->extract(report);
  }
  throw ConfigError("extract_evidence: unknown backend");
}

}  // namespace lgdea
