// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lgdea/corpus.hpp"

namespace lgdea {

/// One concise abnormal finding lifted from a report, as token ids.
struct EvidencePhrase {
  std::vector<int> tokens;
  std::int64_t source_report = -1;

  bool operator==(const EvidencePhrase&) const = default;
};

enum class ExtractorBackend { GroundTruth, RuleBased, Llm };

/// Generator round-trip: one phrase per concept-bearing sentence. Requires
/// each sentence to reference exactly one concept vocabulary (the Report
/// invariant); throws InputError otherwise.
std::vector<EvidencePhrase> extract_ground_truth(const Report& report, const ConceptWorld& world);

/// Splits on sentence boundaries and drops sentences with no non-background
/// tokens. Tolerant of hand-made reports.
std::vector<EvidencePhrase> extract_rule_based(const Report& report, const ConceptWorld& world);

struct LlmBackendConfig {
  std::string endpoint;         // "http://host:port/path"
  std::string api_key;          // optional bearer token
  std::string prompt_template;  // must contain {report}
  std::string cache_dir;        // empty disables the on-disk response cache
  int timeout_seconds = 30;
};

/// External-LLM extraction over a plain-text HTTP completion endpoint. The
/// response is parsed one phrase per line; responses are cached on disk keyed
/// by prompt content hash so repeat runs are deterministic after first fetch.
class LlmExtractor {
 public:
  explicit LlmExtractor(LlmBackendConfig config);

  /// Endpoint/key from LGDEA_LLM_ENDPOINT / LGDEA_LLM_API_KEY; optional
  /// template override from the file named by LGDEA_LLM_PROMPT_FILE.
  static LlmBackendConfig config_from_env();
  static const char* default_prompt_template();

  /// Throws ExtractionError (carrying the raw response) on transport or
  /// parse failure. An empty phrase list is a valid result.
  std::vector<EvidencePhrase> extract(const Report& report) const;

  static std::string render_report_text(const Report& report);
  static std::vector<int> parse_phrase_line(const std::string& line);
  std::string render_prompt(const Report& report) const;

 private:
  LlmBackendConfig config_;
};

/// Backend dispatcher used by the trainer and CLI.
std::vector<EvidencePhrase> extract_evidence(const Report& report, const ConceptWorld& world,
                                             ExtractorBackend backend,
                                             const LlmExtractor* llm = nullptr);

}  // namespace lgdea
