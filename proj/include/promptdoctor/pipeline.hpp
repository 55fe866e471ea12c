#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "promptdoctor/bias.hpp"
#include "promptdoctor/corpus.hpp"
#include "promptdoctor/gateway.hpp"
#include "promptdoctor/injection.hpp"
#include "promptdoctor/prompt_model.hpp"
#include "promptdoctor/report.hpp"

namespace promptdoctor {

struct ExtractSummary {
  std::vector<CorpusRecord> records;
  ExtractDiagnostics diagnostics;
  std::size_t files = 0;
  std::size_t canonicalization_errors = 0;
};

/// Walks files and directories (recursively, in sorted order). `.py`/`.pyi`
/// files are scanned as python-like sources; `.prompt`, `.tmpl` and `.txt`
/// files are taken whole as generic templates. Paths in records are kept
/// as given, relative when the input was relative.
ExtractSummary extract_paths(const std::vector<std::string>& paths, const ExtractOptions& options = {});

/// corpus::clean over records; survivors keep their input order.
std::pair<std::vector<CorpusRecord>, corpus::CorpusStats> clean_records(const std::vector<CorpusRecord>& records);

struct RecordSample {
  std::vector<CorpusRecord> records;
  std::vector<corpus::StratumDraw> strata;
  std::vector<std::string> warnings;
};

/// corpus::stratified_sample over records.
RecordSample sample_records(const std::vector<CorpusRecord>& records, double confidence, double error,
                            std::uint64_t seed);

struct ProgressEvent {
  std::string kind;
  std::string prompt_id;
  std::string message;
  std::size_t index = 0;
  std::size_t total = 0;

  nlohmann::json to_json() const;
};

using ProgressFn = std::function<void(const ProgressEvent&)>;

struct LintOptions {
  bool check_bias = true;
  bool check_injection = true;
  /// Run the repair loops for flagged prompts.
  bool repair = true;
  std::vector<BiasType> bias_types{BiasType::gender, BiasType::race, BiasType::sexuality};
  std::vector<AttackCase> attacks;
  std::uint64_t seed = 0;
  std::string created_at;
  RepairOptions repair_options;
  nlohmann::json config_snapshot = nlohmann::json::object();
};

/// Patches, checks and repairs each prompt in order. Per-prompt model
/// failures are recorded on the entry; a spent budget ends the run early
/// with the report marked exceeded.
LintReport lint(const std::vector<CorpusRecord>& records, llm::Gateway& gateway, const LintOptions& options,
                const ProgressFn& progress = {});

/// Canonical corpus record for an ad-hoc prompt typed into the service.
CorpusRecord adhoc_record(const std::string& prompt_text);

}  // namespace promptdoctor
