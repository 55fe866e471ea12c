#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "promptdoctor/bias.hpp"
#include "promptdoctor/injection.hpp"
#include "promptdoctor/patcher.hpp"
#include "promptdoctor/prompt_model.hpp"

namespace promptdoctor {

struct BiasEntry {
  BiasFinding finding;
  std::vector<RewriteCandidate> rewrites;
  bool partial = false;
  std::size_t iterations = 0;
};

struct InjectionEntry {
  VulnerabilityReport report;
  std::optional<RewriteCandidate> hardened;
  bool exhausted = false;
  std::size_t iterations = 0;
};

struct PromptEntry {
  std::string prompt_id;
  std::string file;
  Span span;
  std::string raw;
  LanguageHint language_hint = LanguageHint::python_like;
  std::string text;
  std::vector<std::string> holes;
  std::optional<PatchSet> patch;
  std::vector<BiasEntry> bias;
  std::optional<InjectionEntry> injection;
  /// Serialized OptimizationRun, when one was run for this prompt.
  std::optional<nlohmann::json> optimization;
  std::vector<std::string> errors;

  bool has_findings() const;
};

/// A rewrite the developer can apply, in the order the service indexes them:
/// bias rewrites by finding then distance, then the hardened prompt.
struct RewriteOption {
  std::string kind;
  std::string text;
  int distance = 1;
};

std::vector<RewriteOption> rewrite_options(const PromptEntry& entry);

struct BudgetUsage {
  std::size_t calls = 0;
  std::optional<std::size_t> limit;
  bool exceeded = false;
};

struct LintReport {
  std::string run_id;
  std::string created_at;
  std::vector<PromptEntry> prompts;
  nlohmann::json config = nlohmann::json::object();
  BudgetUsage budget;

  const PromptEntry* find(std::string_view prompt_id) const;
  std::size_t finding_count() const;
};

nlohmann::json to_json(const RewriteCandidate& c);
RewriteCandidate rewrite_candidate_from_json(const nlohmann::json& j);
nlohmann::json to_json(const BiasEntry& e, const std::string& prompt_id);
nlohmann::json to_json(const PromptEntry& e);
PromptEntry prompt_entry_from_json(const nlohmann::json& j);
nlohmann::json to_json(const LintReport& r);
LintReport lint_report_from_json(const nlohmann::json& j);

/// Pretty-printed JSON with a trailing newline; the on-disk form.
std::string serialize(const LintReport& r);
/// SHA-256 of serialize().
std::string report_digest(const LintReport& r);

void save_report(const std::string& path, const LintReport& r);
LintReport load_report(const std::string& path);

/// Deterministic id derived from the creation time and prompt ids.
std::string make_run_id(const std::string& created_at, const std::vector<std::string>& prompt_ids);

/// Current UTC time as ISO-8601, or SOURCE_DATE_EPOCH when set.
std::string timestamp_now();

/// One-line-per-prompt human summary.
std::string summarize(const LintReport& r);

}  // namespace promptdoctor
