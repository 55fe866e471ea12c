#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "promptdoctor/prompt_model.hpp"

namespace promptdoctor::corpus {

/// Hole-count strata: "0".."5" and "6+".
inline constexpr std::size_t kStrataCount = 7;
std::string stratum_label(std::size_t hole_count);

struct CorpusStats {
  std::size_t total = 0;
  std::size_t retained = 0;
  std::size_t removed_short = 0;
  std::size_t removed_non_english = 0;
  std::map<std::string, std::size_t> strata;
};

nlohmann::json to_json(const CorpusStats& s);

/// Prompts at or below this many code points are dropped by clean().
inline constexpr std::size_t kMaxShortLength = 31;

/// ASCII, or one of the emoji blocks listed in docs/emoji_blocks.md.
bool is_allowed_codepoint(char32_t cp);

std::pair<std::vector<CanonicalPrompt>, CorpusStats> clean(const std::vector<CanonicalPrompt>& corpus);

/// Finite-population Cochran sample size with p = q = 0.5, rounded up.
std::size_t cochran_sample_size(std::size_t population, double confidence, double error);

/// Two-sided standard normal quantile for a confidence level (0.95 -> 1.95996...).
double z_for_confidence(double confidence);

struct StratumDraw {
  std::string label;
  std::size_t population = 0;
  std::size_t sample = 0;
};

struct SampleResult {
  std::vector<CanonicalPrompt> prompts;
  std::vector<StratumDraw> strata;
  std::vector<std::string> warnings;
};

/// Buckets by hole count and draws each stratum's Cochran size without
/// replacement, strata in label order, from one seeded generator.
/// Empty strata are skipped with a warning.
SampleResult stratified_sample(const std::vector<CanonicalPrompt>& corpus, double confidence, double error,
                               std::uint64_t seed);

enum class TaskCategory { qa, grammar_correction, summarization, translation, uncategorized };

std::string_view to_string(TaskCategory c);
TaskCategory category_from_string(std::string_view s);

enum class Mood { imperative, interrogative, other };

/// Heuristic mood: interrogative on `?` or a leading wh-word/auxiliary,
/// imperative on a leading base-form instruction verb.
Mood classify_mood(std::string_view text);

using EmbedFn = std::function<std::vector<std::vector<double>>(const std::vector<std::string>&)>;

struct CategorizerOptions {
  std::vector<std::string> grammar_keywords{"grammar", "punctuation", "typo", "spelling", "proofread", "correct the"};
  std::vector<std::string> translation_keywords{"translate", "translation", "translator"};
  std::vector<std::string> summarization_keywords{"summarize", "summarise", "summary", "summarization",
                                                  "summarisation", "tl;dr"};
  double similarity_threshold = 0.80;
  std::size_t qa_min_length = 20;
  std::size_t qa_max_length = 200;
};

class Categorizer {
 public:
  explicit Categorizer(CategorizerOptions options = {}, EmbedFn embed = {});

  /// Keyword-matched prompts used for the similarity fallback.
  void add_exemplar(TaskCategory category, std::string text);

  /// Total: always yields exactly one category. Embedding failures fall back
  /// to keyword-only classification.
  TaskCategory categorize(const CanonicalPrompt& p) const;

  std::optional<TaskCategory> keyword_category(std::string_view text) const;

 private:
  CategorizerOptions options_;
  EmbedFn embed_;
  std::vector<std::pair<TaskCategory, std::string>> exemplars_;
};

}  // namespace promptdoctor::corpus
