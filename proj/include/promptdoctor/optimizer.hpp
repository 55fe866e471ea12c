#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "promptdoctor/corpus.hpp"
#include "promptdoctor/gateway.hpp"
#include "promptdoctor/meta_prompts.hpp"
#include "promptdoctor/metrics.hpp"
#include "promptdoctor/patcher.hpp"
#include "promptdoctor/prompt_model.hpp"

namespace promptdoctor {

struct SeedPrinciple {
  int index = 0;
  std::string text;
};

/// The 26 prompting principles sampled into seed-generation requests.
const std::vector<SeedPrinciple>& seed_principles();

struct OptimizerHyperparams {
  std::size_t n_seeds = 16;
  std::size_t prompts_per_step = 20;
  std::size_t train_count = 30;
  std::size_t test_count = 10;
  std::size_t top_n = 8;
  double epsilon = 1e-6;
  std::size_t patience = 1;
  std::size_t max_steps = 10;
  std::size_t principles_per_seed = 5;
  std::size_t seed_attempts = 3;
  std::vector<double> temperature_ladder{0.3, 0.7, 1.0, 1.3};

  nlohmann::json to_json() const;
  static OptimizerHyperparams from_json(const nlohmann::json& j);
};

struct ScoredPrompt {
  CanonicalPrompt prompt;
  metrics::Score train_score;
  int step = 0;
};

struct OptimizationStep {
  int step = 0;
  std::vector<ScoredPrompt> candidates;
  /// Running maximum after this step.
  double best_so_far = 0.0;
  std::size_t discarded = 0;
};

enum class Verdict { improved, degraded, unchanged };

std::string_view to_string(Verdict v);

/// improved: test(best) > test(source). degraded: train(best) > train(source)
/// and test(best) <= test(source). unchanged otherwise.
Verdict decide_verdict(double train_source, double train_best, double test_source, double test_best);

struct TestScores {
  metrics::Score source;
  metrics::Score best;
};

struct OptimizationRun {
  CanonicalPrompt source;
  corpus::TaskCategory category = corpus::TaskCategory::qa;
  OptimizerHyperparams hyperparams;
  std::optional<std::string> judge_template;
  std::vector<OptimizationStep> steps;
  ScoredPrompt source_scored;
  ScoredPrompt best;
  std::optional<TestScores> test_scores;
  Verdict verdict = Verdict::unchanged;
  /// The call budget ran out; steps and scores cover what finished.
  bool partial = false;
  std::vector<std::string> warnings;
};

nlohmann::json to_json(const OptimizationRun& run);

/// Leading whitespace and punctuation are skipped before looking for "yes".
bool judge_says_yes(std::string_view reply);

class Optimizer {
 public:
  Optimizer(llm::Gateway& gateway, OptimizerHyperparams hyperparams = {},
            const MetaPromptBank& bank = MetaPromptBank::standard());

  const OptimizerHyperparams& hyperparams() const noexcept { return hp_; }

  std::vector<CanonicalPrompt> generate_seeds(const CanonicalPrompt& source, std::size_t n, std::uint64_t seed);

  /// Yes/no rubric template with a single `{text}` hole for the answer.
  CanonicalPrompt make_judge_prompt(const CanonicalPrompt& source, std::uint64_t seed);

  /// Mean per-row score of the responder's replies. `judge` is required for qa.
  metrics::Score evaluate(const CanonicalPrompt& p, const SyntheticDataset& dataset, corpus::TaskCategory category,
                          const std::optional<CanonicalPrompt>& judge = std::nullopt);

  OptimizationRun optimize(const CanonicalPrompt& source, corpus::TaskCategory category,
                           const SyntheticDataset& train, const SyntheticDataset& test, std::uint64_t seed);

 private:
  llm::Gateway& gateway_;
  OptimizerHyperparams hp_;
  const MetaPromptBank& bank_;
};

}  // namespace promptdoctor
