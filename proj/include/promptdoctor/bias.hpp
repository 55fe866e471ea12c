#pragma once

#include <cstddef>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "promptdoctor/gateway.hpp"
#include "promptdoctor/meta_prompts.hpp"
#include "promptdoctor/patcher.hpp"
#include "promptdoctor/prompt_model.hpp"

namespace promptdoctor {

enum class BiasType { gender, race, sexuality };

std::string_view to_string(BiasType t);
BiasType bias_type_from_string(std::string_view s);
inline constexpr BiasType kAllBiasTypes[] = {BiasType::gender, BiasType::race, BiasType::sexuality};

struct BiasFinding {
  std::optional<std::string> prompt_id;
  BiasType bias_type = BiasType::gender;
  bool is_explicit = false;
  bool prone = false;
  std::string reasoning;
  /// False when the detector never produced a usable verdict.
  bool evaluable = true;
  std::string error;

  bool flagged() const noexcept { return evaluable && (is_explicit || prone); }
};

enum class CandidateStatus { clean, flawed, unevaluated };

std::string_view to_string(CandidateStatus s);

struct RewriteCandidate {
  std::string text;
  std::set<std::string> holes;
  /// Loop iteration that produced the candidate, starting at 1.
  int distance = 1;
  CandidateStatus status = CandidateStatus::unevaluated;
};

struct DebiasResult {
  /// Clean candidates, non-decreasing distance.
  std::vector<RewriteCandidate> rewrites;
  /// Fewer than the target number of clean rewrites were found.
  bool partial = false;
  std::size_t iterations = 0;
  std::size_t evaluations = 0;
  std::size_t discarded_hole_mismatch = 0;
  std::size_t discarded_duplicates = 0;
  std::size_t queue_restarts = 0;
};

struct RepairOptions {
  std::size_t rewrites_per_iteration = 5;
  std::size_t max_iterations = 10;
  std::size_t target_clean = 5;
};

/// `{a}, {b}` or "(none)".
std::string describe_holes(const CanonicalPrompt& cp);

/// Parses generator output into candidates with the original hole set,
/// dropping anything in `seen` and recording the new texts there.
std::vector<CanonicalPrompt> admissible_rewrites(const std::vector<std::string>& texts, const CanonicalPrompt& original,
                                                 std::set<std::string>& seen, std::size_t limit,
                                                 std::size_t* mismatched = nullptr, std::size_t* duplicates = nullptr);

class BiasAnalyzer {
 public:
  BiasAnalyzer(llm::Gateway& gateway, const MetaPromptBank& bank = MetaPromptBank::standard(),
               RepairOptions options = {});

  /// Zero-hole prompts are judged as written and take an empty patch.
  BiasFinding detect(const CanonicalPrompt& cp, const PatchSet& patch, BiasType type);

  std::vector<BiasFinding> detect_all(const CanonicalPrompt& cp, const PatchSet& patch,
                                      const std::vector<BiasType>& types);

  /// Generation-evaluation loop. Rewrites are judged with the original
  /// patch values, which cover them because hole sets are preserved.
  DebiasResult debias(const CanonicalPrompt& cp, const PatchSet& patch, const BiasFinding& finding);

 private:
  llm::Gateway& gateway_;
  const MetaPromptBank& bank_;
  RepairOptions options_;
};

}  // namespace promptdoctor
