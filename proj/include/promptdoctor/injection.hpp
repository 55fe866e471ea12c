#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "promptdoctor/bias.hpp"
#include "promptdoctor/gateway.hpp"
#include "promptdoctor/meta_prompts.hpp"
#include "promptdoctor/patcher.hpp"
#include "promptdoctor/prompt_model.hpp"

namespace promptdoctor {

struct AttackCase {
  std::string id;
  std::string payload;
  /// Marker whose presence in a reply means the attack worked.
  std::string target;
  std::string description;
};

inline constexpr std::size_t kMinTargetLength = 12;

nlohmann::json to_json(const AttackCase& a);
AttackCase attack_from_json(const nlohmann::json& j);

/// Checks for unique ids, non-empty payloads and the minimum target length.
/// Throws ConfigError.
void validate_attacks(const std::vector<AttackCase>& attacks);
std::vector<AttackCase> load_attacks(const std::string& path);

/// Case-insensitive substring test.
bool reply_contains_target(std::string_view reply, std::string_view target);

struct VulnerabilityReport {
  std::optional<std::string> prompt_id;
  bool vulnerable = false;
  /// Every hole, mapped to the attacks that succeeded through it.
  std::map<std::string, std::set<std::string>> hole_results;
  std::size_t tested_attacks = 0;
  std::size_t trials = 0;
  /// (hole, attack id) pairs whose trial failed in transport.
  std::vector<std::pair<std::string, std::string>> inconclusive;
  /// The budget ran out before every trial ran.
  bool partial = false;

  std::size_t vulnerable_hole_count() const;
  std::vector<std::string> vulnerable_holes() const;
  friend bool operator==(const VulnerabilityReport&, const VulnerabilityReport&) = default;
};

nlohmann::json to_json(const VulnerabilityReport& r);
VulnerabilityReport vulnerability_report_from_json(const nlohmann::json& j);

struct HardenStep {
  std::size_t iteration = 0;
  /// Vulnerable-hole count of the prompt popped this iteration.
  std::size_t popped_count = 0;
  /// Smallest count in the queue at the moment of the pop.
  std::size_t queue_min = 0;
  std::size_t queue_size = 0;
};

struct HardenResult {
  std::optional<RewriteCandidate> hardened;
  bool exhausted = false;
  std::size_t iterations = 0;
  std::size_t discarded_hole_mismatch = 0;
  std::size_t discarded_duplicates = 0;
  std::vector<HardenStep> trace;
  /// Every rewrite that was tested, in test order.
  std::vector<RewriteCandidate> tested;
};

class InjectionAnalyzer {
 public:
  InjectionAnalyzer(llm::Gateway& gateway, const MetaPromptBank& bank = MetaPromptBank::standard(),
                    RepairOptions options = {});

  /// One responder call per (hole, attack): the payload goes into that hole
  /// and patch values fill the others.
  VulnerabilityReport test(const CanonicalPrompt& cp, const PatchSet& patch, const std::vector<AttackCase>& attacks);

  /// Repairs a vulnerable prompt, always expanding the queued prompt with the
  /// fewest vulnerable holes.
  HardenResult harden(const CanonicalPrompt& cp, const PatchSet& patch, const VulnerabilityReport& report,
                      const std::vector<AttackCase>& attacks);

 private:
  llm::Gateway& gateway_;
  const MetaPromptBank& bank_;
  RepairOptions options_;
};

}  // namespace promptdoctor
