#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "promptdoctor/prompt_model.hpp"

namespace promptdoctor {

/// Named meta-prompt templates in canonical form.
///
/// | name                 | holes                                         |
/// |----------------------|-----------------------------------------------|
/// | patch                | prompt, variable, avoid                       |
/// | bias_detect.gender   | prompt                                        |
/// | bias_detect.race     | prompt                                        |
/// | bias_detect.sexuality| prompt                                        |
/// | bias_rewrite         | bias_type, prompt, reasoning, holes, count    |
/// | harden               | prompt, holes, vulnerable_holes, attacks, count |
/// | seed                 | principles, prompt, holes                     |
/// | optimize             | holes, scored_prompts, count                  |
/// | judge_generator      | prompt                                        |
/// | reference            | task, input                                   |
class MetaPromptBank {
 public:
  MetaPromptBank();

  static const MetaPromptBank& standard();

  const CanonicalPrompt& get(std::string_view name) const;
  bool contains(std::string_view name) const;
  std::vector<std::string> names() const;

  /// Documented hole names for a template, in appearance order.
  const std::vector<std::string>& documented_holes(std::string_view name) const;

  /// Replaces a template; its holes must match the documented set.
  void set(std::string_view name, std::string_view canonical_text);

  /// Every hole must be covered (MissingValueError otherwise).
  std::string render(std::string_view name, const std::map<std::string, std::string>& values) const;

 private:
  std::map<std::string, CanonicalPrompt, std::less<>> templates_;
  std::map<std::string, std::vector<std::string>, std::less<>> holes_;
};

}  // namespace promptdoctor
