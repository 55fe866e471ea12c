#pragma once

#include <optional>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "promptdoctor/prompt_model.hpp"

namespace promptdoctor {

enum class FixStatus { pending, applied, conflicted };

std::string_view to_string(FixStatus s);
FixStatus fix_status_from_string(std::string_view s);

struct FixAction {
  std::string prompt_id;
  std::string chosen_rewrite;
  std::string file;
  Span span;
  /// The prompt's bytes when the report was made.
  std::string original_raw;
  FixStatus status = FixStatus::pending;
  std::string message;
  /// Where the replacement landed after an apply.
  std::optional<Span> new_span;
  std::optional<std::string> backup_path;
};

nlohmann::json to_json(const FixAction& a);
FixAction fix_action_from_json(const nlohmann::json& j);

/// Source text for `rewrite` in the style of the original expression:
/// an f-string when every hole came from an expression, a plain literal
/// (plus the original `.format(...)` call) when none did, otherwise the
/// original mix of literals and concatenated expressions.
/// Throws RenderError when a hole cannot be expressed in that style.
std::string render_rewrite(const SourcePrompt& original, const CanonicalPrompt& rewrite);

/// Python string literal for `value` using `quote`, escaping as needed.
std::string python_literal(std::string_view value, char quote, bool fstring = false);

/// Replaces the span with the rendered rewrite if the span still hashes to
/// the recorded raw text. Writes `<file>.bak` first and swaps the new content
/// in through a temporary file and rename. Serialized per file.
FixAction apply_fix(FixAction action);

}  // namespace promptdoctor
