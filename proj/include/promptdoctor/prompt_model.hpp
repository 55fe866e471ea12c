#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace promptdoctor {

enum class LanguageHint { python_like, generic_template };

std::string_view to_string(LanguageHint hint);
LanguageHint language_hint_for_path(std::string_view path);

struct Span {
  std::size_t start = 0;
  std::size_t end = 0;
  friend bool operator==(const Span&, const Span&) = default;
};

/// A prompt as it appears in source code, before canonicalization.
struct SourcePrompt {
  std::string id;
  std::string file;
  Span span;
  std::string raw;
  LanguageHint language_hint = LanguageHint::python_like;

  static std::string make_id(std::string_view file, Span span, std::string_view raw);
};

struct Hole {
  std::string name;
  std::size_t index = 0;
  friend bool operator==(const Hole&, const Hole&) = default;
};

/// Prompt text with every hole rendered as `{name}` and literal braces doubled.
///
/// Construct through canonicalize() or CanonicalPrompt::parse(); both keep the
/// hole list in first-appearance order with unique names.
class CanonicalPrompt {
 public:
  CanonicalPrompt() = default;

  /// Parses text already in canonical form. Stray single braces are repaired
  /// into literals; an opening brace that starts a field and never closes is
  /// a CanonicalizationError.
  static CanonicalPrompt parse(std::string_view text, std::optional<std::string> origin = std::nullopt);

  const std::string& text() const noexcept { return text_; }
  const std::vector<Hole>& holes() const noexcept { return holes_; }
  const std::optional<std::string>& origin() const noexcept { return origin_; }
  std::size_t hole_count() const noexcept { return holes_.size(); }

  std::vector<std::string> hole_names() const;
  std::set<std::string> hole_set() const;
  bool has_hole(std::string_view name) const;
  bool same_holes(const CanonicalPrompt& other) const { return hole_set() == other.hole_set(); }

  void set_origin(std::optional<std::string> origin) { origin_ = std::move(origin); }

  friend bool operator==(const CanonicalPrompt&, const CanonicalPrompt&) = default;

 private:
  friend class CanonicalBuilder;
  std::string text_;
  std::vector<Hole> holes_;
  std::optional<std::string> origin_;
};

/// Incrementally assembles canonical text, escaping literals and registering
/// holes on first appearance.
class CanonicalBuilder {
 public:
  void literal(std::string_view s);
  void hole(const std::string& name);
  /// Allocates the next `PLACEHOLDER_k` name.
  std::string synthetic_name();
  CanonicalPrompt build(std::optional<std::string> origin = std::nullopt) &&;

 private:
  CanonicalPrompt out_;
  std::size_t synthetic_ = 0;
};

/// Where a hole's runtime value came from in the original source.
struct HoleBinding {
  std::string name;
  /// Source expression producing the value (`question`, `self.ctx`), or empty
  /// when the hole is a template field filled later by name.
  std::optional<std::string> expr;
};

/// Canonicalization plus what apply-fix needs to re-render a rewrite in the
/// original source's style.
struct CanonicalForm {
  CanonicalPrompt prompt;
  std::vector<HoleBinding> bindings;
  /// Trailing `.format(...)` text kept verbatim when fields are filled by keyword.
  std::string format_suffix;
  bool used_fstring = false;
  bool used_concat = false;
  bool used_percent = false;
  char quote = '"';
};

CanonicalForm canonicalize_detailed(const SourcePrompt& p);
CanonicalPrompt canonicalize(const SourcePrompt& p);

/// Final runtime string: holes replaced by values verbatim, escaped braces unescaped.
std::string substitute(const CanonicalPrompt& cp, const std::map<std::string, std::string>& values);

/// Canonical-form instantiation: supplied holes are replaced with values whose
/// braces are escaped; holes without a value stay as `{name}`. The result
/// re-parses with exactly the unfilled holes.
std::string instantiate(const CanonicalPrompt& cp, const std::map<std::string, std::string>& values);

/// Turns a source expression into a hole name, or nullopt when it cannot be named.
std::optional<std::string> hole_name_for_expr(std::string_view expr);

struct ExtractOptions {
  std::vector<std::string> name_patterns{"prompt", "complete", "chat", "message", "content"};
  std::size_t min_length = 32;
};

struct ExtractDiagnostics {
  std::size_t lex_errors = 0;
  std::size_t unparseable = 0;
  std::size_t multi_branch = 0;
  std::size_t too_short = 0;
};

std::vector<SourcePrompt> extract_prompts(std::string_view source_text, LanguageHint hint,
                                          std::string_view file = {}, const ExtractOptions& options = {},
                                          ExtractDiagnostics* diagnostics = nullptr);

/// One line of the canonical corpus `.jsonl`.
struct CorpusRecord {
  SourcePrompt source;
  CanonicalPrompt prompt;
};

nlohmann::json to_json(const CorpusRecord& r);
CorpusRecord corpus_record_from_json(const nlohmann::json& j);

std::vector<CorpusRecord> read_corpus_jsonl(const std::string& path);
void write_corpus_jsonl(const std::string& path, const std::vector<CorpusRecord>& records);

}  // namespace promptdoctor
