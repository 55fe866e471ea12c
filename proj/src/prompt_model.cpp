#include "promptdoctor/prompt_model.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "lexer.hpp"
#include "promptdoctor/errors.hpp"
#include "promptdoctor/hashing.hpp"
#include "promptdoctor/text_util.hpp"

namespace promptdoctor {

using detail::Chain;
using detail::ChainParser;
using detail::Formatting;
using detail::TokKind;

std::string_view to_string(LanguageHint hint) {
  return hint == LanguageHint::python_like ? "python-like" : "generic-template";
}

LanguageHint language_hint_for_path(std::string_view path) {
  auto ends_with = [&](std::string_view suf) {
    return path.size() >= suf.size() && path.substr(path.size() - suf.size()) == suf;
  };
  return ends_with(".py") || ends_with(".pyi") ? LanguageHint::python_like : LanguageHint::generic_template;
}

std::string SourcePrompt::make_id(std::string_view file, Span span, std::string_view raw) {
  std::string key;
  key.reserve(file.size() + raw.size() + 32);
  key.append(file);
  key.push_back('\0');
  key.append(std::to_string(span.start)).push_back(':');
  key.append(std::to_string(span.end));
  key.push_back('\0');
  key.append(raw);
  return sha256_hex(key).substr(0, 16);
}

// ---------------------------------------------------------------------------
// CanonicalPrompt / builder

std::vector<std::string> CanonicalPrompt::hole_names() const {
  std::vector<std::string> out;
  out.reserve(holes_.size());
  for (const auto& h : holes_) out.push_back(h.name);
  return out;
}

std::set<std::string> CanonicalPrompt::hole_set() const {
  std::set<std::string> out;
  for (const auto& h : holes_) out.insert(h.name);
  return out;
}

bool CanonicalPrompt::has_hole(std::string_view name) const {
  return std::any_of(holes_.begin(), holes_.end(), [&](const Hole& h) { return h.name == name; });
}

void CanonicalBuilder::literal(std::string_view s) {
  for (char c : s) {
    out_.text_.push_back(c);
    if (c == '{' || c == '}') out_.text_.push_back(c);
  }
}

void CanonicalBuilder::hole(const std::string& name) {
  out_.text_.push_back('{');
  out_.text_.append(name);
  out_.text_.push_back('}');
  if (!out_.has_hole(name)) out_.holes_.push_back(Hole{name, out_.holes_.size()});
}

std::string CanonicalBuilder::synthetic_name() {
  std::string name;
  do {
    name = "PLACEHOLDER_" + std::to_string(++synthetic_);
  } while (out_.has_hole(name));
  return name;
}

CanonicalPrompt CanonicalBuilder::build(std::optional<std::string> origin) && {
  out_.origin_ = std::move(origin);
  return std::move(out_);
}

namespace {

std::string sanitize_name(std::string_view s) {
  std::string out;
  for (char c : s) {
    out.push_back(text::is_ident_char(static_cast<unsigned char>(c)) ? c : '_');
  }
  if (out.empty() || !text::is_ident_start(static_cast<unsigned char>(out[0]))) out.insert(out.begin(), '_');
  return out;
}

bool is_dotted_identifier(std::string_view s) {
  if (s.empty()) return false;
  std::size_t start = 0;
  while (true) {
    auto dot = s.find('.', start);
    auto part = s.substr(start, dot == std::string_view::npos ? std::string_view::npos : dot - start);
    if (!text::is_identifier(part)) return false;
    if (dot == std::string_view::npos) return true;
    start = dot + 1;
  }
}

/// Generic template scan shared by CanonicalPrompt::parse: `{{`/`}}` escapes,
/// `{name}` fields, `{}` positional fields.
void scan_template(std::string_view s, CanonicalBuilder& b) {
  std::string lit;
  auto flush = [&] {
    b.literal(lit);
    lit.clear();
  };
  for (std::size_t i = 0; i < s.size(); ++i) {
    char c = s[i];
    if (c == '{' && i + 1 < s.size() && s[i + 1] == '{') {
      lit.push_back('{');
      ++i;
    } else if (c == '}' && i + 1 < s.size() && s[i + 1] == '}') {
      lit.push_back('}');
      ++i;
    } else if (c == '{') {
      auto close = s.find('}', i + 1);
      auto next_open = s.find('{', i + 1);
      if (close != std::string_view::npos && (next_open == std::string_view::npos || next_open > close)) {
        auto inner = text::trim(s.substr(i + 1, close - i - 1));
        if (inner.empty() || text::is_identifier(inner)) {
          flush();
          b.hole(inner.empty() ? b.synthetic_name() : std::string(inner));
          i = close;
          continue;
        }
      } else {
        // A field that opens and never closes before the next field cannot be repaired.
        std::size_t j = i + 1;
        while (j < s.size() && (text::is_ident_char(static_cast<unsigned char>(s[j])) || s[j] == ' ')) ++j;
        if (j > i + 1 && (j == s.size() || s[j] == '{')) {
          throw CanonicalizationError("unbalanced '{' at offset " + std::to_string(i));
        }
      }
      lit.push_back('{');
    } else {
      lit.push_back(c);
    }
  }
  flush();
}

std::string strip_wrappers(std::string_view expr) {
  auto e = text::trim(expr);
  for (std::string_view w : {"str(", "repr(", "int(", "float("}) {
    if (e.size() > w.size() && e.substr(0, w.size()) == w && e.back() == ')') {
      auto inner = text::trim(e.substr(w.size(), e.size() - w.size() - 1));
      if (is_dotted_identifier(inner)) return std::string(inner);
    }
  }
  return std::string(e);
}

struct ScanContext {
  CanonicalBuilder& builder;
  std::vector<HoleBinding>& bindings;
  std::string pending;  // literal text waiting to be flushed
  std::size_t positional = 0;

  void flush() {
    builder.literal(pending);
    pending.clear();
  }
  void add_hole(std::optional<std::string> name, std::optional<std::string> expr) {
    flush();
    if (!name && expr) {
      // The same unnamed expression twice is one hole.
      auto same = std::find_if(bindings.begin(), bindings.end(), [&](const HoleBinding& hb) { return hb.expr == expr; });
      if (same != bindings.end()) name = same->name;
    }
    std::string n = name ? *name : builder.synthetic_name();
    builder.hole(n);
    if (std::none_of(bindings.begin(), bindings.end(), [&](const HoleBinding& hb) { return hb.name == n; })) {
      bindings.push_back(HoleBinding{n, std::move(expr)});
    }
  }
};

/// Finds the `}` closing a replacement field opened at `open`, honouring
/// nested brackets and quoted strings.
std::size_t find_field_close(std::string_view s, std::size_t open) {
  int depth = 0;
  char quote = 0;
  for (std::size_t i = open + 1; i < s.size(); ++i) {
    char c = s[i];
    if (quote) {
      if (c == quote) quote = 0;
      continue;
    }
    if (c == '\'' || c == '"') {
      quote = c;
    } else if (c == '(' || c == '[' || c == '{') {
      ++depth;
    } else if (c == ')' || c == ']') {
      --depth;
    } else if (c == '}') {
      if (depth == 0) return i;
      --depth;
    }
  }
  return std::string_view::npos;
}

/// Splits `expr!conv:spec` at the first top-level `!` or `:`.
std::string_view field_expression(std::string_view field) {
  int depth = 0;
  char quote = 0;
  for (std::size_t i = 0; i < field.size(); ++i) {
    char c = field[i];
    if (quote) {
      if (c == quote) quote = 0;
      continue;
    }
    if (c == '\'' || c == '"') quote = c;
    else if (c == '(' || c == '[' || c == '{') ++depth;
    else if (c == ')' || c == ']' || c == '}') --depth;
    else if (depth == 0 && c == '!' && (i + 1 >= field.size() || field[i + 1] != '=')) return field.substr(0, i);
    else if (depth == 0 && c == ':') return field.substr(0, i);
  }
  return field;
}

void scan_braced_literal(std::string_view s, bool fstring, const detail::Term& term, ScanContext& ctx) {
  std::vector<const detail::CallArg*> positional_args;
  for (const auto& a : term.args) {
    if (!a.keyword) positional_args.push_back(&a);
  }
  for (std::size_t i = 0; i < s.size(); ++i) {
    char c = s[i];
    if ((c == '{' || c == '}') && i + 1 < s.size() && s[i + 1] == c) {
      ctx.pending.push_back(c);
      ++i;
      continue;
    }
    if (c == '}') {
      ctx.pending.push_back(c);
      continue;
    }
    if (c != '{') {
      ctx.pending.push_back(c);
      continue;
    }
    auto close = find_field_close(s, i);
    if (close == std::string_view::npos) {
      throw CanonicalizationError("unbalanced '{' in formatted string at offset " + std::to_string(i));
    }
    auto expr = text::trim(field_expression(s.substr(i + 1, close - i - 1)));
    if (fstring) {
      std::string e(expr);
      ctx.add_hole(hole_name_for_expr(e), e);
    } else if (expr.empty() || std::all_of(expr.begin(), expr.end(), [](char d) { return std::isdigit(static_cast<unsigned char>(d)); })) {
      std::size_t idx = expr.empty() ? ctx.positional++ : static_cast<std::size_t>(std::stoul(std::string(expr)));
      if (idx < positional_args.size()) {
        const auto& arg = *positional_args[idx];
        ctx.add_hole(hole_name_for_expr(arg.expr), arg.expr);
      } else {
        ctx.add_hole(std::nullopt, std::nullopt);
      }
    } else {
      auto head = expr.substr(0, std::min(expr.find('.'), expr.find('[')));
      ctx.add_hole(sanitize_name(head), std::nullopt);
    }
    i = close;
  }
}

/// Plain literal: `{ident}` template fields, doubled braces as escapes.
void scan_plain_literal(std::string_view s, ScanContext& ctx) {
  for (std::size_t i = 0; i < s.size(); ++i) {
    char c = s[i];
    if ((c == '{' || c == '}') && i + 1 < s.size() && s[i + 1] == c) {
      ctx.pending.push_back(c);
      ++i;
      continue;
    }
    if (c == '{') {
      auto close = s.find('}', i + 1);
      if (close != std::string_view::npos) {
        auto inner = s.substr(i + 1, close - i - 1);
        if (text::is_identifier(inner)) {
          ctx.add_hole(std::string(inner), std::nullopt);
          i = close;
          continue;
        }
      }
    }
    ctx.pending.push_back(c);
  }
}

void scan_percent_literal(std::string_view s, const detail::Term& term, ScanContext& ctx) {
  std::string plain;
  auto flush_plain = [&] {
    scan_plain_literal(plain, ctx);
    plain.clear();
  };
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] != '%') {
      plain.push_back(s[i]);
      continue;
    }
    if (i + 1 < s.size() && s[i + 1] == '%') {
      plain.push_back('%');
      ++i;
      continue;
    }
    std::size_t j = i + 1;
    std::optional<std::string> key;
    if (j < s.size() && s[j] == '(') {
      auto close = s.find(')', j);
      if (close == std::string_view::npos) {
        plain.push_back('%');
        continue;
      }
      key = std::string(s.substr(j + 1, close - j - 1));
      j = close + 1;
    }
    while (j < s.size() && std::string_view("#0- +").find(s[j]) != std::string_view::npos) ++j;
    while (j < s.size() && (std::isdigit(static_cast<unsigned char>(s[j])) || s[j] == '*')) ++j;
    if (j < s.size() && s[j] == '.') {
      ++j;
      while (j < s.size() && std::isdigit(static_cast<unsigned char>(s[j]))) ++j;
    }
    while (j < s.size() && std::string_view("hlL").find(s[j]) != std::string_view::npos) ++j;
    if (j >= s.size() || std::string_view("diouxXeEfFgGcrsa").find(s[j]) == std::string_view::npos) {
      plain.push_back('%');
      continue;
    }
    flush_plain();
    if (key) {
      std::optional<std::string> expr;
      if (term.args.size() == 1 && is_dotted_identifier(text::trim(term.args[0].expr))) {
        expr = term.args[0].expr + "['" + *key + "']";
      }
      ctx.add_hole(sanitize_name(*key), expr);
    } else {
      std::size_t idx = ctx.positional++;
      if (idx < term.args.size() && !term.args[idx].is_string) {
        ctx.add_hole(hole_name_for_expr(term.args[idx].expr), term.args[idx].expr);
      } else if (idx < term.args.size()) {
        // A string argument is constant text; inline it.
        auto lexed = detail::lex_python(term.args[idx].expr);
        ChainParser p(term.args[idx].expr, lexed.tokens);
        auto chain = p.parse(0);
        if (chain && chain->terms.size() == 1 && chain->terms[0].elements.size() == 1 &&
            chain->terms[0].elements[0].is_literal) {
          ctx.pending += chain->terms[0].elements[0].lit.value;
        } else {
          ctx.add_hole(std::nullopt, std::nullopt);
        }
      } else {
        ctx.add_hole(std::nullopt, std::nullopt);
      }
    }
    i = j;
  }
  flush_plain();
}

}  // namespace

std::optional<std::string> hole_name_for_expr(std::string_view expr) {
  std::string e = strip_wrappers(expr);
  std::string_view v = e;
  for (std::string_view pre : {"self.", "cls."}) {
    if (v.size() > pre.size() && v.substr(0, pre.size()) == pre) v.remove_prefix(pre.size());
  }
  if (!is_dotted_identifier(v)) return std::nullopt;
  std::string out(v);
  std::replace(out.begin(), out.end(), '.', '_');
  return out;
}

CanonicalPrompt CanonicalPrompt::parse(std::string_view text, std::optional<std::string> origin) {
  CanonicalBuilder b;
  scan_template(text, b);
  return std::move(b).build(std::move(origin));
}

CanonicalForm canonicalize_detailed(const SourcePrompt& p) {
  if (p.raw.empty()) throw PreconditionError("cannot canonicalize an empty prompt");
  CanonicalForm form;
  std::optional<std::string> origin = p.id.empty() ? std::nullopt : std::optional<std::string>(p.id);
  if (p.language_hint == LanguageHint::generic_template) {
    form.prompt = CanonicalPrompt::parse(p.raw, origin);
    for (const auto& h : form.prompt.holes()) form.bindings.push_back(HoleBinding{h.name, std::nullopt});
    return form;
  }

  auto lexed = detail::lex_python(p.raw);
  auto& toks = lexed.tokens;
  while (!toks.empty() && toks.back().kind == TokKind::newline) toks.pop_back();
  if (lexed.errors > 0 || toks.empty()) throw CanonicalizationError("raw prompt is not a string expression");
  ChainParser parser(p.raw, toks);
  auto chain = parser.parse(0);
  if (!chain || chain->end_token != toks.size() || !chain->has_string) {
    throw CanonicalizationError("raw prompt is not a supported string expression");
  }

  CanonicalBuilder builder;
  ScanContext ctx{builder, form.bindings, {}, 0};
  std::size_t format_terms = 0;
  bool quote_set = false;
  for (const auto& term : chain->terms) {
    ctx.positional = 0;
    if (term.formatting == Formatting::format_call) {
      ++format_terms;
      form.format_suffix = term.suffix_text;
    }
    form.used_percent = form.used_percent || term.formatting == Formatting::percent;
    for (const auto& el : term.elements) {
      if (!el.is_literal) {
        form.used_concat = true;
        ctx.add_hole(hole_name_for_expr(el.expr), el.expr);
        continue;
      }
      if (!quote_set) {
        form.quote = el.lit.quote;
        quote_set = true;
      }
      if (el.lit.fstring) {
        form.used_fstring = true;
        scan_braced_literal(el.lit.value, true, term, ctx);
      } else if (term.formatting == Formatting::format_call) {
        scan_braced_literal(el.lit.value, false, term, ctx);
      } else if (term.formatting == Formatting::percent) {
        scan_percent_literal(el.lit.value, term, ctx);
      } else {
        scan_plain_literal(el.lit.value, ctx);
      }
    }
  }
  ctx.flush();
  if (format_terms > 1) form.format_suffix.clear();
  form.prompt = std::move(builder).build(origin);
  return form;
}

CanonicalPrompt canonicalize(const SourcePrompt& p) { return canonicalize_detailed(p).prompt; }

namespace {

template <typename OnHole>
void walk_canonical(std::string_view text, std::string& out, bool unescape, OnHole&& on_hole) {
  for (std::size_t i = 0; i < text.size(); ++i) {
    char c = text[i];
    if ((c == '{' || c == '}') && i + 1 < text.size() && text[i + 1] == c) {
      out.push_back(c);
      if (!unescape) out.push_back(c);
      ++i;
      continue;
    }
    if (c == '{') {
      auto close = text.find('}', i + 1);
      if (close != std::string_view::npos) {
        on_hole(std::string(text.substr(i + 1, close - i - 1)));
        i = close;
        continue;
      }
    }
    out.push_back(c);
  }
}

}  // namespace

std::string substitute(const CanonicalPrompt& cp, const std::map<std::string, std::string>& values) {
  for (const auto& h : cp.holes()) {
    if (!values.count(h.name)) throw MissingValueError(h.name);
  }
  std::string out;
  out.reserve(cp.text().size());
  walk_canonical(cp.text(), out, true, [&](const std::string& name) { out += values.at(name); });
  return out;
}

std::string instantiate(const CanonicalPrompt& cp, const std::map<std::string, std::string>& values) {
  std::string out;
  out.reserve(cp.text().size());
  walk_canonical(cp.text(), out, false, [&](const std::string& name) {
    auto it = values.find(name);
    if (it == values.end()) {
      out += "{" + name + "}";
      return;
    }
    for (char c : it->second) {
      out.push_back(c);
      if (c == '{' || c == '}') out.push_back(c);
    }
  });
  return out;
}

// ---------------------------------------------------------------------------
// Extraction

namespace {

bool matches_pattern(std::string_view name, const std::vector<std::string>& patterns) {
  auto lower = text::to_lower(name);
  return std::any_of(patterns.begin(), patterns.end(),
                     [&](const std::string& p) { return lower.find(text::to_lower(p)) != std::string::npos; });
}

bool is_chain_terminator(const std::vector<detail::Token>& toks, std::size_t i) {
  if (i >= toks.size()) return true;
  const auto& t = toks[i];
  if (t.kind == TokKind::newline) return true;
  return detail::is_op(t, ",") || detail::is_op(t, ")") || detail::is_op(t, "]") || detail::is_op(t, "}") ||
         detail::is_op(t, ";");
}

std::size_t literal_length(const Chain& chain) {
  std::size_t n = 0;
  for (const auto& term : chain.terms) {
    for (const auto& el : term.elements) {
      if (el.is_literal) n += text::codepoint_length(el.lit.value);
    }
  }
  return n;
}

}  // namespace

std::vector<SourcePrompt> extract_prompts(std::string_view source_text, LanguageHint hint, std::string_view file,
                                          const ExtractOptions& options, ExtractDiagnostics* diagnostics) {
  ExtractDiagnostics local;
  ExtractDiagnostics& diag = diagnostics ? *diagnostics : local;
  std::vector<SourcePrompt> out;

  if (hint == LanguageHint::generic_template) {
    auto trimmed = text::trim(source_text);
    if (trimmed.empty()) return out;
    if (text::codepoint_length(trimmed) < options.min_length) {
      ++diag.too_short;
      return out;
    }
    SourcePrompt sp;
    sp.file = std::string(file);
    sp.span.start = static_cast<std::size_t>(trimmed.data() - source_text.data());
    sp.span.end = sp.span.start + trimmed.size();
    sp.raw = std::string(trimmed);
    sp.language_hint = hint;
    sp.id = SourcePrompt::make_id(sp.file, sp.span, sp.raw);
    out.push_back(std::move(sp));
    return out;
  }

  auto lexed = detail::lex_python(source_text);
  diag.lex_errors += lexed.errors;
  const auto& toks = lexed.tokens;
  ChainParser parser(source_text, toks);

  std::vector<std::size_t> starts;
  for (std::size_t k = 0; k + 1 < toks.size(); ++k) {
    if (toks[k].kind != TokKind::name) continue;
    // `name = chain` covers plain assignments and keyword arguments.
    if (detail::is_op(toks[k + 1], "=") && matches_pattern(toks[k].text, options.name_patterns)) {
      starts.push_back(k + 2);
      continue;
    }
    if (detail::is_op(toks[k + 1], "(")) {
      std::size_t first = k;
      while (first >= 2 && detail::is_op(toks[first - 1], ".") && toks[first - 2].kind == TokKind::name) first -= 2;
      auto callee = parser.slice(first, k + 1);
      if (!matches_pattern(callee, options.name_patterns)) continue;
      auto close = parser.skip_group(k + 1);
      if (!close) continue;
      std::size_t arg_start = k + 2;
      std::size_t j = arg_start;
      while (j < *close) {
        if (detail::is_op(toks[j], "(") || detail::is_op(toks[j], "[") || detail::is_op(toks[j], "{")) {
          auto g = parser.skip_group(j);
          if (!g) break;
          j = *g;
          continue;
        }
        if (detail::is_op(toks[j], ",") || j + 1 == *close) {
          std::size_t s = arg_start;
          if (s + 1 < toks.size() && toks[s].kind == TokKind::name && detail::is_op(toks[s + 1], "=")) s += 2;
          if (s < *close - 0 && s <= j) starts.push_back(s);
          arg_start = j + 1;
        }
        ++j;
      }
    }
  }
  std::sort(starts.begin(), starts.end());
  starts.erase(std::unique(starts.begin(), starts.end()), starts.end());

  std::size_t covered_until = 0;
  for (std::size_t s : starts) {
    if (s >= toks.size()) continue;
    if (!out.empty() && toks[s].begin < covered_until) continue;
    if (toks[s].kind != TokKind::string && !detail::is_op(toks[s], "(")) continue;
    auto chain = parser.parse(s);
    if (!chain || !is_chain_terminator(toks, chain->end_token)) {
      ++diag.unparseable;
      continue;
    }
    if (!chain->has_string) continue;
    if (chain->multi_branch) {
      ++diag.multi_branch;
      continue;
    }
    if (literal_length(*chain) < options.min_length) {
      ++diag.too_short;
      continue;
    }
    SourcePrompt sp;
    sp.file = std::string(file);
    sp.span.start = toks[chain->first_token].begin;
    sp.span.end = toks[chain->end_token - 1].end;
    sp.raw = std::string(source_text.substr(sp.span.start, sp.span.end - sp.span.start));
    sp.language_hint = hint;
    sp.id = SourcePrompt::make_id(sp.file, sp.span, sp.raw);
    covered_until = sp.span.end;
    out.push_back(std::move(sp));
  }
  return out;
}

// ---------------------------------------------------------------------------
// JSONL corpus

nlohmann::json to_json(const CorpusRecord& r) {
  return nlohmann::json{{"id", r.source.id},
                        {"file", r.source.file},
                        {"span", {r.source.span.start, r.source.span.end}},
                        {"text", r.prompt.text()},
                        {"holes", r.prompt.hole_names()},
                        {"raw", r.source.raw}};
}

CorpusRecord corpus_record_from_json(const nlohmann::json& j) {
  CorpusRecord r;
  try {
    r.source.id = j.at("id").get<std::string>();
    r.source.file = j.value("file", std::string{});
    const auto& span = j.at("span");
    r.source.span = Span{span.at(0).get<std::size_t>(), span.at(1).get<std::size_t>()};
    r.source.raw = j.value("raw", std::string{});
    r.source.language_hint = language_hint_for_path(r.source.file);
    r.prompt = CanonicalPrompt::parse(j.at("text").get<std::string>(), r.source.id);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed corpus record: ") + e.what());
  }
  if (j.contains("holes") && j["holes"].get<std::vector<std::string>>() != r.prompt.hole_names()) {
    throw ConfigError("corpus record " + r.source.id + ": holes do not match text");
  }
  return r;
}

std::vector<CorpusRecord> read_corpus_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::vector<CorpusRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (text::trim(line).empty()) continue;
    try {
      out.push_back(corpus_record_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(path + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const Error& e) {
      throw ConfigError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

void write_corpus_jsonl(const std::string& path, const std::vector<CorpusRecord>& records) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  for (const auto& r : records) out << to_json(r).dump() << '\n';
}

}  // namespace promptdoctor
