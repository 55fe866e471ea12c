#include "lexer.hpp"

#include <cctype>

#include "promptdoctor/text_util.hpp"

namespace promptdoctor::detail {

namespace {

bool is_prefix_letter(char c) {
  switch (c) {
    case 'r': case 'R': case 'b': case 'B': case 'u': case 'U': case 'f': case 'F':
      return true;
    default:
      return false;
  }
}

constexpr std::string_view kMultiOps[] = {"**=", "//=", ">>=", "<<=", "==", "!=", "<=", ">=", "+=", "-=",
                                          "*=",  "/=",  "%=",  "&=",  "|=", "^=", "->", "**", "//", ":=",
                                          "<<",  ">>"};

}  // namespace

bool is_op(const Token& t, std::string_view op) { return t.kind == TokKind::op && t.text == op; }

LexResult lex_python(std::string_view src) {
  LexResult out;
  std::size_t i = 0;
  int depth = 0;
  auto push = [&](TokKind k, std::size_t b, std::size_t e) {
    Token t{k, b, e, src.substr(b, e - b), {}, {}, '"'};
    out.tokens.push_back(std::move(t));
  };
  while (i < src.size()) {
    char c = src[i];
    if (c == '\n') {
      if (depth == 0 && !out.tokens.empty() && out.tokens.back().kind != TokKind::newline) {
        push(TokKind::newline, i, i + 1);
      }
      ++i;
      continue;
    }
    if (c == ' ' || c == '\t' || c == '\r' || c == '\f') {
      ++i;
      continue;
    }
    if (c == '\\' && i + 1 < src.size() && (src[i + 1] == '\n' || src[i + 1] == '\r')) {
      i += 2;
      if (i < src.size() && src[i - 1] == '\r' && src[i] == '\n') ++i;
      continue;
    }
    if (c == '#') {
      while (i < src.size() && src[i] != '\n') ++i;
      continue;
    }
    // String literal, possibly prefixed.
    std::size_t prefix_len = 0;
    while (prefix_len < 2 && i + prefix_len < src.size() && is_prefix_letter(src[i + prefix_len])) ++prefix_len;
    std::size_t q = i + prefix_len;
    bool prefix_ok = prefix_len == 0 || (i == 0 || !text::is_ident_char(static_cast<unsigned char>(src[i - 1])));
    if (q < src.size() && (src[q] == '"' || src[q] == '\'') && prefix_ok) {
      char quote = src[q];
      bool triple = q + 2 < src.size() && src[q + 1] == quote && src[q + 2] == quote;
      std::size_t qlen = triple ? 3 : 1;
      std::size_t j = q + qlen;
      std::string prefix = text::to_lower(src.substr(i, prefix_len));
      bool closed = false;
      while (j < src.size()) {
        if (src[j] == '\\' && j + 1 < src.size()) {
          j += 2;
          continue;
        }
        if (!triple && src[j] == '\n') break;
        if (src[j] == quote) {
          if (!triple) {
            closed = true;
            break;
          }
          if (j + 2 < src.size() && src[j + 1] == quote && src[j + 2] == quote) {
            closed = true;
            break;
          }
        }
        ++j;
      }
      if (!closed) {
        ++out.errors;
        while (i < src.size() && src[i] != '\n') ++i;
        continue;
      }
      std::size_t end = j + qlen;
      Token t{TokKind::string, i, end, src.substr(i, end - i), prefix, src.substr(q + qlen, j - q - qlen), quote};
      out.tokens.push_back(std::move(t));
      i = end;
      continue;
    }
    auto uc = static_cast<unsigned char>(c);
    if (text::is_ident_start(uc) || uc >= 0x80) {
      std::size_t j = i + 1;
      while (j < src.size() &&
             (text::is_ident_char(static_cast<unsigned char>(src[j])) || static_cast<unsigned char>(src[j]) >= 0x80)) {
        ++j;
      }
      push(TokKind::name, i, j);
      i = j;
      continue;
    }
    if (std::isdigit(uc) || (c == '.' && i + 1 < src.size() && std::isdigit(static_cast<unsigned char>(src[i + 1])))) {
      std::size_t j = i + 1;
      while (j < src.size() && (std::isalnum(static_cast<unsigned char>(src[j])) || src[j] == '.' || src[j] == '_')) ++j;
      push(TokKind::number, i, j);
      i = j;
      continue;
    }
    std::size_t len = 1;
    for (auto op : kMultiOps) {
      if (src.substr(i, op.size()) == op) {
        len = op.size();
        break;
      }
    }
    if (len == 1) {
      if (c == '(' || c == '[' || c == '{') ++depth;
      if ((c == ')' || c == ']' || c == '}') && depth > 0) --depth;
    }
    push(TokKind::op, i, i + len);
    i += len;
  }
  return out;
}

std::string decode_python_escapes(std::string_view body) {
  std::string out;
  out.reserve(body.size());
  for (std::size_t i = 0; i < body.size(); ++i) {
    char c = body[i];
    if (c != '\\' || i + 1 >= body.size()) {
      out.push_back(c);
      continue;
    }
    char n = body[++i];
    switch (n) {
      case 'n': out.push_back('\n'); break;
      case 't': out.push_back('\t'); break;
      case 'r': out.push_back('\r'); break;
      case '\\': out.push_back('\\'); break;
      case '\'': out.push_back('\''); break;
      case '"': out.push_back('"'); break;
      case '0': out.push_back('\0'); break;
      case '\n': break;  // line continuation
      case 'x':
      case 'u':
      case 'U': {
        std::size_t digits = n == 'x' ? 2 : (n == 'u' ? 4 : 8);
        std::string_view hex = body.substr(i + 1, digits);
        bool ok = hex.size() == digits;
        for (char h : hex) ok = ok && std::isxdigit(static_cast<unsigned char>(h));
        if (ok) {
          text::append_utf8(out, static_cast<char32_t>(std::stoul(std::string(hex), nullptr, 16)));
          i += digits;
          break;
        }
        out.push_back('\\');
        out.push_back(n);
        break;
      }
      default:
        out.push_back('\\');
        out.push_back(n);
    }
  }
  return out;
}

std::string_view ChainParser::slice(std::size_t first, std::size_t last_exclusive) const {
  if (first >= last_exclusive) return {};
  std::size_t b = toks_[first].begin;
  std::size_t e = toks_[last_exclusive - 1].end;
  return src_.substr(b, e - b);
}

std::optional<std::size_t> ChainParser::skip_group(std::size_t i) const {
  if (i >= toks_.size() || toks_[i].kind != TokKind::op) return std::nullopt;
  std::vector<char> stack;
  for (std::size_t j = i; j < toks_.size(); ++j) {
    const Token& t = toks_[j];
    if (t.kind != TokKind::op || t.text.size() != 1) continue;
    char c = t.text[0];
    if (c == '(' || c == '[' || c == '{') {
      stack.push_back(c == '(' ? ')' : (c == '[' ? ']' : '}'));
    } else if (c == ')' || c == ']' || c == '}') {
      if (stack.empty() || stack.back() != c) return std::nullopt;
      stack.pop_back();
      if (stack.empty()) return j + 1;
    }
  }
  return std::nullopt;
}

std::optional<std::size_t> ChainParser::parse_postfix_name(std::size_t i) const {
  if (i >= toks_.size() || toks_[i].kind != TokKind::name) return std::nullopt;
  std::size_t j = i + 1;
  while (j < toks_.size()) {
    if (is_op(toks_[j], ".") && j + 1 < toks_.size() && toks_[j + 1].kind == TokKind::name) {
      j += 2;
    } else if (is_op(toks_[j], "(") || is_op(toks_[j], "[")) {
      auto g = skip_group(j);
      if (!g) return std::nullopt;
      j = *g;
    } else {
      break;
    }
  }
  return j;
}

std::optional<std::vector<CallArg>> ChainParser::split_args(std::size_t open, std::size_t close) const {
  std::vector<CallArg> args;
  std::size_t start = open + 1;
  std::size_t j = start;
  auto flush = [&](std::size_t end) {
    if (end <= start) return;
    CallArg a;
    std::size_t b = start;
    if (end - start >= 2 && toks_[start].kind == TokKind::name && is_op(toks_[start + 1], "=")) {
      a.keyword = std::string(toks_[start].text);
      b = start + 2;
    }
    a.expr = std::string(slice(b, end));
    a.is_string = true;
    for (std::size_t k = b; k < end; ++k) a.is_string = a.is_string && toks_[k].kind == TokKind::string;
    args.push_back(std::move(a));
  };
  while (j < close) {
    const Token& t = toks_[j];
    if (is_op(t, "(") || is_op(t, "[") || is_op(t, "{")) {
      auto g = skip_group(j);
      if (!g || *g > close) return std::nullopt;
      j = *g;
      continue;
    }
    if (is_op(t, ",")) {
      flush(j);
      start = j + 1;
    }
    ++j;
  }
  flush(close);
  return args;
}

namespace {

bool is_keyword(std::string_view s) {
  static constexpr std::string_view kw[] = {"if", "else", "for", "in", "lambda", "not", "and", "or", "await",
                                            "return", "yield", "is", "None", "True", "False", "def", "class"};
  for (auto k : kw) {
    if (s == k) return true;
  }
  return false;
}

}  // namespace

std::optional<std::size_t> ChainParser::parse_term(std::size_t i, Term& out, Chain& chain) const {
  if (i >= toks_.size()) return std::nullopt;
  const Token& t = toks_[i];
  std::size_t j = i;
  if (t.kind == TokKind::string) {
    while (j < toks_.size() && toks_[j].kind == TokKind::string) {
      const Token& s = toks_[j];
      if (s.prefix.find('b') != std::string::npos) return std::nullopt;
      Element e;
      e.is_literal = true;
      bool raw = s.prefix.find('r') != std::string::npos;
      e.lit.value = raw ? std::string(s.body) : decode_python_escapes(s.body);
      e.lit.fstring = s.prefix.find('f') != std::string::npos;
      e.lit.quote = s.quote;
      out.elements.push_back(std::move(e));
      ++j;
    }
    chain.has_string = true;
  } else if (is_op(t, "(")) {
    auto close = skip_group(j);
    if (!close) return std::nullopt;
    auto inner = parse(j + 1);
    if (inner && inner->end_token == *close - 1 && inner->has_string) {
      bool formatted = false;
      for (const auto& term : inner->terms) formatted = formatted || term.formatting != Formatting::none;
      if (inner->terms.size() == 1) {
        out = inner->terms.front();
      } else if (!formatted) {
        for (const auto& term : inner->terms) {
          out.elements.insert(out.elements.end(), term.elements.begin(), term.elements.end());
        }
      } else {
        return std::nullopt;
      }
      chain.has_string = true;
      chain.multi_branch = chain.multi_branch || inner->multi_branch;
    } else {
      Element e;
      e.expr = std::string(slice(j, *close));
      out.elements.push_back(std::move(e));
    }
    j = *close;
  } else if (t.kind == TokKind::name) {
    if (is_keyword(t.text)) return std::nullopt;
    auto end = parse_postfix_name(j);
    if (!end) return std::nullopt;
    Element e;
    e.expr = std::string(slice(j, *end));
    out.elements.push_back(std::move(e));
    return *end;
  } else if (t.kind == TokKind::number) {
    Element e;
    e.expr = std::string(t.text);
    out.elements.push_back(std::move(e));
    return j + 1;
  } else {
    return std::nullopt;
  }

  // Method suffixes on a literal-bearing term.
  while (j + 2 < toks_.size() && is_op(toks_[j], ".") && toks_[j + 1].kind == TokKind::name &&
         is_op(toks_[j + 2], "(")) {
    auto close = skip_group(j + 2);
    if (!close) return std::nullopt;
    std::string_view method = toks_[j + 1].text;
    if (method == "format" && out.formatting == Formatting::none) {
      auto args = split_args(j + 2, *close - 1);
      if (!args) return std::nullopt;
      out.formatting = Formatting::format_call;
      out.args = std::move(*args);
      out.suffix_text = std::string(slice(j, *close));
    } else if (method == "strip" || method == "lstrip" || method == "rstrip") {
      // whitespace trimming does not change the prompt's content
    } else {
      // Any other method makes the term opaque.
      Element e;
      e.expr = std::string(slice(i, *close));
      out = Term{};
      out.elements.push_back(std::move(e));
      return *close;
    }
    j = *close;
  }

  if (j < toks_.size() && is_op(toks_[j], "%")) {
    std::size_t k = j + 1;
    if (k >= toks_.size()) return std::nullopt;
    std::vector<CallArg> args;
    std::size_t end = 0;
    if (is_op(toks_[k], "(")) {
      auto close = skip_group(k);
      if (!close) return std::nullopt;
      auto split = split_args(k, *close - 1);
      if (!split) return std::nullopt;
      args = std::move(*split);
      end = *close;
    } else if (toks_[k].kind == TokKind::name) {
      auto e = parse_postfix_name(k);
      if (!e) return std::nullopt;
      args.push_back(CallArg{std::nullopt, std::string(slice(k, *e)), false});
      end = *e;
    } else if (toks_[k].kind == TokKind::string || toks_[k].kind == TokKind::number) {
      args.push_back(CallArg{std::nullopt, std::string(toks_[k].text), toks_[k].kind == TokKind::string});
      end = k + 1;
    } else {
      return std::nullopt;
    }
    out.formatting = Formatting::percent;
    out.args = std::move(args);
    j = end;
  }
  return j;
}

std::optional<Chain> ChainParser::parse(std::size_t i) const {
  Chain chain;
  chain.first_token = i;
  std::size_t j = i;
  while (true) {
    Term term;
    auto next = parse_term(j, term, chain);
    if (!next) return std::nullopt;
    chain.terms.push_back(std::move(term));
    j = *next;
    if (j < toks_.size() && toks_[j].kind == TokKind::name && toks_[j].text == "if") chain.multi_branch = true;
    if (j < toks_.size() && is_op(toks_[j], "+")) {
      ++j;
      continue;
    }
    break;
  }
  chain.end_token = j;
  return chain;
}

}  // namespace promptdoctor::detail
