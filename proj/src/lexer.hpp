#pragma once

// Lexer and expression-chain parser for python-like sources. Internal to the
// library; consumed by extraction and canonicalization.

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace promptdoctor::detail {

enum class TokKind { string, name, number, op, newline };

struct Token {
  TokKind kind;
  std::size_t begin = 0;
  std::size_t end = 0;
  std::string_view text;
  // String tokens only.
  std::string prefix;  // lowercased
  std::string_view body;
  char quote = '"';
};

struct LexResult {
  std::vector<Token> tokens;
  std::size_t errors = 0;
};

LexResult lex_python(std::string_view src);

/// Decodes backslash escapes of a non-raw python string body.
std::string decode_python_escapes(std::string_view body);

struct StringLit {
  std::string value;  // decoded
  bool fstring = false;
  char quote = '"';
};

struct CallArg {
  std::optional<std::string> keyword;
  std::string expr;
  bool is_string = false;
};

/// One element of an expression chain: a string literal or an opaque expression.
struct Element {
  bool is_literal = false;
  StringLit lit;
  std::string expr;  // source text when !is_literal
};

enum class Formatting { none, format_call, percent };

/// A `+`-separated operand, possibly a parenthesized group, with any
/// `.format(...)` or `% args` applied to its literals.
struct Term {
  std::vector<Element> elements;
  Formatting formatting = Formatting::none;
  std::vector<CallArg> args;
  std::string suffix_text;  // `.format(...)` source text
};

struct Chain {
  std::vector<Term> terms;
  std::size_t first_token = 0;
  std::size_t end_token = 0;  // one past last consumed token
  bool has_string = false;
  bool multi_branch = false;
};

class ChainParser {
 public:
  ChainParser(std::string_view src, const std::vector<Token>& toks) : src_(src), toks_(toks) {}

  /// Parses a `+` chain starting at token `i`. Returns nullopt on a syntax the
  /// chain grammar does not cover.
  std::optional<Chain> parse(std::size_t i) const;

  /// Index one past the balanced bracket group opened at `i`.
  std::optional<std::size_t> skip_group(std::size_t i) const;

  std::string_view slice(std::size_t first, std::size_t last_exclusive) const;

 private:
  std::optional<std::size_t> parse_term(std::size_t i, Term& out, Chain& chain) const;
  std::optional<std::size_t> parse_postfix_name(std::size_t i) const;
  std::optional<std::vector<CallArg>> split_args(std::size_t open, std::size_t close) const;

  std::string_view src_;
  const std::vector<Token>& toks_;
};

bool is_op(const Token& t, std::string_view op);

}  // namespace promptdoctor::detail
