#include <catch_amalgamated.hpp>

#include <chrono>
#include <map>
#include <random>
#include <set>

#include "promptdoctor/errors.hpp"
#include "promptdoctor/pipeline.hpp"
#include "promptdoctor/prompt_model.hpp"
#include "support.hpp"

using namespace promptdoctor;

namespace {

SourcePrompt python_prompt(std::string raw) {
  SourcePrompt sp;
  sp.file = "inline.py";
  sp.span = {0, raw.size()};
  sp.raw = std::move(raw);
  sp.language_hint = LanguageHint::python_like;
  return sp;
}

}  // namespace

TEST_CASE("concatenated template with fields canonicalizes to named holes") {
  auto cp = canonicalize(python_prompt(
      R"("Noting the current date {current_date} or time of {current_time} help the human with the following request, Request: "+ question)"));
  CHECK(cp.hole_names() == std::vector<std::string>{"current_date", "current_time", "question"});
  CHECK(cp.text() ==
        "Noting the current date {current_date} or time of {current_time} help the human with the following "
        "request, Request: {question}");
}

TEST_CASE("literal braces are doubled and unescaped by substitute") {
  auto cp = CanonicalPrompt::parse("Reply as JSON {{\"a\": 1}} about {topic}");
  CHECK(cp.hole_names() == std::vector<std::string>{"topic"});
  CHECK(substitute(cp, {{"topic", "cats"}}) == "Reply as JSON {\"a\": 1} about cats");
  auto inst = instantiate(cp, {{"topic", "{x}"}});
  CHECK(CanonicalPrompt::parse(inst).hole_count() == 0);
}

TEST_CASE("missing values are reported by hole") {
  auto cp = CanonicalPrompt::parse("Summarize {doc} for {audience}");
  try {
    substitute(cp, {{"doc", "d"}});
    FAIL("expected MissingValueError");
  } catch (const MissingValueError& e) {
    CHECK(e.hole() == "audience");
  }
}

TEST_CASE("unnamed expressions get synthetic names in order") {
  auto cp = canonicalize(python_prompt(R"(f"Compare {items[0]} with {items[1]} and then {items[0]} again please")"));
  CHECK(cp.hole_names() == std::vector<std::string>{"PLACEHOLDER_1", "PLACEHOLDER_2"});
}

TEST_CASE("fixture corpus round-trips extract, canonicalize, substitute against CPython") {
  auto start = std::chrono::steady_clock::now();
  auto res = extract_paths({pdtest::fixture("corpus").string()});
  auto expected = nlohmann::json::parse(pdtest::slurp(pdtest::fixture("expected_substitutions.json")));
  REQUIRE(res.records.size() == 12);
  REQUIRE(expected.size() == 12);
  std::set<std::string> seen;
  for (const auto& r : res.records) {
    auto name = std::filesystem::path(r.source.file).filename().string();
    INFO(name);
    REQUIRE(expected.contains(name));
    seen.insert(name);
    const auto& e = expected[name];
    auto values = e["values"].get<std::map<std::string, std::string>>();
    std::set<std::string> keys;
    for (const auto& [k, v] : values) keys.insert(k);
    CHECK(r.prompt.hole_set() == keys);
    CHECK(substitute(r.prompt, values) == e["expected"].get<std::string>());
    // Re-canonicalizing the stored form is a no-op.
    CHECK(CanonicalPrompt::parse(r.prompt.text()).text() == r.prompt.text());
  }
  CHECK(seen.size() == 12);
  auto elapsed = std::chrono::steady_clock::now() - start;
  CHECK(elapsed < std::chrono::seconds(1));
}

TEST_CASE("generated f-strings canonicalize to first-appearance holes and substitute like Python", "[property]") {
  std::mt19937_64 rng(20240611);
  const std::vector<std::string> names{"user", "topic", "context", "query", "lang"};
  const std::vector<std::string> words{"Please ", "answer ", "the ", "question: ", "with care. ", "Use ", "JSON ",
                                       "{", "}", "it's ", "\\n"};
  for (int trial = 0; trial < 200; ++trial) {
    std::string literal_src = "f\"Instructions for the assistant follow here. ";
    std::string oracle = "Instructions for the assistant follow here. ";
    std::vector<std::string> order;
    std::map<std::string, std::string> values;
    int parts = 1 + static_cast<int>(rng() % 8);
    for (int i = 0; i < parts; ++i) {
      if (rng() % 2) {
        const auto& n = names[rng() % names.size()];
        literal_src += "{" + n + "}";
        values[n] = "<" + n + ">";
        oracle += values[n];
        if (std::find(order.begin(), order.end(), n) == order.end()) order.push_back(n);
      } else {
        const auto& w = words[rng() % words.size()];
        if (w == "{") {
          literal_src += "{{";
          oracle += "{";
        } else if (w == "}") {
          literal_src += "}}";
          oracle += "}";
        } else if (w == "\\n") {
          literal_src += "\\n";
          oracle += "\n";
        } else {
          literal_src += w;
          oracle += w;
        }
      }
    }
    literal_src += "\"";
    std::string source = "prompt = " + literal_src + "\n";
    auto found = extract_prompts(source, LanguageHint::python_like, "gen.py");
    INFO(source);
    REQUIRE(found.size() == 1);
    auto cp = canonicalize(found[0]);
    CHECK(cp.hole_names() == order);
    CHECK(substitute(cp, values) == oracle);
  }
}

TEST_CASE("canonical parse is idempotent on random text", "[property]") {
  std::mt19937_64 rng(7);
  const std::string alphabet = "ab {}xy_\n";
  for (int trial = 0; trial < 500; ++trial) {
    std::string s;
    std::size_t len = rng() % 40;
    for (std::size_t i = 0; i < len; ++i) s += alphabet[rng() % alphabet.size()];
    try {
      auto cp = CanonicalPrompt::parse(s);
      auto again = CanonicalPrompt::parse(cp.text());
      CHECK(again.text() == cp.text());
      CHECK(again.hole_names() == cp.hole_names());
    } catch (const CanonicalizationError&) {
    }
  }
}

TEST_CASE("extract on an empty directory yields nothing") {
  pdtest::TempDir dir;
  auto res = extract_paths({dir.path().string()});
  CHECK(res.records.empty());
  CHECK(res.files == 0);
}

TEST_CASE("generic templates are taken whole") {
  pdtest::TempDir dir;
  pdtest::spit(dir / "a.prompt", "Translate {text} into {lang} and keep {{braces}} intact.");
  auto res = extract_paths({dir.path().string()});
  REQUIRE(res.records.size() == 1);
  CHECK(res.records[0].prompt.hole_names() == std::vector<std::string>{"text", "lang"});
  CHECK(res.records[0].source.language_hint == LanguageHint::generic_template);
}
