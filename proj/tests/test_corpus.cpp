#include <catch_amalgamated.hpp>

#include <cmath>
#include <map>
#include <random>
#include <set>

#include "promptdoctor/corpus.hpp"
#include "promptdoctor/errors.hpp"
#include "oracles.hpp"

using namespace promptdoctor;
using namespace promptdoctor::corpus;

namespace {

std::vector<CanonicalPrompt> synthetic_corpus(const std::vector<std::size_t>& per_stratum) {
  std::vector<CanonicalPrompt> out;
  for (std::size_t holes = 0; holes < per_stratum.size(); ++holes) {
    for (std::size_t i = 0; i < per_stratum[holes]; ++i) {
      std::string t = "Prompt number " + std::to_string(i) + " in stratum " + std::to_string(holes);
      for (std::size_t h = 0; h < holes; ++h) t += " {h" + std::to_string(h) + "}";
      out.push_back(CanonicalPrompt::parse(t));
    }
  }
  return out;
}

}  // namespace

TEST_CASE("z quantile matches the erf oracle") {
  for (double c : {0.8, 0.9, 0.95, 0.99, 0.999}) CHECK(z_for_confidence(c) == Catch::Approx(pdtest::oracle::z(c)).epsilon(1e-9));
}

TEST_CASE("Cochran sizes match the direct formula", "[property]") {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 500; ++i) {
    std::size_t n = 1 + rng() % 100000;
    double conf = std::vector<double>{0.9, 0.95, 0.99}[rng() % 3];
    double err = std::vector<double>{0.01, 0.03, 0.05, 0.1}[rng() % 4];
    INFO(n << " " << conf << " " << err);
    CHECK(cochran_sample_size(n, conf, err) == pdtest::oracle::cochran(n, conf, err));
  }
}

TEST_CASE("published strata sizes are reproduced within one") {
  const std::vector<std::pair<std::size_t, std::size_t>> strata{
      {20620, 378}, {9427, 370}, {6154, 362}, {2204, 328}, {464, 211}, {651, 242}};
  for (auto [population, published] : strata) {
    auto n = cochran_sample_size(population, 0.95, 0.05);
    INFO(population);
    CHECK(std::llabs(static_cast<long long>(n) - static_cast<long long>(published)) <= 1);
  }
}

TEST_CASE("the four-hole stratum computes to 307, not the published 282") {
  auto n = cochran_sample_size(1503, 0.95, 0.05);
  CHECK(std::llabs(static_cast<long long>(n) - 307) <= 1);
  CHECK(n != 282);
}

TEST_CASE("sample size never exceeds the population") {
  for (std::size_t n = 1; n < 400; ++n) CHECK(cochran_sample_size(n, 0.95, 0.05) <= n);
  CHECK_THROWS_AS(cochran_sample_size(10, 1.5, 0.05), PreconditionError);
}

TEST_CASE("clean drops short and non-English prompts and keeps emoji") {
  std::vector<CanonicalPrompt> corpus{
      CanonicalPrompt::parse("too short"),
      CanonicalPrompt::parse("This prompt is long enough to keep around {x}"),
      CanonicalPrompt::parse("Ce texte est en français et contient des accents"),
      CanonicalPrompt::parse("Reply with a thumbs up \xF0\x9F\x91\x8D when you are done with {task}"),
      CanonicalPrompt::parse("1234567890123456789012345678901"),
      CanonicalPrompt::parse("12345678901234567890123456789012"),
  };
  auto [kept, stats] = clean(corpus);
  CHECK(stats.total == 6);
  CHECK(stats.removed_short == 2);
  CHECK(stats.removed_non_english == 1);
  CHECK(kept.size() == 3);
  CHECK(stats.retained == 3);
  CHECK(stats.strata.at("0") == 1);
  CHECK(stats.strata.at("1") == 2);
}

TEST_CASE("stratified sampling draws Cochran sizes without replacement", "[property]") {
  std::vector<std::size_t> sizes{900, 400, 250, 60, 0, 30, 12};
  auto corpus = synthetic_corpus(sizes);
  for (std::uint64_t seed : {1ULL, 2ULL, 99ULL}) {
    auto res = stratified_sample(corpus, 0.95, 0.05, seed);
    std::map<std::size_t, std::size_t> counts;
    std::set<std::string> texts;
    for (const auto& p : res.prompts) {
      ++counts[std::min<std::size_t>(p.hole_count(), 6)];
      CHECK(texts.insert(p.text()).second);
    }
    for (std::size_t s = 0; s < sizes.size(); ++s) {
      std::size_t want = sizes[s] ? cochran_sample_size(sizes[s], 0.95, 0.05) : 0;
      CHECK(counts[s] == want);
    }
    REQUIRE(res.warnings.size() == 1);
    CHECK(res.warnings[0].find("stratum 4") != std::string::npos);
  }
}

TEST_CASE("stratified sampling is a pure function of the seed") {
  auto corpus = synthetic_corpus({300, 200, 100});
  auto a = stratified_sample(corpus, 0.95, 0.05, 42);
  auto b = stratified_sample(corpus, 0.95, 0.05, 42);
  auto c = stratified_sample(corpus, 0.95, 0.05, 43);
  CHECK(a.prompts == b.prompts);
  CHECK(a.prompts != c.prompts);
}

TEST_CASE("mood heuristics") {
  CHECK(classify_mood("Summarize the text below") == Mood::imperative);
  CHECK(classify_mood("Please translate this sentence") == Mood::imperative);
  CHECK(classify_mood("What is the capital of France") == Mood::interrogative);
  CHECK(classify_mood("The weather is nice today.") == Mood::other);
}

TEST_CASE("categorizer is total and keyword-first") {
  Categorizer cat;
  CHECK(cat.categorize(CanonicalPrompt::parse("Translate {text} into German")) == TaskCategory::translation);
  CHECK(cat.categorize(CanonicalPrompt::parse("Fix the grammar in {text}")) == TaskCategory::grammar_correction);
  CHECK(cat.categorize(CanonicalPrompt::parse("Summarize this article: {text}")) == TaskCategory::summarization);
  CHECK(cat.categorize(CanonicalPrompt::parse("Answer the question: {q}")) == TaskCategory::qa);
  CHECK(cat.categorize(CanonicalPrompt::parse("{x}")) == TaskCategory::uncategorized);
  for (auto c : {TaskCategory::qa, TaskCategory::grammar_correction, TaskCategory::summarization,
                 TaskCategory::translation, TaskCategory::uncategorized}) {
    CHECK(category_from_string(to_string(c)) == c);
  }
}
