#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "promptdoctor/errors.hpp"
#include "promptdoctor/metrics.hpp"
#include "oracles.hpp"

using namespace promptdoctor;
using namespace promptdoctor::metrics;

using pdtest::oracle::join;
using pdtest::oracle::random_tokens;
using pdtest::oracle::Toks;

TEST_CASE("tokenizer peels edge punctuation and lowercases") {
  CHECK(tokenize("Hello, World!") == Toks{"hello", ",", "world", "!"});
  CHECK(tokenize("(don't) 3.14") == Toks{"(", "don't", ")", "3.14"});
  CHECK(tokenize("  \n\t ").empty());
  CHECK(tokenize("...") == Toks{".", ".", "."});
}

TEST_CASE("BLEU and GLEU agree with brute-force oracles", "[property]") {
  std::mt19937_64 rng(314159);
  for (int i = 0; i < 200; ++i) {
    auto c = random_tokens(rng, 3 + rng() % 10);
    auto r = random_tokens(rng, 3 + rng() % 10);
    INFO(join(c) << " | " << join(r));
    CHECK(bleu(join(c), join(r)).value == Catch::Approx(pdtest::oracle::bleu(c, r)).margin(1e-9));
    CHECK(gleu(join(c), join(r)).value == Catch::Approx(pdtest::oracle::gleu(c, r)).margin(1e-9));
  }
}

TEST_CASE("identical inputs score one, disjoint inputs score zero") {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 50; ++i) {
    auto t = join(random_tokens(rng, 12));
    CHECK(bleu(t, t).value == 1.0);
    CHECK(gleu(t, t).value == 1.0);
  }
  CHECK(bleu("alpha beta gamma", "delta epsilon").value == 0.0);
  CHECK(gleu("alpha beta gamma", "delta epsilon").value == 0.0);
}

TEST_CASE("empty input scores zero and is flagged") {
  auto s = bleu("", "some reference");
  CHECK(s.value == 0.0);
  CHECK(s.empty_input);
  CHECK(gleu("text", "  ").empty_input);
}

TEST_CASE("scores stay in the unit interval", "[property]") {
  std::mt19937_64 rng(77);
  for (int i = 0; i < 300; ++i) {
    auto a = join(random_tokens(rng, 4));
    auto b = join(random_tokens(rng, 4));
    for (double v : {bleu(a, b).value, gleu(a, b).value}) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }
}

TEST_CASE("cosine matches the direct formula and clamps") {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int i = 0; i < 100; ++i) {
    std::vector<double> a(8), b(8);
    for (auto& x : a) x = u(rng);
    for (auto& x : b) x = u(rng);
    double raw = pdtest::oracle::cosine(a, b);
    auto s = cosine(a, b);
    CHECK(*s.raw == Catch::Approx(raw).margin(1e-9));
    CHECK(s.value == Catch::Approx(std::clamp(raw, 0.0, 1.0)).margin(1e-9));
  }
  std::vector<double> v{1, 2, 3}, z{0, 0, 0}, w{1, 2};
  CHECK(cosine(v, v).value == 1.0);
  CHECK_THROWS_AS(cosine(v, z), ZeroVector);
  CHECK_THROWS_AS(cosine(v, w), PreconditionError);
}

TEST_CASE("metric names round-trip") {
  for (auto m : {Metric::bleu, Metric::gleu, Metric::cosine, Metric::judge}) CHECK(metric_from_string(to_string(m)) == m);
  CHECK_THROWS_AS(metric_from_string("rouge"), PreconditionError);
}
