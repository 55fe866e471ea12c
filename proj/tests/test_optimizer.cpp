#include <catch_amalgamated.hpp>

#include <regex>

#include "promptdoctor/errors.hpp"
#include "promptdoctor/hashing.hpp"
#include "promptdoctor/optimizer.hpp"
#include "scenarios.hpp"

using namespace promptdoctor;
using namespace promptdoctor::llm;

namespace sc = pdtest::scenario;

namespace {

std::string normalize(std::string s) {
  s = std::regex_replace(s, std::regex(R"(\\(begin|end)\{itemize\}|\\item)"), "");
  std::string out;
  for (unsigned char c : s)
    if (std::isalnum(c)) out += static_cast<char>(std::tolower(c));
  return out;
}

}  // namespace

TEST_CASE("default hyperparameters") {
  OptimizerHyperparams hp;
  CHECK(hp.n_seeds == 16);
  CHECK(hp.prompts_per_step == 20);
  CHECK(hp.train_count == 30);
  CHECK(hp.test_count == 10);
  CHECK(hp.principles_per_seed == 5);
  CHECK(OptimizerHyperparams::from_json(hp.to_json()).to_json() == hp.to_json());
  CHECK_THROWS_AS(OptimizerHyperparams::from_json({{"principles_per_seed", 27}}), ConfigError);
  CHECK_THROWS_AS(OptimizerHyperparams::from_json({{"n_seeds", 0}}), ConfigError);
}

TEST_CASE("the principle bank holds the 26 published principles verbatim") {
  const auto& bank = seed_principles();
  REQUIRE(bank.size() == 26);
  auto published = normalize(pdtest::slurp(pdtest::source_dir() / "paper.md"));
  REQUIRE_FALSE(published.empty());
  std::set<std::string> distinct;
  for (const auto& p : bank) {
    INFO(p.index << ": " << p.text);
    CHECK(published.find(normalize(p.text)) != std::string::npos);
    distinct.insert(p.text);
  }
  CHECK(distinct.size() == 26);
  CHECK(bank.front().index == 1);
  CHECK(bank.back().index == 26);
}

TEST_CASE("seed requests each carry five distinct principles") {
  auto [gw, mock] = pdtest::mock_gateway();
  sc::translation_world(*mock);
  Optimizer opt(*gw);
  auto seeds = opt.generate_seeds(CanonicalPrompt::parse("Translate {text} into French."), 16, 5);
  CHECK(seeds.size() == 16);
  std::size_t requests = 0;
  std::vector<double> temps;
  for (const auto& c : mock->calls()) {
    const auto& text = c.request.messages.front().content;
    if (text.find("Apply these prompting guidelines") == std::string::npos) continue;
    ++requests;
    temps.push_back(c.temperature);
    std::size_t found = 0;
    for (const auto& p : seed_principles()) found += text.find("- " + p.text + "\n") != std::string::npos;
    CHECK(found == 5);
  }
  CHECK(requests == 16);
  CHECK(temps[0] == 0.3);
  CHECK(temps[3] == 1.3);
  CHECK(temps[4] == 0.3);
}

TEST_CASE("seeds that lose their holes raise a shortfall") {
  auto [gw, mock] = pdtest::mock_gateway();
  sc::translation_world(*mock, true);
  Optimizer opt(*gw);
  CHECK_THROWS_AS(opt.generate_seeds(CanonicalPrompt::parse("Translate {text} into French."), 4, 1), SeedShortfall);
  CHECK(mock->call_count() == 12);
}

TEST_CASE("optimization is reproducible and monotone") {
  auto a = sc::run_optimizer(42);
  auto b = sc::run_optimizer(42, 3);
  CHECK(to_json(a).dump() == to_json(b).dump());

  REQUIRE(a.steps.size() >= 2);
  CHECK(a.steps.size() <= 11);
  double prev = -1.0;
  for (const auto& s : a.steps) {
    CHECK(s.best_so_far >= prev);
    prev = s.best_so_far;
    for (const auto& c : s.candidates) {
      CHECK(c.prompt.hole_names() == std::vector<std::string>{"text"});
      CHECK(c.train_score.value <= s.best_so_far + 1e-12);
    }
  }
  CHECK(a.best.train_score.value >= a.source_scored.train_score.value);
  CHECK(a.best.train_score.value == Catch::Approx(a.steps.back().best_so_far));
  REQUIRE(a.test_scores);
  CHECK(a.verdict == decide_verdict(a.source_scored.train_score.value, a.best.train_score.value,
                                    a.test_scores->source.value, a.test_scores->best.value));
  CHECK(a.verdict == Verdict::improved);
  CHECK_FALSE(a.partial);
}

TEST_CASE("the source is scored with the oracle BLEU of its replies") {
  auto [gw, mock] = pdtest::mock_gateway();
  sc::translation_world(*mock);
  Optimizer opt(*gw);
  auto ds = sc::translation_dataset(0, 5, Split::train);
  auto s = opt.evaluate(CanonicalPrompt::parse("LEVEL-11 Translate {text} into French."), ds,
                        corpus::TaskCategory::translation);
  CHECK(s.value == Catch::Approx(1.0));
  CHECK(s.metric == metrics::Metric::bleu);
  auto low = opt.evaluate(CanonicalPrompt::parse("LEVEL-2 Translate {text} into French."), ds,
                          corpus::TaskCategory::translation);
  double expected = 0;
  for (int r = 0; r < 5; ++r) expected += metrics::bleu("le chat", sc::reference_for(r)).value;
  CHECK(low.value == Catch::Approx(expected / 5).margin(1e-12));
}

TEST_CASE("running out of budget yields a partial run") {
  auto [gw, mock] = pdtest::mock_gateway(4, 900);
  sc::translation_world(*mock);
  Optimizer opt(*gw);
  auto run = opt.optimize(CanonicalPrompt::parse("Translate {text} into French."), corpus::TaskCategory::translation,
                          sc::translation_dataset(0, 30, Split::train), sc::translation_dataset(100, 10, Split::test), 1);
  CHECK(run.partial);
  CHECK_FALSE(run.test_scores);
  CHECK(gw->calls_used() <= 900);
}

TEST_CASE("question answering is scored by a generated yes/no judge") {
  auto [gw, mock] = pdtest::mock_gateway();
  MockEntry judge_gen;
  judge_gen.role = Role::generator;
  judge_gen.regex = "Write one yes/no question";
  judge_gen.replies = {R"({"question": "Does this answer mention Paris: {text}? Reply yes or no."})"};
  mock->add(judge_gen);
  MockEntry respond;
  respond.role = Role::responder;
  respond.regex = "capital of (\\w+)";
  respond.replies = {"The capital of $1 is somewhere."};
  mock->add(respond);
  MockEntry judge;
  judge.role = Role::judge;
  judge.regex = "capital of (France)";
  judge.replies = {"Yes."};
  mock->add(judge);
  MockEntry judge_no;
  judge_no.role = Role::judge;
  judge_no.regex = ".*";
  judge_no.replies = {"No"};
  mock->add(judge_no);
  Optimizer opt(*gw);
  auto cp = CanonicalPrompt::parse("What is the capital of {country}?");
  auto jt = opt.make_judge_prompt(cp, 3);
  CHECK(jt.hole_names() == std::vector<std::string>{"text"});
  SyntheticDataset ds;
  for (const char* c : {"France", "Spain", "France", "Peru"}) {
    DatasetRow r;
    r.patch.values = {{"country", c}};
    ds.rows.push_back(r);
  }
  auto s = opt.evaluate(cp, ds, corpus::TaskCategory::qa, jt);
  CHECK(s.value == Catch::Approx(0.5));
  CHECK(s.metric == metrics::Metric::judge);
  CHECK_THROWS_AS(opt.evaluate(cp, ds, corpus::TaskCategory::qa), PreconditionError);
}

TEST_CASE("verdict rules") {
  CHECK(decide_verdict(0.2, 0.5, 0.3, 0.4) == Verdict::improved);
  CHECK(decide_verdict(0.5, 0.5, 0.3, 0.4) == Verdict::improved);
  CHECK(decide_verdict(0.2, 0.5, 0.4, 0.4) == Verdict::degraded);
  CHECK(decide_verdict(0.2, 0.5, 0.4, 0.3) == Verdict::degraded);
  CHECK(decide_verdict(0.5, 0.5, 0.4, 0.4) == Verdict::unchanged);
}

TEST_CASE("judge replies") {
  CHECK(judge_says_yes("Yes"));
  CHECK(judge_says_yes("  **YES**, clearly"));
  CHECK(judge_says_yes("\"yes.\""));
  CHECK_FALSE(judge_says_yes("No"));
  CHECK_FALSE(judge_says_yes("yesterday"));
  CHECK_FALSE(judge_says_yes(""));
  CHECK_FALSE(judge_says_yes("I would say yes"));
}
