#include <catch_amalgamated.hpp>

#include <atomic>
#include <regex>

#include "promptdoctor/errors.hpp"
#include "promptdoctor/patcher.hpp"
#include "support.hpp"

using namespace promptdoctor;
using namespace promptdoctor::llm;

namespace {

std::string hole_asked(const ChatRequest& req) {
  static const std::regex re("variable \"(\\w+)\"");
  std::smatch m;
  const auto& text = req.messages.front().content;
  return std::regex_search(text, m, re) ? m[1].str() : "";
}

std::string patch_reply(const std::string& hole, const std::string& value) {
  return nlohmann::json{{"variable", hole}, {"value", value}}.dump();
}

/// Answers patch requests with a fresh value per call.
void unique_values(MockBackend& mock) {
  auto counter = std::make_shared<std::atomic<int>>(0);
  mock.add_handler([counter](Role role, const ChatRequest& req) -> std::optional<std::string> {
    auto hole = hole_asked(req);
    if (role != Role::generator || hole.empty()) return std::nullopt;
    return patch_reply(hole, hole + "-" + std::to_string((*counter)++));
  });
}

}  // namespace

TEST_CASE("sequential patching shows earlier values, parallel shows the bare template") {
  auto cp = CanonicalPrompt::parse("Write to {recipient} about {topic}.");
  for (auto mode : {PatchMode::sequential, PatchMode::parallel}) {
    auto [gw, mock] = pdtest::mock_gateway(1);
    unique_values(*mock);
    Patcher patcher(*gw);
    auto ps = patcher.patch(cp, mode, 3);
    REQUIRE(ps.values.size() == 2);
    CHECK(ps.values[0].first == "recipient");
    CHECK(ps.values[1].first == "topic");
    auto calls = mock->calls();
    REQUIRE(calls.size() == 2);
    const auto& second = calls[1].request.messages.front().content;
    if (mode == PatchMode::sequential) {
      CHECK(second.find("Write to recipient-0 about {topic}.") != std::string::npos);
    } else {
      CHECK(second.find("Write to {recipient} about {topic}.") != std::string::npos);
    }
  }
}

TEST_CASE("patching a prompt without holes is a precondition error") {
  auto [gw, mock] = pdtest::mock_gateway();
  Patcher patcher(*gw);
  CHECK_THROWS_AS(patcher.patch(CanonicalPrompt::parse("No holes here at all."), PatchMode::sequential, 1),
                  PreconditionError);
  CHECK_THROWS_AS(patcher.synthesize_dataset(CanonicalPrompt::parse("No holes."), corpus::TaskCategory::qa, 2, 2, 1),
                  PreconditionError);
  CHECK(mock->call_count() == 0);
}

TEST_CASE("grounded datasets carry sources and references") {
  auto cp = CanonicalPrompt::parse("Translate {text} into {lang}.");
  auto [gw, mock] = pdtest::mock_gateway(1);
  unique_values(*mock);
  MockEntry ref;
  ref.role = Role::generator;
  ref.regex = "ideal output for the following translation request[\\s\\S]*Translate (\\S+) into";
  ref.replies = {R"({"reference": "ref of $1"})"};
  mock->add(ref);
  Patcher patcher(*gw);
  auto [train, test] = patcher.synthesize_dataset(cp, corpus::TaskCategory::translation, 4, 2, 9);
  CHECK(train.size() == 4);
  CHECK(test.size() == 2);
  CHECK(train.split == Split::train);
  CHECK(test.split == Split::test);
  for (const auto* set : {&train, &test}) {
    for (const auto& row : set->rows) {
      REQUIRE(row.source);
      REQUIRE(row.reference);
      CHECK(*row.source == substitute(cp, row.patch.as_map()));
      CHECK(*row.reference == "ref of " + row.patch.as_map().at("text"));
    }
  }
  // Patch requests walk the temperature ladder; references are generated at 0.
  std::vector<double> temps;
  for (const auto& c : mock->calls()) {
    if (!hole_asked(c.request).empty() && hole_asked(c.request) == "text") temps.push_back(c.temperature);
  }
  CHECK(temps == std::vector<double>{0.3, 0.7, 1.0, 1.3, 0.3, 0.7});

  pdtest::TempDir dir;
  auto path = (dir / "ds.jsonl").string();
  write_dataset_jsonl(path, {&train, &test});
  auto [rtrain, rtest] = read_dataset_jsonl(path);
  CHECK(rtrain.size() == 4);
  CHECK(rtest.size() == 2);
  CHECK(rtest.rows[1].reference == test.rows[1].reference);
  CHECK(rtrain.rows[0].patch.as_map() == train.rows[0].patch.as_map());
}

TEST_CASE("ungrounded datasets have no references") {
  auto [gw, mock] = pdtest::mock_gateway(1);
  unique_values(*mock);
  Patcher patcher(*gw);
  auto [train, test] = patcher.synthesize_dataset(CanonicalPrompt::parse("Answer: {q}"), corpus::TaskCategory::qa, 3, 1, 2);
  for (const auto& r : train.rows) {
    CHECK_FALSE(r.source);
    CHECK_FALSE(r.reference);
  }
}

TEST_CASE("constant generators produce a degenerate dataset") {
  auto [gw, mock] = pdtest::mock_gateway(1);
  MockEntry e;
  e.role = Role::generator;
  e.regex = "variable \"(\\w+)\"";
  e.replies = {R"({"variable": "$1", "value": "same"})"};
  mock->add(e);
  Patcher patcher(*gw);
  DatasetOptions opts;
  opts.duplicate_retries = 1;
  CHECK_THROWS_AS(patcher.synthesize_dataset(CanonicalPrompt::parse("Answer: {q}"), corpus::TaskCategory::qa, 3, 2, 1, opts),
                  DegenerateDataset);
}

TEST_CASE("a test row equal to a training row is dropped") {
  auto [gw, mock] = pdtest::mock_gateway(1);
  MockEntry e;
  e.role = Role::generator;
  e.regex = "variable \"(\\w+)\"";
  e.replies = {R"({"variable": "q", "value": "a"})", R"({"variable": "q", "value": "b"})",
               R"({"variable": "q", "value": "a"})", R"({"variable": "q", "value": "c"})"};
  mock->add(e);
  Patcher patcher(*gw);
  DatasetOptions opts;
  opts.duplicate_retries = 0;
  auto [train, test] = patcher.synthesize_dataset(CanonicalPrompt::parse("Answer: {q}"), corpus::TaskCategory::qa, 2, 2, 1, opts);
  CHECK(train.size() == 2);
  REQUIRE(test.size() == 1);
  CHECK(test.rows[0].patch.as_map().at("q") == "c");
  REQUIRE(test.warnings.size() == 1);
  CHECK(test.warnings[0].find("duplicates a training row") != std::string::npos);
}

TEST_CASE("patch sets round-trip through JSON") {
  PatchSet p;
  p.prompt_id = "a.py:3";
  p.mode = PatchMode::parallel;
  p.values = {{"x", "1"}, {"y", "two"}};
  CHECK(patch_set_from_json(to_json(p)) == p);
}
