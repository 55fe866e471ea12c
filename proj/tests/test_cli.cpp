#include <catch_amalgamated.hpp>

#include <sys/wait.h>

#include <cstdio>

#include "promptdoctor/hashing.hpp"
#include "support.hpp"

namespace fs = std::filesystem;

namespace {

struct RunResult {
  int code = -1;
  std::string out;
};

std::string cli() {
  const char* p = std::getenv("PD_CLI");
  return p ? p : (pdtest::source_dir() / "build/tools/promptdoctor").string();
}

RunResult run(const std::string& args) {
  std::string cmd = "'" + cli() + "' " + args + " 2>&1";
  RunResult r;
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe);
  char buf[4096];
  while (std::size_t n = std::fread(buf, 1, sizeof buf, pipe)) r.out.append(buf, n);
  int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string quoted(const fs::path& p) { return "'" + p.string() + "'"; }

const std::string kMock = "--backend mock --mock-script tests/fixtures/golden/mock_script.jsonl --seed 7 "
                          "--created-at 2024-01-01T00:00:00Z";

}  // namespace

TEST_CASE("extract on an empty directory succeeds with no prompts") {
  pdtest::TempDir dir;
  fs::create_directories(dir / "empty");
  auto r = run("-q extract " + quoted(dir / "empty") + " -o " + quoted(dir / "out.jsonl"));
  CHECK(r.code == 0);
  CHECK(pdtest::slurp(dir / "out.jsonl").empty());
}

TEST_CASE("the golden pipeline reproduces the committed report digest") {
  pdtest::TempDir dir;
  auto t0 = std::chrono::steady_clock::now();
  auto r = run(kMock + " pipeline tests/fixtures/corpus --attacks data/attacks.jsonl --out-dir " + quoted(dir / "out"));
  auto elapsed = std::chrono::steady_clock::now() - t0;
  INFO(r.out);
  REQUIRE(r.code == 0);
  auto expected = pdtest::slurp(pdtest::fixture("golden/report.sha256")).substr(0, 64);
  auto reports = dir / "out" / "reports";
  REQUIRE(fs::exists(reports));
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(reports)) files.push_back(e.path());
  REQUIRE(files.size() == 1);
  CHECK(promptdoctor::sha256_hex(pdtest::slurp(files[0])) == expected);
  CHECK(r.out.find(expected) != std::string::npos);
  CHECK(fs::exists(dir / "out" / "corpus.jsonl"));
  CHECK(fs::exists(dir / "out" / "cleaned.jsonl"));
  CHECK(elapsed < std::chrono::seconds(30));

  auto rerun = run(kMock + " pipeline tests/fixtures/corpus --attacks data/attacks.jsonl --out-dir " +
                   quoted(dir / "out") + " --fail-on-findings");
  CHECK(rerun.code == 1);
}

TEST_CASE("report rendering and findings exit code") {
  auto text = run("report -i tests/fixtures/golden/report.json");
  CHECK(text.code == 0);
  CHECK(text.out.find("4 finding(s)") != std::string::npos);
  auto gated = run("report -i tests/fixtures/golden/report.json --fail-on-findings");
  CHECK(gated.code == 1);
  auto js = run("report -i tests/fixtures/golden/report.json --format json");
  CHECK(js.code == 0);
  CHECK(nlohmann::json::parse(js.out)["run_id"] == "run-1f26d23b5406");
}

TEST_CASE("apply writes a rewrite through the CLI") {
  pdtest::TempDir dir;
  fs::create_directories(dir / "tests/fixtures");
  fs::copy(pdtest::fixture("corpus"), dir / "tests/fixtures/corpus", fs::copy_options::recursive);
  auto report = nlohmann::json::parse(pdtest::slurp(pdtest::fixture("golden/report.json")));
  std::string pid;
  for (const auto& p : report["prompts"])
    if (p["file"].get<std::string>().ends_with("secretary.py")) pid = p["prompt_id"];
  REQUIRE_FALSE(pid.empty());
  auto args = "apply --report tests/fixtures/golden/report.json --prompt-id " + pid + " --index 0 --source-root " +
              quoted(dir.path());
  auto r = run(args);
  INFO(r.out);
  CHECK(r.code == 0);
  auto text = pdtest::slurp(dir / "tests/fixtures/corpus/secretary.py");
  CHECK(text.find("secretary named KC") == std::string::npos);
  CHECK(run(args).code == 1);
}

TEST_CASE("exit codes") {
  pdtest::TempDir dir;
  CHECK(run("--no-such-flag extract x").code == 2);
  CHECK(run("extract " + quoted(dir / "missing")).code == 3);
  pdtest::spit(dir / "bad.jsonl", "{not json}\n");
  CHECK(run("clean -i " + quoted(dir / "bad.jsonl") + " -o " + quoted(dir / "o.jsonl")).code == 2);
  CHECK(run("report -i " + quoted(dir / "bad.jsonl")).code == 2);
  auto budget = run(kMock + " --budget 5 pipeline tests/fixtures/corpus --attacks data/attacks.jsonl --out-dir " +
                    quoted(dir / "b"));
  CHECK(budget.code == 4);
  pdtest::spit(dir / "empty_attacks.jsonl", "");
  CHECK(run(kMock + " lint-injection -i " + quoted(dir / "bad.jsonl") + " --attacks " + quoted(dir / "empty_attacks.jsonl"))
            .code == 2);
}

TEST_CASE("extract, clean and sample chain through JSONL") {
  pdtest::TempDir dir;
  auto c = dir / "c.jsonl", k = dir / "k.jsonl", s = dir / "s.jsonl";
  REQUIRE(run("-q extract tests/fixtures/corpus -o " + quoted(c)).code == 0);
  auto lines = [](const fs::path& p) {
    auto t = pdtest::slurp(p);
    return static_cast<std::size_t>(std::count(t.begin(), t.end(), '\n'));
  };
  CHECK(lines(c) == 12);
  REQUIRE(run("-q clean -i " + quoted(c) + " -o " + quoted(k)).code == 0);
  CHECK(lines(k) <= 12);
  REQUIRE(run("-q --seed 3 sample -i " + quoted(k) + " -o " + quoted(s)).code == 0);
  CHECK(lines(s) == lines(k));
}
