#include <catch_amalgamated.hpp>

#include <httplib.h>

#include "promptdoctor/backends.hpp"
#include "promptdoctor/service.hpp"
#include "support.hpp"

using namespace promptdoctor;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

/// A service over a copy of the fixture corpus and the golden report,
/// answering model calls from the golden mock script.
struct Harness {
  pdtest::TempDir root;
  std::shared_ptr<llm::Gateway> gateway;
  std::unique_ptr<Service> service;
  std::unique_ptr<httplib::Client> client;
  std::string run_id;

  Harness() {
    fs::create_directories(root / "src/tests/fixtures");
    fs::copy(pdtest::fixture("corpus"), root / "src/tests/fixtures/corpus", fs::copy_options::recursive);
    fs::create_directories(root / "reports");
    auto report = json::parse(pdtest::slurp(pdtest::fixture("golden/report.json")));
    run_id = report["run_id"].get<std::string>();
    fs::copy_file(pdtest::fixture("golden/report.json"), root / "reports" / (run_id + ".json"));

    auto cfg = llm::GatewayConfig::defaults();
    cfg.backoff_base = std::chrono::milliseconds(0);
    auto mock = llm::MockBackend::from_jsonl(pdtest::fixture("golden/mock_script.jsonl").string());
    gateway = std::make_shared<llm::Gateway>(cfg, mock);

    ServiceOptions opts;
    opts.reports_dir = (root / "reports").string();
    opts.source_root = (root / "src").string();
    opts.attacks = load_attacks((pdtest::source_dir() / "data/attacks.jsonl").string());
    opts.analyze_options.repair = false;
    opts.analyze_options.created_at = "2024-01-01T00:00:00Z";
    service = std::make_unique<Service>(opts, gateway.get());
    int port = service->start("127.0.0.1", 0);
    client = std::make_unique<httplib::Client>("127.0.0.1", port);
    client->set_read_timeout(30, 0);
  }
  ~Harness() { service->stop(); }

  std::string prompt_id_for(const std::string& file_suffix) const {
    auto report = json::parse(pdtest::slurp(root / "reports" / (run_id + ".json")));
    for (const auto& p : report["prompts"])
      if (p["file"].get<std::string>().ends_with(file_suffix)) return p["prompt_id"].get<std::string>();
    FAIL("no prompt for " << file_suffix);
    return {};
  }
};

json post_json(httplib::Client& c, const std::string& path, const json& body, int& status) {
  auto res = c.Post(path, body.dump(), "application/json");
  REQUIRE(res);
  status = res->status;
  return json::parse(res->body);
}

}  // namespace

TEST_CASE("report listing and retrieval") {
  Harness h;
  auto list = h.client->Get("/api/reports");
  REQUIRE(list);
  CHECK(list->status == 200);
  auto rows = json::parse(list->body);
  REQUIRE(rows.size() == 1);
  CHECK(rows[0]["run_id"] == h.run_id);
  CHECK(rows[0]["findings"] == 4);
  CHECK(rows[0]["prompts"] == 12);

  auto one = h.client->Get("/api/reports/" + h.run_id);
  REQUIRE(one);
  CHECK(one->status == 200);
  CHECK(one->body == pdtest::slurp(pdtest::fixture("golden/report.json")));
  CHECK(h.client->Get("/api/reports/run-000000000000")->status == 404);
  CHECK(h.client->Get("/api/reports/..%2Fetc")->status == 404);

  auto pid = h.prompt_id_for("linkedin_summary.py");
  auto p = h.client->Get("/api/prompts/" + pid);
  REQUIRE(p);
  CHECK(p->status == 200);
  auto pj = json::parse(p->body);
  CHECK(pj["report_id"] == h.run_id);
  CHECK(pj["prompt"]["prompt_id"] == pid);
  CHECK(pj["fixes"].empty());
  CHECK(h.client->Get("/api/prompts/nope")->status == 404);
}

TEST_CASE("applying a fix patches the source once") {
  Harness h;
  auto pid = h.prompt_id_for("linkedin_summary.py");
  int status = 0;
  auto body = post_json(*h.client, "/api/fixes", {{"prompt_id", pid}, {"rewrite_index", 0}}, status);
  CHECK(status == 200);
  CHECK(body["status"] == "applied");
  auto file = h.root / "src/tests/fixtures/corpus/linkedin_summary.py";
  CHECK(pdtest::slurp(file).find("summary of their career path") != std::string::npos);
  CHECK(fs::exists(file.string() + ".bak"));

  post_json(*h.client, "/api/fixes", {{"prompt_id", pid}, {"rewrite_index", 0}}, status);
  CHECK(status == 409);
  auto p = json::parse(h.client->Get("/api/prompts/" + pid)->body);
  REQUIRE(p["fixes"].size() == 1);
  CHECK(p["fixes"][0]["status"] == "applied");

  auto events = h.client->Get("/api/events?once=1");
  REQUIRE(events);
  CHECK(events->get_header_value("Content-Type").starts_with("text/event-stream"));
  CHECK(events->body.find("event: fix_applied\n") != std::string::npos);
}

TEST_CASE("fix requests are validated") {
  Harness h;
  auto pid = h.prompt_id_for("linkedin_summary.py");
  int status = 0;
  post_json(*h.client, "/api/fixes", {{"prompt_id", pid}}, status);
  CHECK(status == 422);
  post_json(*h.client, "/api/fixes", {{"prompt_id", pid}, {"rewrite_index", 99}}, status);
  CHECK(status == 422);
  post_json(*h.client, "/api/fixes", {{"prompt_id", "missing"}, {"rewrite_index", 0}}, status);
  CHECK(status == 404);
  post_json(*h.client, "/api/fixes", {{"prompt_id", pid}, {"rewrite_index", 0}, {"report_id", "run-x"}}, status);
  CHECK(status == 404);
  auto res = h.client->Post("/api/fixes", "{not json", "application/json");
  REQUIRE(res);
  CHECK(res->status == 422);
  CHECK(json::parse(res->body).contains("error"));
}

TEST_CASE("ad-hoc analysis finds the injectable context hole") {
  Harness h;
  auto res = extract_paths({pdtest::fixture("corpus/vivian_assistant.py").string()});
  REQUIRE(res.records.size() == 1);
  int status = 0;
  auto body = post_json(*h.client, "/api/analyze",
                        {{"prompt_text", res.records[0].prompt.text()}, {"checks", {"injection"}}}, status);
  REQUIRE(status == 200);
  const auto& inj = body["prompt"]["injection"];
  REQUIRE(inj.is_object());
  CHECK(inj["vulnerable"] == true);
  CHECK(inj["hole_results"]["context"].size() == 20);
  CHECK(body["prompt"]["bias"].empty());
  CHECK(body["budget"]["calls"].get<int>() > 20);

  auto events = h.client->Get("/api/events?once=1&since=0");
  REQUIRE(events);
  for (const char* kind : {"analysis_queued", "run_started", "prompt_started", "prompt_finished", "run_finished"})
    CHECK(events->body.find(std::string("event: ") + kind + "\n") != std::string::npos);
  auto last = h.service->events().last_id();
  auto none = h.client->Get("/api/events?once=1&since=" + std::to_string(last));
  CHECK(none->body.empty());

  post_json(*h.client, "/api/analyze", {{"prompt_text", "x"}, {"checks", {"style"}}}, status);
  CHECK(status == 422);
  post_json(*h.client, "/api/analyze", {{"text", "x"}}, status);
  CHECK(status == 422);
}

TEST_CASE("analysis without a backend is unavailable") {
  pdtest::TempDir dir;
  ServiceOptions opts;
  opts.reports_dir = dir.path().string();
  Service svc(opts, nullptr);
  auto [status, body] = svc.analyze({{"prompt_text", "Summarize {doc} for the board."}});
  CHECK(status == 503);
  CHECK(body.contains("error"));
}

TEST_CASE("event bus framing and replay") {
  EventBus bus(3);
  for (int i = 0; i < 5; ++i) bus.publish("tick", {{"i", i}});
  auto all = bus.since(0);
  REQUIRE(all.size() == 3);
  CHECK(all.front().id == 3);
  CHECK(bus.since(4).size() == 1);
  CHECK(EventBus::format(all.back()) == "id: 5\nevent: tick\ndata: {\"i\":4}\n\n");
  auto t0 = std::chrono::steady_clock::now();
  CHECK(bus.since(5, std::chrono::milliseconds(50)).empty());
  CHECK(std::chrono::steady_clock::now() - t0 >= std::chrono::milliseconds(40));
}
