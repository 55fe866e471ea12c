#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "promptdoctor/fix.hpp"
#include "promptdoctor/gateway.hpp"
#include "promptdoctor/injection.hpp"
#include "promptdoctor/pipeline.hpp"
#include "promptdoctor/report.hpp"

namespace httplib {
class Server;
}

namespace promptdoctor {

/// Reports stored as `<dir>/<run_id>.json`, with applied fixes recorded in
/// a `<run_id>.fixes.json` sidecar next to each.
class ReportStore {
 public:
  explicit ReportStore(std::string dir);

  const std::string& dir() const { return dir_; }

  /// Summaries ({run_id, created_at, prompts, findings}), newest first.
  nlohmann::json list() const;
  std::optional<std::string> path_for(const std::string& run_id) const;
  /// The stored bytes, unmodified.
  std::optional<std::string> read_raw(const std::string& run_id) const;
  std::optional<LintReport> load(const std::string& run_id) const;
  /// Newest report containing the prompt.
  std::optional<LintReport> find_prompt(const std::string& prompt_id) const;
  std::string save(const LintReport& report) const;

  std::vector<FixAction> fixes(const std::string& run_id) const;
  void record_fix(const std::string& run_id, const FixAction& action) const;

 private:
  std::vector<std::string> report_files() const;
  std::string fixes_path(const std::string& run_id) const;

  std::string dir_;
};

/// Append-only progress log fanned out to SSE subscribers.
class EventBus {
 public:
  struct Event {
    std::uint64_t id = 0;
    std::string kind;
    nlohmann::json data;
  };

  explicit EventBus(std::size_t capacity = 1024);

  std::uint64_t publish(std::string kind, nlohmann::json data);
  /// Events with id > since. Blocks up to `wait` for one to arrive when
  /// none are buffered yet.
  std::vector<Event> since(std::uint64_t since, std::chrono::milliseconds wait = std::chrono::milliseconds(0));
  std::uint64_t last_id() const;
  void close();
  bool closed() const;

  static std::string format(const Event& e);

 private:
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::deque<Event> events_;
  std::size_t capacity_;
  std::uint64_t next_id_ = 1;
  bool closed_ = false;
};

struct ServiceOptions {
  std::string reports_dir = "reports";
  /// Static files for the review UI; empty to serve the API only.
  std::string ui_dir;
  /// Relative source paths in reports are resolved against this.
  std::string source_root = ".";
  std::vector<AttackCase> attacks;
  LintOptions analyze_options;
};

class Service {
 public:
  /// `gateway` may be null, in which case /api/analyze answers 503.
  Service(ServiceOptions options, llm::Gateway* gateway);
  ~Service();

  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// Binds and serves on a background thread; port 0 picks a free port.
  /// Returns the bound port.
  int start(const std::string& host, int port);
  /// Serves on the calling thread until stop().
  void run(const std::string& host, int port);
  void stop();

  ReportStore& store() { return store_; }
  EventBus& events() { return events_; }

  /// Handler bodies, callable without a socket. Return {status, body}.
  std::pair<int, nlohmann::json> analyze(const nlohmann::json& body);
  std::pair<int, nlohmann::json> create_fix(const nlohmann::json& body);

 private:
  void install_routes();

  ServiceOptions options_;
  llm::Gateway* gateway_;
  ReportStore store_;
  EventBus events_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
  std::mutex analyze_mu_;
  std::mutex fixes_mu_;
};

}  // namespace promptdoctor
