#include "promptdoctor/service.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <httplib.h>

#include "promptdoctor/errors.hpp"

namespace promptdoctor {

namespace fs = std::filesystem;

namespace {

constexpr std::string_view kReportSuffix = ".json";
constexpr std::string_view kFixesSuffix = ".fixes.json";

bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomically(const fs::path& p, const std::string& content) {
  auto tmp = p;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << content;
    if (!out.flush()) throw IoError("write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, p, ec);
  if (ec) throw IoError("cannot replace " + p.string() + ": " + ec.message());
}

bool valid_run_id(std::string_view id) {
  return !id.empty() && std::all_of(id.begin(), id.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_';
  });
}

nlohmann::json error_body(const std::string& message) { return {{"error", message}}; }

}  // namespace

ReportStore::ReportStore(std::string dir) : dir_(std::move(dir)) {}

std::vector<std::string> ReportStore::report_files() const {
  std::vector<std::string> out;
  std::error_code ec;
  if (!fs::is_directory(dir_, ec)) return out;
  for (const auto& e : fs::directory_iterator(dir_, ec)) {
    auto name = e.path().filename().string();
    if (e.is_regular_file() && ends_with(name, kReportSuffix) && !ends_with(name, kFixesSuffix)) {
      out.push_back(e.path().string());
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

nlohmann::json ReportStore::list() const {
  std::vector<nlohmann::json> rows;
  for (const auto& path : report_files()) {
    auto j = nlohmann::json::parse(read_file(path), nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("run_id")) continue;
    std::size_t findings = j.contains("summary") ? j["summary"].value("findings", std::size_t{0}) : 0;
    rows.push_back({{"run_id", j["run_id"]},
                    {"created_at", j.value("created_at", std::string())},
                    {"prompts", j.contains("prompts") ? j["prompts"].size() : 0},
                    {"findings", findings}});
  }
  std::stable_sort(rows.begin(), rows.end(), [](const nlohmann::json& a, const nlohmann::json& b) {
    return a["created_at"].get<std::string>() > b["created_at"].get<std::string>();
  });
  return rows;
}

std::optional<std::string> ReportStore::path_for(const std::string& run_id) const {
  if (!valid_run_id(run_id)) return std::nullopt;
  auto p = fs::path(dir_) / (run_id + std::string(kReportSuffix));
  std::error_code ec;
  if (!fs::is_regular_file(p, ec)) return std::nullopt;
  return p.string();
}

std::optional<std::string> ReportStore::read_raw(const std::string& run_id) const {
  auto p = path_for(run_id);
  if (!p) return std::nullopt;
  return read_file(*p);
}

std::optional<LintReport> ReportStore::load(const std::string& run_id) const {
  auto p = path_for(run_id);
  if (!p) return std::nullopt;
  return load_report(*p);
}

std::optional<LintReport> ReportStore::find_prompt(const std::string& prompt_id) const {
  std::optional<LintReport> best;
  for (const auto& path : report_files()) {
    LintReport r;
    try {
      r = load_report(path);
    } catch (const Error&) {
      continue;
    }
    if (!r.find(prompt_id)) continue;
    if (!best || r.created_at > best->created_at) best = std::move(r);
  }
  return best;
}

std::string ReportStore::save(const LintReport& report) const {
  if (!valid_run_id(report.run_id)) throw ConfigError("invalid run id '" + report.run_id + "'");
  std::error_code ec;
  fs::create_directories(dir_, ec);
  if (ec) throw IoError("cannot create " + dir_ + ": " + ec.message());
  auto p = fs::path(dir_) / (report.run_id + std::string(kReportSuffix));
  write_file_atomically(p, serialize(report));
  return p.string();
}

std::string ReportStore::fixes_path(const std::string& run_id) const {
  return (fs::path(dir_) / (run_id + std::string(kFixesSuffix))).string();
}

std::vector<FixAction> ReportStore::fixes(const std::string& run_id) const {
  std::vector<FixAction> out;
  std::error_code ec;
  auto path = fixes_path(run_id);
  if (!fs::is_regular_file(path, ec)) return out;
  auto j = nlohmann::json::parse(read_file(path), nullptr, false);
  if (j.is_discarded() || !j.is_array()) throw ConfigError(path + " is not a JSON array");
  for (const auto& f : j) out.push_back(fix_action_from_json(f));
  return out;
}

void ReportStore::record_fix(const std::string& run_id, const FixAction& action) const {
  auto all = fixes(run_id);
  all.push_back(action);
  nlohmann::json j = nlohmann::json::array();
  for (const auto& f : all) j.push_back(to_json(f));
  write_file_atomically(fixes_path(run_id), j.dump(2) + "\n");
}

EventBus::EventBus(std::size_t capacity) : capacity_(capacity) {}

std::uint64_t EventBus::publish(std::string kind, nlohmann::json data) {
  std::uint64_t id;
  {
    std::lock_guard lock(mu_);
    id = next_id_++;
    events_.push_back({id, std::move(kind), std::move(data)});
    while (events_.size() > capacity_) events_.pop_front();
  }
  cv_.notify_all();
  return id;
}

std::vector<EventBus::Event> EventBus::since(std::uint64_t since, std::chrono::milliseconds wait) {
  std::unique_lock lock(mu_);
  auto ready = [&] { return closed_ || (!events_.empty() && events_.back().id > since); };
  if (wait.count() > 0) cv_.wait_for(lock, wait, ready);
  std::vector<Event> out;
  for (const auto& e : events_) {
    if (e.id > since) out.push_back(e);
  }
  return out;
}

std::uint64_t EventBus::last_id() const {
  std::lock_guard lock(mu_);
  return next_id_ - 1;
}

void EventBus::close() {
  {
    std::lock_guard lock(mu_);
    closed_ = true;
  }
  cv_.notify_all();
}

bool EventBus::closed() const {
  std::lock_guard lock(mu_);
  return closed_;
}

std::string EventBus::format(const Event& e) {
  return "id: " + std::to_string(e.id) + "\nevent: " + e.kind + "\ndata: " + e.data.dump() + "\n\n";
}

Service::Service(ServiceOptions options, llm::Gateway* gateway)
    : options_(std::move(options)), gateway_(gateway), store_(options_.reports_dir),
      server_(std::make_unique<httplib::Server>()) {
  install_routes();
}

Service::~Service() { stop(); }

std::pair<int, nlohmann::json> Service::analyze(const nlohmann::json& body) {
  if (!body.is_object() || !body.contains("prompt_text") || !body["prompt_text"].is_string()) {
    return {422, error_body("body needs a string 'prompt_text'")};
  }
  LintOptions opts = options_.analyze_options;
  opts.attacks = options_.attacks;
  if (body.contains("checks")) {
    if (!body["checks"].is_array()) return {422, error_body("'checks' must be an array")};
    opts.check_bias = opts.check_injection = false;
    for (const auto& c : body["checks"]) {
      if (!c.is_string()) return {422, error_body("'checks' entries must be strings")};
      auto s = c.get<std::string>();
      if (s == "bias") opts.check_bias = true;
      else if (s == "injection") opts.check_injection = true;
      else return {422, error_body("unknown check '" + s + "'")};
    }
  }
  if (!gateway_) return {503, error_body("no model backend configured")};
  if (opts.check_injection && opts.attacks.empty()) return {503, error_body("no attack corpus configured")};

  CorpusRecord rec;
  try {
    rec = adhoc_record(body["prompt_text"].get<std::string>());
  } catch (const Error& e) {
    return {422, error_body(e.what())};
  }

  std::lock_guard worker(analyze_mu_);
  auto job = events_.publish("analysis_queued", {{"prompt_id", rec.source.id}});
  auto progress = [&](const ProgressEvent& ev) {
    auto data = ev.to_json();
    data["job"] = job;
    events_.publish(ev.kind, std::move(data));
  };
  try {
    auto report = lint({rec}, *gateway_, opts, progress);
    nlohmann::json out{{"job", job}, {"run_id", report.run_id}, {"budget", to_json(report)["budget"]}};
    out["prompt"] = report.prompts.empty() ? nlohmann::json(nullptr) : to_json(report.prompts.front());
    return {200, out};
  } catch (const Error& e) {
    events_.publish("analysis_failed", {{"job", job}, {"message", e.what()}});
    return {500, error_body(e.what())};
  }
}

std::pair<int, nlohmann::json> Service::create_fix(const nlohmann::json& body) {
  if (!body.is_object() || !body.contains("prompt_id") || !body["prompt_id"].is_string() ||
      !body.contains("rewrite_index") || !body["rewrite_index"].is_number_integer()) {
    return {422, error_body("body needs 'prompt_id' (string) and 'rewrite_index' (integer)")};
  }
  if (body.contains("report_id") && !body["report_id"].is_string()) {
    return {422, error_body("'report_id' must be a string")};
  }
  auto prompt_id = body["prompt_id"].get<std::string>();
  auto index = body["rewrite_index"].get<long long>();

  std::optional<LintReport> report;
  if (body.contains("report_id")) {
    report = store_.load(body["report_id"].get<std::string>());
    if (!report) return {404, error_body("unknown report")};
  } else {
    report = store_.find_prompt(prompt_id);
  }
  const PromptEntry* entry = report ? report->find(prompt_id) : nullptr;
  if (!entry) return {404, error_body("unknown prompt " + prompt_id)};
  auto options = rewrite_options(*entry);
  if (index < 0 || static_cast<std::size_t>(index) >= options.size()) {
    return {422, error_body("rewrite_index out of range (" + std::to_string(options.size()) + " available)")};
  }
  if (entry->file == "<adhoc>") return {422, error_body("prompt has no source file")};

  std::lock_guard lock(fixes_mu_);
  for (const auto& f : store_.fixes(report->run_id)) {
    if (f.prompt_id == prompt_id && f.status == FixStatus::applied) {
      auto out = to_json(f);
      out["error"] = "a rewrite was already applied to this prompt";
      return {409, out};
    }
  }

  FixAction action;
  action.prompt_id = prompt_id;
  action.chosen_rewrite = options[static_cast<std::size_t>(index)].text;
  action.file = entry->file;
  action.span = entry->span;
  action.original_raw = entry->raw;
  FixAction resolved = action;
  if (fs::path(entry->file).is_relative()) resolved.file = (fs::path(options_.source_root) / entry->file).string();

  FixAction result;
  try {
    result = apply_fix(resolved);
  } catch (const RenderError& e) {
    return {422, error_body(e.what())};
  } catch (const IoError& e) {
    return {404, error_body(e.what())};
  }
  result.file = action.file;
  store_.record_fix(report->run_id, result);
  events_.publish("fix_" + std::string(to_string(result.status)), {{"prompt_id", prompt_id}, {"report_id", report->run_id}});
  auto out = to_json(result);
  out["report_id"] = report->run_id;
  return {result.status == FixStatus::applied ? 200 : 409, out};
}

void Service::install_routes() {
  auto& svr = *server_;
  auto send_json = [](httplib::Response& res, int status, const nlohmann::json& j) {
    res.status = status;
    res.set_content(j.dump(), "application/json");
  };
  auto parse_body = [](const httplib::Request& req) {
    return nlohmann::json::parse(req.body, nullptr, false);
  };

  svr.Get("/api/reports", [=, this](const httplib::Request&, httplib::Response& res) {
    send_json(res, 200, store_.list());
  });

  svr.Get(R"(/api/reports/([^/]+))", [=, this](const httplib::Request& req, httplib::Response& res) {
    auto raw = store_.read_raw(req.matches[1]);
    if (!raw) return send_json(res, 404, error_body("unknown report"));
    res.status = 200;
    res.set_content(*raw, "application/json");
  });

  svr.Get(R"(/api/prompts/([^/]+))", [=, this](const httplib::Request& req, httplib::Response& res) {
    std::string id = req.matches[1];
    auto report = store_.find_prompt(id);
    if (!report) return send_json(res, 404, error_body("unknown prompt"));
    nlohmann::json fixes = nlohmann::json::array();
    for (const auto& f : store_.fixes(report->run_id)) {
      if (f.prompt_id == id) fixes.push_back(to_json(f));
    }
    send_json(res, 200, {{"report_id", report->run_id}, {"prompt", to_json(*report->find(id))}, {"fixes", fixes}});
  });

  svr.Post("/api/analyze", [=, this](const httplib::Request& req, httplib::Response& res) {
    auto body = parse_body(req);
    if (body.is_discarded()) return send_json(res, 422, error_body("body is not JSON"));
    auto [status, out] = analyze(body);
    send_json(res, status, out);
  });

  svr.Post("/api/fixes", [=, this](const httplib::Request& req, httplib::Response& res) {
    auto body = parse_body(req);
    if (body.is_discarded()) return send_json(res, 422, error_body("body is not JSON"));
    auto [status, out] = create_fix(body);
    send_json(res, status, out);
  });

  svr.Get("/api/events", [this](const httplib::Request& req, httplib::Response& res) {
    std::uint64_t since = 0;
    try {
      if (req.has_param("since")) since = std::stoull(req.get_param_value("since"));
      else if (req.has_header("Last-Event-ID")) since = std::stoull(req.get_header_value("Last-Event-ID"));
    } catch (const std::exception&) {
      res.status = 422;
      res.set_content(error_body("'since' must be an event id").dump(), "application/json");
      return;
    }
    bool once = req.has_param("once") && req.get_param_value("once") != "0";
    res.set_header("Cache-Control", "no-cache");
    res.set_chunked_content_provider("text/event-stream", [this, since, once](std::size_t, httplib::DataSink& sink) mutable {
      auto batch = events_.since(since, once ? std::chrono::milliseconds(0) : std::chrono::milliseconds(15000));
      for (const auto& e : batch) {
        auto chunk = EventBus::format(e);
        if (!sink.write(chunk.data(), chunk.size())) return false;
        since = e.id;
      }
      if (once || events_.closed()) {
        sink.done();
        return true;
      }
      if (batch.empty()) {
        static constexpr std::string_view keepalive = ": keepalive\n\n";
        if (!sink.write(keepalive.data(), keepalive.size())) return false;
      }
      return true;
    });
  });

  if (!options_.ui_dir.empty()) {
    if (!svr.set_mount_point("/", options_.ui_dir)) throw ConfigError("cannot serve UI from " + options_.ui_dir);
  }

  svr.set_exception_handler([=](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    try {
      std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      send_json(res, 500, error_body(e.what()));
    }
  });
}

int Service::start(const std::string& host, int port) {
  int bound = port;
  if (port == 0) {
    bound = server_->bind_to_any_port(host);
  } else if (!server_->bind_to_port(host, port)) {
    bound = -1;
  }
  if (bound < 0) throw IoError("cannot bind " + host + ":" + std::to_string(port));
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return bound;
}

void Service::run(const std::string& host, int port) {
  if (!server_->listen(host, port)) throw IoError("cannot listen on " + host + ":" + std::to_string(port));
}

void Service::stop() {
  events_.close();
  if (server_) server_->stop();
  if (thread_.joinable()) thread_.join();
}

}  // namespace promptdoctor
