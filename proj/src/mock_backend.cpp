#include <cctype>
#include <cmath>
#include <fstream>
#include <thread>

#include <boost/regex.hpp>

#include "promptdoctor/backends.hpp"
#include "promptdoctor/errors.hpp"
#include "promptdoctor/hashing.hpp"
#include "promptdoctor/metrics.hpp"

namespace promptdoctor::llm {

namespace {

/// `$N` becomes capture N, `$$` a literal dollar; nothing else is special.
std::string expand_captures(const std::string& tmpl, const boost::smatch& m) {
  std::string out;
  for (std::size_t i = 0; i < tmpl.size(); ++i) {
    if (tmpl[i] != '$' || i + 1 >= tmpl.size()) {
      out += tmpl[i];
      continue;
    }
    if (tmpl[i + 1] == '$') {
      out += '$';
      ++i;
    } else if (std::isdigit(static_cast<unsigned char>(tmpl[i + 1]))) {
      std::size_t j = i + 1, n = 0;
      while (j < tmpl.size() && std::isdigit(static_cast<unsigned char>(tmpl[j]))) n = n * 10 + (tmpl[j++] - '0');
      if (n < m.size()) out += m[static_cast<int>(n)].str();
      i = j - 1;
    } else {
      out += '$';
    }
  }
  return out;
}

}  // namespace

MockEntry mock_entry_from_json(const nlohmann::json& j) {
  MockEntry e;
  try {
    if (j.contains("match")) {
      const auto& m = j["match"];
      if (m.contains("role")) e.role = role_from_string(m["role"].get<std::string>());
      if (m.contains("digest")) e.digest = m["digest"].get<std::string>();
      if (m.contains("regex")) e.regex = m["regex"].get<std::string>();
    }
    if (j.contains("replies")) e.replies = j["replies"].get<std::vector<std::string>>();
    if (j.contains("reply")) e.replies.insert(e.replies.begin(), j["reply"].get<std::string>());
    e.fail_times = j.value("fail_times", 0);
  } catch (const nlohmann::json::exception& ex) {
    throw ConfigError(std::string("mock script entry: ") + ex.what());
  }
  if (e.replies.empty()) throw ConfigError("mock script entry has no reply");
  if (e.regex) {
    try {
      boost::regex probe(*e.regex);
    } catch (const boost::regex_error& ex) {
      throw ConfigError("mock script regex '" + *e.regex + "': " + ex.what());
    }
  }
  return e;
}

MockBackend::MockBackend(bool strict) : strict_(strict) {}

std::shared_ptr<MockBackend> MockBackend::from_jsonl(const std::string& path, bool strict) {
  auto m = std::make_shared<MockBackend>(strict);
  m->load_jsonl(path);
  return m;
}

void MockBackend::load_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open mock script " + path);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded()) throw ConfigError(path + ":" + std::to_string(lineno) + ": invalid JSON");
    add(mock_entry_from_json(j));
  }
}

void MockBackend::add(MockEntry entry) {
  std::lock_guard lock(mu_);
  entries_.push_back({std::move(entry), 0, 0});
}

void MockBackend::add_handler(Handler h) {
  std::lock_guard lock(mu_);
  handlers_.push_back(std::move(h));
}

void MockBackend::set_fallback(std::string reply) {
  std::lock_guard lock(mu_);
  fallback_ = std::move(reply);
}

void MockBackend::set_latency(std::chrono::milliseconds latency) { latency_ = latency; }

std::optional<std::string> MockBackend::match(Role role, const ChatRequest& req, const std::string& digest) {
  std::string rendered;
  for (auto& st : entries_) {
    const auto& e = st.entry;
    if (e.role && *e.role != role) continue;
    std::string reply;
    if (e.digest) {
      if (*e.digest != digest) continue;
      reply = e.replies[std::min(st.served, e.replies.size() - 1)];
    } else if (e.regex) {
      if (rendered.empty()) rendered = render_messages(req);
      boost::smatch m;
      if (!boost::regex_search(rendered, m, boost::regex(*e.regex))) continue;
      reply = expand_captures(e.replies[std::min(st.served, e.replies.size() - 1)], m);
    } else {
      reply = e.replies[std::min(st.served, e.replies.size() - 1)];
    }
    if (st.failures < static_cast<std::size_t>(e.fail_times)) {
      ++st.failures;
      throw TransientError("scripted transient failure");
    }
    ++st.served;
    return reply;
  }
  return std::nullopt;
}

ChatResponse MockBackend::chat(const ModelRole& model, const ChatRequest& req) {
  MockCall call;
  call.role = model.role;
  call.request = req;
  call.digest = request_digest(req);
  call.temperature = model.temperature;
  call.start = std::chrono::steady_clock::now();
  std::vector<Handler> handlers;
  {
    std::lock_guard lock(mu_);
    ++in_flight_;
    max_in_flight_ = std::max(max_in_flight_, in_flight_);
    handlers = handlers_;
  }
  if (latency_.count() > 0) std::this_thread::sleep_for(latency_);

  auto finish = [&](bool failed) {
    call.failed = failed;
    call.end = std::chrono::steady_clock::now();
    std::lock_guard lock(mu_);
    --in_flight_;
    calls_.push_back(call);
  };

  try {
    std::optional<std::string> reply;
    for (const auto& h : handlers) {
      if ((reply = h(model.role, req))) break;
    }
    if (!reply) {
      std::lock_guard lock(mu_);
      reply = match(model.role, req, call.digest);
      if (!reply && !strict_ && fallback_) reply = fallback_;
    }
    if (!reply) {
      throw UnscriptedCall("no scripted reply for " + std::string(to_string(model.role)) + " request " +
                           call.digest.substr(0, 16) + ": " + render_messages(req).substr(0, 160));
    }
    call.reply = *reply;
  } catch (...) {
    finish(true);
    throw;
  }
  finish(false);

  ChatResponse resp;
  resp.content = call.reply;
  resp.usage.prompt_tokens = static_cast<std::int64_t>(metrics::tokenize(render_messages(req)).size());
  resp.usage.completion_tokens = static_cast<std::int64_t>(metrics::tokenize(call.reply).size());
  resp.latency_ms = std::max<std::int64_t>(
      1, std::chrono::duration_cast<std::chrono::milliseconds>(call.end - call.start).count());
  return resp;
}

std::vector<double> MockBackend::hashed_embedding(std::string_view text, std::size_t dim) {
  std::vector<double> v(dim, 0.0);
  auto add = [&](std::string_view feature) {
    auto h = fnv1a64(feature);
    double sign = (h >> 63) ? -1.0 : 1.0;
    v[h % dim] += sign;
  };
  auto toks = metrics::tokenize(text);
  add("\x01bias");
  for (std::size_t i = 0; i < toks.size(); ++i) {
    add(toks[i]);
    if (i + 1 < toks.size()) add(toks[i] + "\x1f" + toks[i + 1]);
  }
  double norm = 0.0;
  for (double x : v) norm += x * x;
  norm = std::sqrt(norm);
  if (norm > 0) {
    for (double& x : v) x /= norm;
  }
  return v;
}

std::vector<std::vector<double>> MockBackend::embed(const ModelRole& model, const std::vector<std::string>& texts) {
  MockCall call;
  call.role = model.role;
  call.embedding = true;
  call.start = std::chrono::steady_clock::now();
  std::vector<std::vector<double>> out;
  out.reserve(texts.size());
  for (const auto& t : texts) {
    out.push_back(hashed_embedding(t));
    call.request.messages.push_back({MessageRole::user, t});
  }
  call.digest = request_digest(call.request);
  call.end = std::chrono::steady_clock::now();
  std::lock_guard lock(mu_);
  calls_.push_back(std::move(call));
  return out;
}

std::vector<MockCall> MockBackend::calls() const {
  std::lock_guard lock(mu_);
  return calls_;
}

std::size_t MockBackend::call_count() const {
  std::lock_guard lock(mu_);
  return calls_.size();
}

std::size_t MockBackend::max_in_flight() const {
  std::lock_guard lock(mu_);
  return max_in_flight_;
}

void MockBackend::clear_calls() {
  std::lock_guard lock(mu_);
  calls_.clear();
  max_in_flight_ = 0;
}

std::shared_ptr<Backend> make_backend(const GatewayConfig& config, const std::string& kind,
                                      const std::string& mock_script) {
  if (kind == "mock") {
    auto m = std::make_shared<MockBackend>(true);
    if (!mock_script.empty()) m->load_jsonl(mock_script);
    return m;
  }
  if (kind == "http") return std::make_shared<HttpBackend>(config.endpoint);
  throw ConfigError("unknown backend '" + kind + "' (expected http or mock)");
}

}  // namespace promptdoctor::llm
