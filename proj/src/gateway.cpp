#include "promptdoctor/gateway.hpp"

#include <fstream>
#include <thread>

#include "promptdoctor/errors.hpp"
#include "promptdoctor/hashing.hpp"
#include "promptdoctor/text_util.hpp"

namespace promptdoctor::llm {

std::string_view to_string(Role r) {
  switch (r) {
    case Role::generator: return "generator";
    case Role::responder: return "responder";
    case Role::judge: return "judge";
    case Role::embedder: return "embedder";
  }
  return "generator";
}

Role role_from_string(std::string_view s) {
  if (s == "generator") return Role::generator;
  if (s == "responder") return Role::responder;
  if (s == "judge") return Role::judge;
  if (s == "embedder") return Role::embedder;
  throw ConfigError("unknown model role '" + std::string(s) + "'");
}

std::string_view to_string(MessageRole r) {
  switch (r) {
    case MessageRole::system: return "system";
    case MessageRole::user: return "user";
    case MessageRole::assistant: return "assistant";
  }
  return "user";
}

ChatRequest ChatRequest::user(std::string content) {
  ChatRequest r;
  r.messages.push_back({MessageRole::user, std::move(content)});
  return r;
}

std::string render_messages(const ChatRequest& req) {
  std::string out;
  for (std::size_t i = 0; i < req.messages.size(); ++i) {
    if (i) out += '\n';
    out += to_string(req.messages[i].role);
    out += ": ";
    out += req.messages[i].content;
  }
  return out;
}

std::string request_digest(const ChatRequest& req) {
  return sha256_hex(text::collapse_whitespace(render_messages(req)));
}

GatewayConfig GatewayConfig::defaults() {
  GatewayConfig c;
  c.roles[Role::generator] = {Role::generator, "gpt-4o", 1.0, 2048};
  c.roles[Role::responder] = {Role::responder, "gpt-4o", 0.0, 1024};
  c.roles[Role::judge] = {Role::judge, "gpt-4o", 0.0, 512};
  c.roles[Role::embedder] = {Role::embedder, "text-embedding-3-small", 0.0, 1};
  return c;
}

GatewayConfig GatewayConfig::from_json(const nlohmann::json& j) {
  GatewayConfig c = defaults();
  try {
    if (!j.is_object()) throw ConfigError("gateway config must be a JSON object");
    c.endpoint = j.value("endpoint", c.endpoint);
    c.concurrency = j.value("concurrency", c.concurrency);
    if (j.contains("budget") && !j["budget"].is_null()) c.budget = j["budget"].get<std::size_t>();
    c.max_attempts = j.value("max_attempts", c.max_attempts);
    c.backoff_base = std::chrono::milliseconds(j.value("backoff_ms", static_cast<std::int64_t>(c.backoff_base.count())));
    c.json_retries = j.value("json_retries", c.json_retries);
    if (j.contains("roles")) {
      for (const auto& [name, rj] : j["roles"].items()) {
        Role r = role_from_string(name);
        auto& m = c.roles[r];
        m.role = r;
        m.model_id = rj.value("model", m.model_id);
        m.temperature = rj.value("temperature", m.temperature);
        m.max_tokens = rj.value("max_tokens", m.max_tokens);
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("gateway config: ") + e.what());
  }
  if (c.concurrency == 0) throw ConfigError("concurrency must be at least 1");
  if (c.max_attempts < 1) throw ConfigError("max_attempts must be at least 1");
  for (const auto& [r, m] : c.roles) {
    if (m.temperature < 0) throw ConfigError("temperature must be >= 0");
    if (m.max_tokens < 1) throw ConfigError("max_tokens must be positive");
  }
  return c;
}

nlohmann::json GatewayConfig::to_json() const {
  nlohmann::json roles_j = nlohmann::json::object();
  for (const auto& [r, m] : roles) {
    roles_j[std::string(to_string(r))] = {{"model", m.model_id}, {"temperature", m.temperature},
                                          {"max_tokens", m.max_tokens}};
  }
  return {{"endpoint", endpoint},
          {"concurrency", concurrency},
          {"budget", budget ? nlohmann::json(*budget) : nlohmann::json(nullptr)},
          {"max_attempts", max_attempts},
          {"backoff_ms", backoff_base.count()},
          {"json_retries", json_retries},
          {"roles", roles_j}};
}

GatewayConfig load_gateway_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config " + path + ": " + e.what());
  }
  return GatewayConfig::from_json(j);
}

std::optional<std::string> validate(const nlohmann::json& obj, const JsonSchema& schema) {
  if (!obj.is_object()) return "reply is not a JSON object";
  for (const auto& f : schema) {
    auto it = obj.find(f.name);
    if (it == obj.end()) return "missing required field '" + f.name + "'";
    bool ok = false;
    switch (f.kind) {
      case FieldKind::boolean: ok = it->is_boolean(); break;
      case FieldKind::string: ok = it->is_string(); break;
      case FieldKind::number: ok = it->is_number(); break;
      case FieldKind::string_array:
        ok = it->is_array() && std::all_of(it->begin(), it->end(), [](const auto& e) { return e.is_string(); });
        break;
    }
    if (!ok) return "field '" + f.name + "' has the wrong type";
  }
  return std::nullopt;
}

namespace {

/// End of the brace-balanced object starting at `open`, string-aware.
std::optional<std::size_t> balanced_end(std::string_view s, std::size_t open) {
  int depth = 0;
  bool in_string = false;
  for (std::size_t i = open; i < s.size(); ++i) {
    char c = s[i];
    if (in_string) {
      if (c == '\\') ++i;
      else if (c == '"') in_string = false;
      continue;
    }
    if (c == '"') in_string = true;
    else if (c == '{') ++depth;
    else if (c == '}' && --depth == 0) return i + 1;
  }
  return std::nullopt;
}

}  // namespace

std::optional<nlohmann::json> extract_json_object(std::string_view text) {
  for (auto open = text.find('{'); open != std::string_view::npos; open = text.find('{', open + 1)) {
    auto end = balanced_end(text, open);
    if (!end) continue;
    auto parsed = nlohmann::json::parse(text.substr(open, *end - open), nullptr, false);
    if (!parsed.is_discarded() && parsed.is_object()) return parsed;
  }
  return std::nullopt;
}

Gateway::Gateway(GatewayConfig config, std::shared_ptr<Backend> backend)
    : config_(std::move(config)), backend_(std::move(backend)) {
  if (!backend_) throw ConfigError("gateway requires a backend");
  auto defaults = GatewayConfig::defaults();
  for (const auto& [r, m] : defaults.roles) config_.roles.try_emplace(r, m);
}

const ModelRole& Gateway::model(Role role) const { return config_.roles.at(role); }

void Gateway::acquire() {
  std::unique_lock lock(slots_mutex_);
  slots_cv_.wait(lock, [&] { return in_flight_ < config_.concurrency; });
  ++in_flight_;
}

void Gateway::release() {
  {
    std::lock_guard lock(slots_mutex_);
    --in_flight_;
  }
  slots_cv_.notify_one();
}

void Gateway::charge() {
  auto prev = used_.fetch_add(1);
  if (config_.budget && prev >= *config_.budget) {
    used_.fetch_sub(1);
    throw BudgetExceeded("call budget of " + std::to_string(*config_.budget) + " exhausted");
  }
}

template <class F>
auto Gateway::with_retries(F&& call) -> decltype(call()) {
  for (int attempt = 1;; ++attempt) {
    charge();
    acquire();
    try {
      auto result = call();
      release();
      return result;
    } catch (const TransientError& e) {
      release();
      if (attempt >= config_.max_attempts) {
        throw TransportError("giving up after " + std::to_string(attempt) + " attempts: " + e.what());
      }
    } catch (...) {
      release();
      throw;
    }
    auto delay = config_.backoff_base * (1LL << (attempt - 1));
    if (delay.count() > 0) std::this_thread::sleep_for(delay);
  }
}

ChatResponse Gateway::chat(Role role, const ChatRequest& req) {
  if (req.messages.empty()) throw PreconditionError("chat request has no messages");
  if (req.messages.front().role == MessageRole::assistant) {
    throw PreconditionError("first message must be system or user");
  }
  ModelRole m = model(role);
  if (req.temperature) m.temperature = *req.temperature;
  return with_retries([&] {
    auto t0 = std::chrono::steady_clock::now();
    auto resp = backend_->chat(m, req);
    if (resp.latency_ms == 0) {
      resp.latency_ms =
          std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - t0).count();
    }
    return resp;
  });
}

nlohmann::json Gateway::chat_json(Role role, const ChatRequest& req, const JsonSchema& schema) {
  ChatRequest current = req;
  std::string last_raw;
  std::string problem;
  for (int round = 0; round <= config_.json_retries; ++round) {
    auto resp = chat(role, current);
    last_raw = resp.content;
    auto obj = extract_json_object(resp.content);
    if (obj) {
      auto err = validate(*obj, schema);
      if (!err) return *obj;
      problem = *err;
    } else {
      problem = "no JSON object found in the reply";
    }
    std::string fields;
    for (const auto& f : schema) fields += (fields.empty() ? "" : ", ") + f.name;
    current.messages.push_back({MessageRole::assistant, resp.content});
    current.messages.push_back({MessageRole::user, "That reply could not be used (" + problem +
                                                       "). Reply again with only a JSON object with the fields: " +
                                                       fields + "."});
  }
  throw MalformedResponse("malformed JSON reply: " + problem, last_raw);
}

std::vector<std::vector<double>> Gateway::embed(const std::vector<std::string>& texts) {
  if (texts.empty()) throw PreconditionError("embed requires at least one text");
  const ModelRole& m = model(Role::embedder);
  auto out = with_retries([&] { return backend_->embed(m, texts); });
  if (out.size() != texts.size()) throw TransportError("embedding count does not match input count");
  return out;
}

}  // namespace promptdoctor::llm
