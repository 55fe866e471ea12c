#include <chrono>
#include <cstdlib>

#include <httplib.h>

#include "promptdoctor/backends.hpp"
#include "promptdoctor/errors.hpp"

namespace promptdoctor::llm {

HttpBackend::HttpBackend(std::string endpoint, std::string api_key, std::chrono::seconds timeout)
    : api_key_(std::move(api_key)), timeout_(timeout) {
  auto scheme_end = endpoint.find("://");
  if (scheme_end == std::string::npos) throw ConfigError("endpoint must start with http:// or https://");
  auto path_start = endpoint.find('/', scheme_end + 3);
  origin_ = endpoint.substr(0, path_start);
  base_path_ = path_start == std::string::npos ? "" : endpoint.substr(path_start);
  while (!base_path_.empty() && base_path_.back() == '/') base_path_.pop_back();
  if (api_key_.empty()) {
    if (const char* env = std::getenv("PROMPTDOCTOR_API_KEY")) api_key_ = env;
  }
}

nlohmann::json HttpBackend::post(const std::string& path, const nlohmann::json& body) {
  httplib::Client client(origin_);
  client.set_connection_timeout(std::chrono::seconds(10));
  client.set_read_timeout(timeout_);
  client.set_write_timeout(timeout_);
  httplib::Headers headers;
  if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);
  auto res = client.Post(base_path_ + path, headers, body.dump(), "application/json");
  if (!res) throw TransientError("request to " + origin_ + " failed: " + httplib::to_string(res.error()));
  if (res->status == 401 || res->status == 403) {
    throw AuthError("endpoint rejected credentials (HTTP " + std::to_string(res->status) + ")");
  }
  if (res->status == 429 || res->status >= 500) {
    throw TransientError("HTTP " + std::to_string(res->status) + " from " + origin_);
  }
  if (res->status < 200 || res->status >= 300) {
    throw TransportError("HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 300));
  }
  auto j = nlohmann::json::parse(res->body, nullptr, false);
  if (j.is_discarded()) throw TransportError("endpoint returned non-JSON body");
  return j;
}

ChatResponse HttpBackend::chat(const ModelRole& model, const ChatRequest& req) {
  nlohmann::json messages = nlohmann::json::array();
  for (const auto& m : req.messages) messages.push_back({{"role", to_string(m.role)}, {"content", m.content}});
  nlohmann::json body{{"model", model.model_id},
                      {"messages", messages},
                      {"temperature", model.temperature},
                      {"max_tokens", model.max_tokens}};
  if (req.seed) body["seed"] = *req.seed;
  auto t0 = std::chrono::steady_clock::now();
  auto j = post("/chat/completions", body);
  ChatResponse resp;
  try {
    const auto& content = j.at("choices").at(0).at("message").at("content");
    resp.content = content.is_string() ? content.get<std::string>() : std::string();
    if (j.contains("usage")) {
      resp.usage.prompt_tokens = j["usage"].value("prompt_tokens", 0);
      resp.usage.completion_tokens = j["usage"].value("completion_tokens", 0);
    }
  } catch (const nlohmann::json::exception& e) {
    throw TransportError(std::string("unexpected chat response shape: ") + e.what());
  }
  resp.latency_ms =
      std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - t0).count();
  return resp;
}

std::vector<std::vector<double>> HttpBackend::embed(const ModelRole& model, const std::vector<std::string>& texts) {
  auto j = post("/embeddings", {{"model", model.model_id}, {"input", texts}});
  std::vector<std::vector<double>> out(texts.size());
  try {
    for (const auto& item : j.at("data")) {
      auto idx = item.value("index", std::size_t{0});
      if (idx >= out.size()) throw TransportError("embedding index out of range");
      out[idx] = item.at("embedding").get<std::vector<double>>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw TransportError(std::string("unexpected embedding response shape: ") + e.what());
  }
  return out;
}

}  // namespace promptdoctor::llm
