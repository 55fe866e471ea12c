#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace promptdoctor::llm {

/// M1 generates rewrites and data, M2 answers prompts, M3 judges.
enum class Role { generator, responder, judge, embedder };

std::string_view to_string(Role r);
Role role_from_string(std::string_view s);

struct ModelRole {
  Role role = Role::generator;
  std::string model_id;
  double temperature = 0.0;
  int max_tokens = 1024;
};

enum class MessageRole { system, user, assistant };

std::string_view to_string(MessageRole r);

struct Message {
  MessageRole role = MessageRole::user;
  std::string content;
  friend bool operator==(const Message&, const Message&) = default;
};

struct ChatRequest {
  std::vector<Message> messages;
  std::optional<double> temperature;
  /// Forwarded to backends that support sampling seeds.
  std::optional<std::uint64_t> seed;

  static ChatRequest user(std::string content);
};

struct Usage {
  std::int64_t prompt_tokens = 0;
  std::int64_t completion_tokens = 0;
};

struct ChatResponse {
  std::string content;
  Usage usage;
  std::int64_t latency_ms = 0;
};

/// `role: content` lines joined by newlines.
std::string render_messages(const ChatRequest& req);

/// SHA-256 of render_messages() after whitespace runs collapse to one space.
std::string request_digest(const ChatRequest& req);

/// One model provider. Implementations throw TransientError for retryable
/// failures, AuthError for credential problems, TransportError otherwise.
class Backend {
 public:
  virtual ~Backend() = default;
  virtual ChatResponse chat(const ModelRole& model, const ChatRequest& req) = 0;
  virtual std::vector<std::vector<double>> embed(const ModelRole& model, const std::vector<std::string>& texts) = 0;
};

struct GatewayConfig {
  std::string endpoint = "https://api.openai.com/v1";
  std::map<Role, ModelRole> roles;
  std::size_t concurrency = 8;
  /// Maximum backend attempts per run; unset means unlimited.
  std::optional<std::size_t> budget;
  int max_attempts = 3;
  std::chrono::milliseconds backoff_base{500};
  int json_retries = 2;

  /// Generation at temperature 1.0; responding, judging and detection at 0.
  static GatewayConfig defaults();
  static GatewayConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

GatewayConfig load_gateway_config(const std::string& path);

enum class FieldKind { boolean, string, string_array, number };

struct FieldSpec {
  std::string name;
  FieldKind kind = FieldKind::string;
};

using JsonSchema = std::vector<FieldSpec>;

/// Empty when valid, otherwise a description of the first problem.
std::optional<std::string> validate(const nlohmann::json& obj, const JsonSchema& schema);

/// First parseable JSON object in free text, skipping code fences and prose.
std::optional<nlohmann::json> extract_json_object(std::string_view text);

class Gateway {
 public:
  Gateway(GatewayConfig config, std::shared_ptr<Backend> backend);

  ChatResponse chat(Role role, const ChatRequest& req);

  /// chat() plus JSON extraction and schema validation, re-prompting with a
  /// correction on failure.
  nlohmann::json chat_json(Role role, const ChatRequest& req, const JsonSchema& schema);

  std::vector<std::vector<double>> embed(const std::vector<std::string>& texts);

  const ModelRole& model(Role role) const;
  const GatewayConfig& config() const noexcept { return config_; }

  /// Backend attempts issued so far, including failed ones.
  std::size_t calls_used() const noexcept { return used_.load(); }
  std::optional<std::size_t> budget() const noexcept { return config_.budget; }

 private:
  template <class F>
  auto with_retries(F&& call) -> decltype(call());
  void acquire();
  void release();
  void charge();

  GatewayConfig config_;
  std::shared_ptr<Backend> backend_;
  std::atomic<std::size_t> used_{0};
  std::mutex slots_mutex_;
  std::condition_variable slots_cv_;
  std::size_t in_flight_ = 0;
};

}  // namespace promptdoctor::llm
