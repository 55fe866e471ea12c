#pragma once

#include <chrono>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "promptdoctor/gateway.hpp"

namespace promptdoctor::llm {

/// OpenAI-compatible `/chat/completions` and `/embeddings` over HTTP(S).
class HttpBackend : public Backend {
 public:
  /// Reads the key from PROMPTDOCTOR_API_KEY when `api_key` is empty.
  explicit HttpBackend(std::string endpoint, std::string api_key = {},
                       std::chrono::seconds timeout = std::chrono::seconds(120));

  ChatResponse chat(const ModelRole& model, const ChatRequest& req) override;
  std::vector<std::vector<double>> embed(const ModelRole& model, const std::vector<std::string>& texts) override;

 private:
  nlohmann::json post(const std::string& path, const nlohmann::json& body);

  std::string origin_;
  std::string base_path_;
  std::string api_key_;
  std::chrono::seconds timeout_;
};

/// One scripted reply. An entry with neither digest nor regex matches any
/// request for its role.
struct MockEntry {
  std::optional<Role> role;
  std::optional<std::string> digest;
  std::optional<std::string> regex;
  /// Served in order; the last one repeats. `$1`.. expand regex captures.
  std::vector<std::string> replies;
  /// Matching calls that fail with a transient error before replies start.
  int fail_times = 0;
};

MockEntry mock_entry_from_json(const nlohmann::json& j);

struct MockCall {
  Role role = Role::generator;
  ChatRequest request;
  std::string digest;
  double temperature = 0.0;
  std::string reply;
  bool failed = false;
  bool embedding = false;
  std::chrono::steady_clock::time_point start;
  std::chrono::steady_clock::time_point end;
};

/// Deterministic backend for tests and offline runs. Handlers are consulted
/// first, then script entries in file order. In strict mode an unmatched
/// request raises UnscriptedCall.
class MockBackend : public Backend {
 public:
  /// Returns a reply to claim the request, or nullopt to pass. May throw
  /// TransientError to simulate a failure.
  using Handler = std::function<std::optional<std::string>(Role, const ChatRequest&)>;

  explicit MockBackend(bool strict = true);

  static std::shared_ptr<MockBackend> from_jsonl(const std::string& path, bool strict = true);
  void load_jsonl(const std::string& path);
  void add(MockEntry entry);
  void add_handler(Handler h);
  /// Reply used for unmatched requests when not strict.
  void set_fallback(std::string reply);
  void set_latency(std::chrono::milliseconds latency);

  ChatResponse chat(const ModelRole& model, const ChatRequest& req) override;
  std::vector<std::vector<double>> embed(const ModelRole& model, const std::vector<std::string>& texts) override;

  std::vector<MockCall> calls() const;
  std::size_t call_count() const;
  std::size_t max_in_flight() const;
  void clear_calls();

  /// L2-normalized signed feature hashing of unigrams and bigrams.
  static std::vector<double> hashed_embedding(std::string_view text, std::size_t dim = 256);

 private:
  struct State {
    MockEntry entry;
    std::size_t failures = 0;
    std::size_t served = 0;
  };

  std::optional<std::string> match(Role role, const ChatRequest& req, const std::string& digest);

  bool strict_;
  std::optional<std::string> fallback_;
  std::chrono::milliseconds latency_{0};
  mutable std::mutex mu_;
  std::vector<Handler> handlers_;
  std::vector<State> entries_;
  std::vector<MockCall> calls_;
  std::size_t in_flight_ = 0;
  std::size_t max_in_flight_ = 0;
};

/// Builds the backend named by `kind` ("http" or "mock").
std::shared_ptr<Backend> make_backend(const GatewayConfig& config, const std::string& kind,
                                      const std::string& mock_script = {});

}  // namespace promptdoctor::llm
