#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "promptdoctor/backends.hpp"
#include "promptdoctor/gateway.hpp"

namespace pdtest {

inline std::filesystem::path source_dir() {
  const char* d = std::getenv("PD_SOURCE_DIR");
  return d ? std::filesystem::path(d) : std::filesystem::current_path();
}

inline std::filesystem::path fixture(const std::string& rel) { return source_dir() / "tests" / "fixtures" / rel; }

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void spit(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

/// Fresh directory under the system temp dir, removed on scope exit.
class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("pdtest-" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

/// Gateway over a strict mock with no backoff delay.
inline std::pair<std::shared_ptr<promptdoctor::llm::Gateway>, std::shared_ptr<promptdoctor::llm::MockBackend>>
mock_gateway(std::size_t concurrency = 4, std::optional<std::size_t> budget = std::nullopt) {
  auto mock = std::make_shared<promptdoctor::llm::MockBackend>(true);
  auto cfg = promptdoctor::llm::GatewayConfig::defaults();
  cfg.concurrency = concurrency;
  cfg.budget = budget;
  cfg.backoff_base = std::chrono::milliseconds(0);
  return {std::make_shared<promptdoctor::llm::Gateway>(cfg, mock), mock};
}

}  // namespace pdtest
