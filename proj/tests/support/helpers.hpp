#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <memory>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "costforge/gateway.hpp"
#include "costforge/pipeline.hpp"

namespace testing {

namespace fs = std::filesystem;

inline fs::path fixtures_dir() { return fs::path(COSTFORGE_FIXTURES_DIR); }

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    std::random_device rd;
    path_ = fs::temp_directory_path() /
            ("costforge-test-" + std::to_string(rd()) + "-" + std::to_string(counter.fetch_add(1)));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

inline std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

inline void write_file(const fs::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << content;
}

inline costforge::llm::ScriptEntry reply(std::vector<std::string> match, std::string response, bool repeat = false) {
  costforge::llm::ScriptEntry e;
  e.match_all = std::move(match);
  e.response = std::move(response);
  e.repeat = repeat;
  return e;
}

inline costforge::llm::ScriptEntry failure(std::vector<std::string> match) {
  costforge::llm::ScriptEntry e;
  e.match_all = std::move(match);
  e.fail = true;
  return e;
}

/// A gateway on a fake clock with a single backend tagged "mock".
struct World {
  std::shared_ptr<costforge::llm::FakeClock> clock = std::make_shared<costforge::llm::FakeClock>();
  std::unique_ptr<costforge::llm::Gateway> gateway;

  explicit World(costforge::llm::GatewayOptions options = {}) {
    options.retry.jitter = 0.0;
    gateway = std::make_unique<costforge::llm::Gateway>(costforge::llm::TemplateStore::embedded(), options, clock);
  }

  std::shared_ptr<costforge::llm::ScriptedBackend> script(std::vector<costforge::llm::ScriptEntry> entries) {
    return gateway->register_scripted_backend("mock", std::move(entries));
  }

  void callback(costforge::llm::CallbackBackend::Fn fn) {
    gateway->register_backend("mock", std::make_shared<costforge::llm::CallbackBackend>(std::move(fn)));
  }

  costforge::llm::ModelHandle handle() const { return {gateway.get(), "mock", {}}; }
  costforge::pipeline::Roles roles() const { return {handle(), handle(), handle(), handle()}; }
};

// Marker phrases that identify each prompt template in a rendered prompt.
inline constexpr const char* kSelect = "most optimal structure";
inline constexpr const char* kSchema = "enumerate the task-specific attributes";
inline constexpr const char* kTrace = "extract the structured data step by step";
inline constexpr const char* kTwoHop = "using only the structured data";
inline constexpr const char* kVerify = "binary decision";
inline constexpr const char* kSufficient = "sufficient to answer";
inline constexpr const char* kRefine = "supplemental extraction";
inline constexpr const char* kSemantic = "semantic similarity";
inline constexpr const char* kConsistency = "entity level";
inline constexpr const char* kJudge = "Accuracy, Hallucinations, and Completeness";

}  // namespace testing
