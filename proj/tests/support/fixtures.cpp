#include "fixtures.hpp"

#include <atomic>
#include <chrono>
#include <unistd.h>

namespace cdv::testing {

namespace fs = std::filesystem;

TempDir::TempDir(const std::string& label) {
  static std::atomic<unsigned> counter{0};
  const auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
  path_ = fs::temp_directory_path() /
          ("cdv-" + label + "-" + std::to_string(::getpid()) + "-" + std::to_string(stamp) + "-" +
           std::to_string(counter++));
  fs::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

nlohmann::json quick_overrides() {
  return {{"embeddings", {{"epochs", 10}}},
          {"entity", {{"epochs", 10}}},
          {"aspect", {{"epochs", 5}}},
          {"cdv", {{"epochs", 10}}}};
}

pipeline::Config train_synthetic(const fs::path& dir, const synthetic::SyntheticConfig& corpus,
                                 const nlohmann::json& overrides) {
  synthetic::write_files(synthetic::generate(corpus), dir, overrides);
  pipeline::Config config = pipeline::load_config(dir / "config.json");
  pipeline::Pipeline p(config);
  p.run_all();
  return config;
}

}  // namespace cdv::testing
