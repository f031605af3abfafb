#pragma once

#include <filesystem>
#include <string>

#include "cdv/pipeline.hpp"
#include "cdv/synthetic.hpp"
#include "json.hpp"

namespace cdv::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& label);
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const noexcept { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

/// Shorter training for fixtures that only need working artifacts.
nlohmann::json quick_overrides();

/// Writes the synthetic corpus into dir and runs every pipeline stage.
pipeline::Config train_synthetic(const std::filesystem::path& dir,
                                 const synthetic::SyntheticConfig& corpus = {},
                                 const nlohmann::json& overrides = quick_overrides());

}  // namespace cdv::testing
