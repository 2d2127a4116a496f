#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

namespace asrkit::cli {

// Fingerprint of a file, or of every file under a directory (sorted by
// relative path).  Returned as 16 hex digits.
std::string hash_path(const std::filesystem::path& p);

// What one invocation read and wrote.  Outputs are registered before they
// are written so a failed run can remove them; commit() hashes them and
// writes the record as JSON (no timestamps, so reruns are byte-identical).
class RunRecord {
 public:
  RunRecord(std::string command, std::uint64_t seed);

  void input(const std::filesystem::path& p);
  void output(const std::filesystem::path& p);
  void param(const std::string& key, nlohmann::json value) { params_[key] = std::move(value); }

  void commit(const std::filesystem::path& record_path);
  // Removes registered outputs; directories only when this run created them.
  void rollback() noexcept;

 private:
  struct Output {
    std::filesystem::path path;
    bool existed = false;
  };
  std::string command_;
  std::uint64_t seed_;
  std::vector<std::filesystem::path> inputs_;
  std::vector<Output> outputs_;
  std::filesystem::path record_path_;
  nlohmann::json params_ = nlohmann::json::object();
};

}  // namespace asrkit::cli
