#include "run_record.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iterator>

#include "asrkit/error.hpp"
#include "asrkit/rng.hpp"

namespace asrkit::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::uint64_t hash_file(const fs::path& p, std::uint64_t h) {
  std::ifstream is(p, std::ios::binary);
  if (!is) throw Error("cannot read " + p.string());
  std::string bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return fnv1a64(bytes, h);
}

std::string hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace

std::string hash_path(const fs::path& p) {
  if (!fs::is_directory(p)) return hex(hash_file(p, 14695981039346656037ull));
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(p))
    if (e.is_regular_file()) files.push_back(e.path().lexically_relative(p));
  std::sort(files.begin(), files.end());
  std::uint64_t h = 14695981039346656037ull;
  for (const auto& f : files) {
    h = fnv1a64(f.generic_string(), h);
    h = hash_file(p / f, h);
  }
  return hex(h);
}

RunRecord::RunRecord(std::string command, std::uint64_t seed) : command_(std::move(command)), seed_(seed) {}

void RunRecord::input(const fs::path& p) {
  if (!fs::exists(p)) throw Error("input not found: " + p.string());
  inputs_.push_back(p);
}

void RunRecord::output(const fs::path& p) { outputs_.push_back({p, fs::exists(p)}); }

void RunRecord::commit(const fs::path& record_path) {
  record_path_ = record_path;
  json j;
  j["command"] = command_;
  j["seed"] = seed_;
  j["params"] = params_;
  j["inputs"] = json::object();
  for (const auto& p : inputs_) j["inputs"][p.string()] = hash_path(p);
  j["outputs"] = json::object();
  for (const auto& o : outputs_)
    if (fs::exists(o.path) && o.path != record_path) j["outputs"][o.path.string()] = hash_path(o.path);
  std::ofstream os(record_path, std::ios::binary);
  if (!os) throw Error("cannot write " + record_path.string());
  os << j.dump(2) << '\n';
  if (!os) throw Error("write failed: " + record_path.string());
}

void RunRecord::rollback() noexcept {
  std::error_code ec;
  for (auto it = outputs_.rbegin(); it != outputs_.rend(); ++it) {
    if (fs::is_directory(it->path, ec)) {
      if (!it->existed) fs::remove_all(it->path, ec);
    } else {
      fs::remove(it->path, ec);
    }
  }
  if (!record_path_.empty()) fs::remove(record_path_, ec);
}

}  // namespace asrkit::cli
