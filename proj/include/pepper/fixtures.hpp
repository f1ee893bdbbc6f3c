// SPDX-License-Identifier: Apache-2.0
//
// Content-addressed replay fixtures. A fixture file is JSON lines of
// {key_hash, kind, payload}; the first line is a schema record
// {"key_hash": "", "kind": "schema", "payload": {"version": N, ...}}.
#pragma once

#include <cstdint>
#include <filesystem>
#include <mutex>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

namespace pepper {

inline constexpr int kFixtureSchemaVersion = 1;

class FixtureSchemaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Request hashing shared by recording and replay.
namespace fixture_key {
std::string llm(std::string_view prompt);
std::string generation(std::string_view text, std::int64_t seed);
std::string embed_text(std::string_view text);
std::string embed_image(std::string_view image_bytes);
std::string judge(std::string_view image_bytes, std::string_view question);
}  // namespace fixture_key

struct FixtureRecord {
  std::string key_hash;
  std::string kind;
  nlohmann::json payload;
};

/// Immutable after load, so concurrent lookups need no locking.
class FixtureStore {
 public:
  /// Throws FixtureSchemaError when the schema record is missing or carries
  /// another version.
  static FixtureStore load(const std::filesystem::path& path);

  const nlohmann::json* find(std::string_view kind, std::string_view key_hash) const;
  const nlohmann::json& header() const { return header_; }
  std::size_t size() const { return records_.size(); }

 private:
  nlohmann::json header_;
  std::unordered_map<std::string, nlohmann::json> records_;
};

/// Single-writer recorder. Records keep first-insertion order and a repeated
/// key replaces the payload in place, so re-recording the same sample list
/// reproduces the same file byte for byte.
class FixtureWriter {
 public:
  explicit FixtureWriter(nlohmann::json header_extra = nlohmann::json::object());

  void put(std::string kind, std::string key_hash, nlohmann::json payload);
  std::size_t size() const;
  std::string serialize() const;
  void write(const std::filesystem::path& path) const;

 private:
  nlohmann::json header_;
  mutable std::mutex mu_;
  std::vector<FixtureRecord> records_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace pepper
