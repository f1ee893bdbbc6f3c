// SPDX-License-Identifier: Apache-2.0
#include "pepper/fixtures.hpp"

#include "pepper/digest.hpp"
#include "pepper/files.hpp"
#include "pepper/text.hpp"

namespace pepper {

using nlohmann::json;

namespace fixture_key {

std::string llm(std::string_view prompt) { return sha256_hex(prompt); }

std::string generation(std::string_view text, std::int64_t seed) {
  return sha256_hex(json{{"seed", seed}, {"text", text}}.dump());
}

std::string embed_text(std::string_view text) { return sha256_hex(text); }

std::string embed_image(std::string_view image_bytes) { return sha256_hex(image_bytes); }

std::string judge(std::string_view image_bytes, std::string_view question) {
  return sha256_hex(json{{"image", sha256_hex(image_bytes)}, {"question", question}}.dump());
}

}  // namespace fixture_key

namespace {

std::string slot(std::string_view kind, std::string_view key) {
  std::string s(kind);
  s.push_back(':');
  s += key;
  return s;
}

}  // namespace

FixtureStore FixtureStore::load(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw FixtureSchemaError("fixture file not found: " + path.string());
  }
  FixtureStore store;
  bool have_header = false;
  std::size_t lineno = 0;
  for (const auto& line : files::read_lines(path)) {
    ++lineno;
    if (text::trim(line).empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw FixtureSchemaError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
    const std::string kind = j.at("kind").get<std::string>();
    if (!have_header) {
      if (kind != "schema") {
        throw FixtureSchemaError(path.string() + ": first record must be the schema record");
      }
      const int version = j.at("payload").value("version", -1);
      if (version != kFixtureSchemaVersion) {
        throw FixtureSchemaError(path.string() + ": fixture schema version " +
                                 std::to_string(version) + ", expected " +
                                 std::to_string(kFixtureSchemaVersion));
      }
      store.header_ = j.at("payload");
      have_header = true;
      continue;
    }
    store.records_[slot(kind, j.at("key_hash").get<std::string>())] = j.at("payload");
  }
  if (!have_header) throw FixtureSchemaError(path.string() + ": missing schema record");
  return store;
}

const json* FixtureStore::find(std::string_view kind, std::string_view key_hash) const {
  const auto it = records_.find(slot(kind, key_hash));
  return it == records_.end() ? nullptr : &it->second;
}

FixtureWriter::FixtureWriter(json header_extra) : header_(std::move(header_extra)) {
  header_["version"] = kFixtureSchemaVersion;
}

void FixtureWriter::put(std::string kind, std::string key_hash, json payload) {
  std::lock_guard lock(mu_);
  const std::string s = slot(kind, key_hash);
  if (auto it = index_.find(s); it != index_.end()) {
    records_[it->second].payload = std::move(payload);
    return;
  }
  index_.emplace(s, records_.size());
  records_.push_back({std::move(key_hash), std::move(kind), std::move(payload)});
}

std::size_t FixtureWriter::size() const {
  std::lock_guard lock(mu_);
  return records_.size();
}

std::string FixtureWriter::serialize() const {
  std::lock_guard lock(mu_);
  std::string out = json{{"key_hash", ""}, {"kind", "schema"}, {"payload", header_}}.dump();
  out.push_back('\n');
  for (const auto& r : records_) {
    out += json{{"key_hash", r.key_hash}, {"kind", r.kind}, {"payload", r.payload}}.dump();
    out.push_back('\n');
  }
  return out;
}

void FixtureWriter::write(const std::filesystem::path& path) const {
  files::write_atomic(path, serialize());
}

}  // namespace pepper
