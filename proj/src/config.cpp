// SPDX-License-Identifier: Apache-2.0
#include "pepper/config.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include "pepper/files.hpp"

namespace pepper {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

void check_id(const std::string& what, const std::string& id) {
  if (id.empty()) throw ConfigError(what + " id is empty");
  if (id.find("__") != std::string::npos) throw ConfigError(what + " id must not contain \"__\": " + id);
  for (char c : id) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                    c == '-' || c == '_' || c == '.' || c == '+';
    if (!ok) throw ConfigError(what + " id has an invalid character: " + id);
  }
}

template <class T>
T field(const json& j, const char* key, T fallback) {
  if (!j.contains(key) || j[key].is_null()) return fallback;
  try {
    return j[key].get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config field ") + key + ": " + e.what());
  }
}

}  // namespace

const AttackEntry& RunConfig::attack(const std::string& id) const {
  for (const auto& a : attacks) {
    if (a.id == id) return a;
  }
  throw ConfigError("unknown attack: " + id);
}

const DefenseEntry& RunConfig::defense(const std::string& id) const {
  for (const auto& d : defenses) {
    if (d.id == id) return d;
  }
  throw ConfigError("unknown defense: " + id);
}

std::vector<std::string> known_defense_steps() { return {"none", "pepper", "ufid", "t2ishield"}; }

RunConfig parse_config(const json& doc, const fs::path& base_dir) {
  if (!doc.is_object()) throw ConfigError("config must be a JSON object");
  RunConfig c;
  c.source = doc;
  c.base_dir = base_dir;
  c.schema_version = field(doc, "schema_version", 0);
  if (c.schema_version != kConfigSchemaVersion) {
    throw ConfigError("unsupported config schema_version " + std::to_string(c.schema_version) +
                      " (expected " + std::to_string(kConfigSchemaVersion) + ")");
  }
  c.run_id = field<std::string>(doc, "run_id", "");
  c.output_dir = resolve(base_dir, field<std::string>(doc, "output_dir", "runs"));
  c.seeds = field(doc, "seeds", std::vector<std::int64_t>{0});
  c.sample_seed = field<std::uint64_t>(doc, "sample_seed", 0);
  c.settings.clear();
  try {
    for (const auto& s : field(doc, "settings", std::vector<std::string>{"short"})) {
      c.settings.push_back(parse_prompt_setting(s));
    }
    c.substitution_site =
        attacks::parse_substitution_site(field<std::string>(doc, "substitution_site", "first_word_edge"));
  } catch (const ValidationError& e) {
    throw ConfigError(e.what());
  } catch (const attacks::AttackError& e) {
    throw ConfigError(e.what());
  }
  c.short_templates = field(doc, "short_templates", attacks::CaptionSource::default_short_templates().captions);
  if (doc.contains("long_source") && !doc["long_source"].is_null()) {
    c.long_source = resolve(base_dir, doc["long_source"].get<std::string>());
  }
  c.long_sample_size = field<std::size_t>(doc, "long_sample_size", 100);

  for (const auto& a : field(doc, "attacks", json::array())) {
    AttackEntry e;
    e.id = field<std::string>(a, "id", "");
    e.generator = field<std::string>(a, "generator", "");
    try {
      e.spec = a.get<AttackSpec>();
    } catch (const std::exception& ex) {
      throw ConfigError("attack " + e.id + ": " + ex.what());
    }
    c.attacks.push_back(std::move(e));
  }
  for (const auto& d : field(doc, "defenses", json::array())) {
    DefenseEntry e;
    e.id = field<std::string>(d, "id", "");
    for (const auto& s : field(d, "pipeline", json::array())) {
      DefenseStep step;
      if (s.is_string()) {
        step.name = s.get<std::string>();
      } else {
        step.name = field<std::string>(s, "name", "");
        step.params = field(s, "params", json::object());
      }
      e.pipeline.push_back(std::move(step));
    }
    c.defenses.push_back(std::move(e));
  }
  for (const auto& b : field(doc, "backends", json::array())) {
    BackendDescriptor d;
    try {
      d = b.get<BackendDescriptor>();
    } catch (const std::exception& ex) {
      throw ConfigError(std::string("backend: ") + ex.what());
    }
    for (const char* key : {"fixture", "checkpoint_path"}) {
      if (auto it = d.config.find(key); it != d.config.end() && !it->second.empty()) {
        it->second = resolve(base_dir, it->second).string();
      }
    }
    c.backends.push_back(std::move(d));
  }
  const json roles = field(doc, "roles", json::object());
  c.roles.llm = field<std::string>(roles, "llm", "");
  c.roles.embedder = field<std::string>(roles, "embedder", "");
  c.roles.semantic_embedder = field<std::string>(roles, "semantic_embedder", c.roles.embedder);
  c.roles.visual_embedder = field<std::string>(roles, "visual_embedder", "");
  c.roles.judge = field<std::string>(roles, "judge", "");
  c.roles.fid_embedder = field<std::string>(roles, "fid_embedder", "");
  c.roles.reference_generator = field<std::string>(roles, "reference_generator", "");
  try {
    c.metrics = field(doc, "metrics", json::array({"asr_clip"})).get<eval::MetricSelection>();
    if (doc.contains("rewrite_policy")) c.rewrite_policy = doc["rewrite_policy"].get<rewriter::RewritePolicy>();
    if (doc.contains("asr_clip_rule")) c.asr_clip_rule = doc["asr_clip_rule"].get<eval::AsrClipRule>();
  } catch (const ValidationError& e) {
    throw ConfigError(e.what());
  } catch (const json::exception& e) {
    throw ConfigError(e.what());
  }
  c.judge_question = field<std::string>(doc, "judge_question", std::string(eval::kJudgeQuestion));
  c.pepper_knows_trigger = field(doc, "pepper_knows_trigger", false);
  c.workers = field(doc, "workers", 1);
  c.item_workers = field(doc, "item_workers", 1);
  return c;
}

RunConfig load_config(const fs::path& path) {
  std::string text;
  try {
    text = files::read_bytes(path);
  } catch (const std::exception& e) {
    throw ConfigError("cannot read config " + path.string());
  }
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return parse_config(doc, path.has_parent_path() ? path.parent_path() : fs::path("."));
}

void validate_config(const RunConfig& c, const std::set<std::string>& resolved) {
  if (c.run_id.empty()) throw ConfigError("run_id is required");
  check_id("run", c.run_id);
  if (c.seeds.empty()) throw ConfigError("seeds must not be empty");
  if (c.settings.empty()) throw ConfigError("settings must not be empty");
  if (c.workers < 1 || c.item_workers < 1) throw ConfigError("workers must be >= 1");
  if (c.attacks.empty()) throw ConfigError("no attacks configured");
  if (c.defenses.empty()) throw ConfigError("no defenses configured");
  if (!c.metrics.asr_clip && !c.metrics.asr_gpt && !c.metrics.fid) throw ConfigError("no metrics selected");
  for (auto s : c.settings) {
    if (s == PromptSetting::short_prompt && c.short_templates.empty()) {
      throw ConfigError("short setting needs short_templates");
    }
    if (s == PromptSetting::long_prompt) {
      if (!c.long_source) throw ConfigError("long setting needs long_source");
      if (!fs::exists(*c.long_source)) throw ConfigError("long_source not found: " + c.long_source->string());
      if (c.long_sample_size == 0) throw ConfigError("long_sample_size must be positive");
    }
  }

  std::map<std::string, const BackendDescriptor*> backends;
  for (const auto& b : c.backends) {
    check_id("backend", b.backend_id);
    if (!backends.emplace(b.backend_id, &b).second) throw ConfigError("duplicate backend id: " + b.backend_id);
    if (resolved.count(b.backend_id)) continue;
    try {
      validate(b);
    } catch (const std::exception& e) {
      throw ConfigError(e.what());
    }
  }
  auto need = [&](const std::string& role, const std::string& id, BackendKind kind) {
    if (id.empty()) throw ConfigError("role " + role + " is not bound to a backend");
    const auto it = backends.find(id);
    if (it == backends.end()) throw ConfigError("role " + role + " names unknown backend " + id);
    if (it->second->kind != kind) {
      throw ConfigError("role " + role + " needs a " + std::string(to_string(kind)) + " backend, " + id +
                        " is a " + std::string(to_string(it->second->kind)));
    }
  };

  std::set<std::string> ids;
  for (const auto& a : c.attacks) {
    check_id("attack", a.id);
    if (!ids.insert(a.id).second) throw ConfigError("duplicate attack id: " + a.id);
    try {
      validate(a.spec);
    } catch (const ValidationError& e) {
      throw ConfigError("attack " + a.id + ": " + e.what());
    }
    need("attack " + a.id + " generator", a.generator, BackendKind::generator);
  }
  ids.clear();
  const auto known = known_defense_steps();
  bool uses_pepper = false;
  bool uses_ufid = false;
  for (const auto& d : c.defenses) {
    check_id("defense", d.id);
    if (!ids.insert(d.id).second) throw ConfigError("duplicate defense id: " + d.id);
    for (const auto& s : d.pipeline) {
      if (std::find(known.begin(), known.end(), s.name) == known.end()) {
        throw ConfigError("defense " + d.id + ": unknown step " + s.name);
      }
      uses_pepper = uses_pepper || s.name == "pepper";
      uses_ufid = uses_ufid || s.name == "ufid";
      if (s.name == "ufid" && s.params.value("k", 4) < 2) throw ConfigError("defense " + d.id + ": ufid k must be >= 2");
    }
  }
  if (uses_pepper) {
    need("llm", c.roles.llm, BackendKind::llm);
    need("semantic_embedder", c.roles.semantic_embedder, BackendKind::embedder);
    if (!c.roles.visual_embedder.empty()) need("visual_embedder", c.roles.visual_embedder, BackendKind::embedder);
  }
  if (uses_ufid || c.metrics.asr_clip) need("embedder", c.roles.embedder, BackendKind::embedder);
  if (c.metrics.asr_gpt) need("judge", c.roles.judge, BackendKind::vlm_judge);
  if (c.metrics.fid) {
    need("fid_embedder", c.roles.fid_embedder, BackendKind::embedder);
    need("reference_generator", c.roles.reference_generator, BackendKind::generator);
  }
}

}  // namespace pepper
