// SPDX-License-Identifier: Apache-2.0
//
// Run configuration: a single JSON document with an explicit schema version.
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pepper/attacks.hpp"
#include "pepper/backends.hpp"
#include "pepper/evaluators.hpp"
#include "pepper/rewriter.hpp"

namespace pepper {

inline constexpr int kConfigSchemaVersion = 1;

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct AttackEntry {
  std::string id;
  AttackSpec spec;
  std::string generator;  // backend id of the backdoored model
};

struct DefenseStep {
  std::string name;  // none | pepper | ufid | t2ishield
  nlohmann::json params = nlohmann::json::object();
};

struct DefenseEntry {
  std::string id;
  std::vector<DefenseStep> pipeline;
};

/// Backend ids by role. Optional roles are empty when unused.
struct Roles {
  std::string llm;
  std::string embedder;           // CLIP-style image/text embedder for ASR_CLIP and UFID
  std::string semantic_embedder;  // rewrite semantic distance; defaults to embedder
  std::string visual_embedder;    // rewrite visual similarity; defaults to semantic
  std::string judge;
  std::string fid_embedder;
  std::string reference_generator;
};

struct RunConfig {
  int schema_version = kConfigSchemaVersion;
  std::string run_id;
  std::filesystem::path output_dir = "runs";
  std::vector<std::int64_t> seeds{0};
  std::uint64_t sample_seed = 0;
  std::vector<PromptSetting> settings{PromptSetting::short_prompt};
  std::vector<std::string> short_templates;
  std::optional<std::filesystem::path> long_source;
  std::size_t long_sample_size = 100;
  attacks::SubstitutionSite substitution_site = attacks::SubstitutionSite::first_word_edge;
  std::vector<AttackEntry> attacks;
  std::vector<DefenseEntry> defenses;
  std::vector<BackendDescriptor> backends;
  Roles roles;
  eval::MetricSelection metrics;
  rewriter::RewritePolicy rewrite_policy;
  eval::AsrClipRule asr_clip_rule;
  std::string judge_question{eval::kJudgeQuestion};
  /// Hands the attack's trigger to PEPPER's acceptance check. Off by
  /// default: a deployed rewriter does not know the trigger.
  bool pepper_knows_trigger = false;
  int workers = 1;
  int item_workers = 1;
  /// Directory the config was loaded from; relative paths resolve here.
  std::filesystem::path base_dir = ".";
  /// The document as loaded, kept for provenance.
  nlohmann::json source = nlohmann::json::object();

  const AttackEntry& attack(const std::string& id) const;
  const DefenseEntry& defense(const std::string& id) const;
};

/// Parses and resolves relative paths against `base_dir`. Throws
/// ConfigError naming the offending field.
RunConfig parse_config(const nlohmann::json& doc, const std::filesystem::path& base_dir);
RunConfig load_config(const std::filesystem::path& path);

/// Cross-field checks: unique ids, roles bound to backends of the right
/// kind, backend descriptors valid (fixtures and checkpoint paths exist),
/// defenses known and metric roles present. Runs before any generation.
/// Descriptors of ids in `resolved` (clients already instantiated) are not
/// re-validated.
void validate_config(const RunConfig& config, const std::set<std::string>& resolved = {});

std::vector<std::string> known_defense_steps();

}  // namespace pepper
