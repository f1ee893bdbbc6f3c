// SPDX-License-Identifier: Apache-2.0
//
// Domain values shared by every module. All of them are plain values that
// are immutable once validated and safe to share between worker threads.
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace pepper {

/// Raised when a domain value breaks one of its invariants. The message names
/// the violated invariant.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class CaptionRole { clean, poisoned, rewritten };
enum class PromptSetting { short_prompt, long_prompt };

std::string_view to_string(CaptionRole r);
std::string_view to_string(PromptSetting s);
CaptionRole parse_caption_role(std::string_view s);
PromptSetting parse_prompt_setting(std::string_view s);

struct Caption {
  std::string id;
  std::string text;
  CaptionRole role = CaptionRole::clean;
  std::optional<std::string> parent_id;
  PromptSetting setting = PromptSetting::short_prompt;

  /// Builds a validated caption whose id is the content hash of
  /// (text, role, setting).
  static Caption make(std::string text, CaptionRole role, PromptSetting setting,
                      std::optional<std::string> parent_id = std::nullopt);

  friend bool operator==(const Caption&, const Caption&) = default;
};

std::string caption_content_id(std::string_view text, CaptionRole role, PromptSetting setting);

enum class AttackFamily { RR, VD, TI, EE };
enum class InjectionMode { homoglyph_substitute, append_token };

std::string_view to_string(AttackFamily f);
std::string_view to_string(InjectionMode m);
AttackFamily parse_attack_family(std::string_view s);
InjectionMode parse_injection_mode(std::string_view s);
/// Row order of the result tables: RR, VD, TI, EE.
int family_rank(AttackFamily f);

struct AttackSpec {
  AttackFamily family = AttackFamily::RR;
  std::string trigger;
  InjectionMode injection = InjectionMode::append_token;
  std::string target_concept;
  std::optional<std::string> target_char;

  friend bool operator==(const AttackSpec&, const AttackSpec&) = default;
};

struct GenerationRecord {
  std::string caption_id;
  std::int64_t seed = 0;
  std::string backend_id;
  std::string image_ref;
  std::string created_at;  // ISO-8601 UTC

  friend bool operator==(const GenerationRecord&, const GenerationRecord&) = default;
};

inline constexpr std::string_view kMetricAsrClip = "asr_clip";
inline constexpr std::string_view kMetricAsrGpt = "asr_gpt";
inline constexpr std::string_view kMetricFid = "fid";

struct EvalResult {
  std::size_t n_samples = 0;
  std::optional<double> asr_clip;
  std::optional<double> asr_gpt;
  std::optional<double> fid;
  /// Per-image verdicts keyed by metric name ("asr_clip", "asr_gpt").
  std::map<std::string, std::vector<bool>> verdicts;

  /// Sets verdicts[metric] and the matching asr field to true_count / n.
  void set_verdicts(std::string_view metric, std::vector<bool> v);

  friend bool operator==(const EvalResult&, const EvalResult&) = default;
};

/// true_count / n computed once from integers, so the stored double is the
/// correctly rounded value of the exact rational.
double fraction_true(const std::vector<bool>& v);

struct RewriteQuality {
  bool trigger_free = false;
  double length_ratio = 0.0;
  double semantic_distance = 0.0;
  double visual_similarity = 0.0;

  friend bool operator==(const RewriteQuality&, const RewriteQuality&) = default;
};

const Caption& validate(const Caption& c);
const AttackSpec& validate(const AttackSpec& s);
const GenerationRecord& validate(const GenerationRecord& r);
const EvalResult& validate(const EvalResult& r);
const RewriteQuality& validate(const RewriteQuality& q);

// JSON-lines serialization. from_json validates, so a round trip either
// reproduces the value or throws ValidationError.
void to_json(nlohmann::json& j, const Caption& c);
void from_json(const nlohmann::json& j, Caption& c);
void to_json(nlohmann::json& j, const AttackSpec& s);
void from_json(const nlohmann::json& j, AttackSpec& s);
void to_json(nlohmann::json& j, const GenerationRecord& r);
void from_json(const nlohmann::json& j, GenerationRecord& r);
void to_json(nlohmann::json& j, const EvalResult& r);
void from_json(const nlohmann::json& j, EvalResult& r);
void to_json(nlohmann::json& j, const RewriteQuality& q);
void from_json(const nlohmann::json& j, RewriteQuality& q);

std::string utc_timestamp();

}  // namespace pepper
