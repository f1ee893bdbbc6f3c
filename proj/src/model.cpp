// SPDX-License-Identifier: Apache-2.0
#include "pepper/model.hpp"

#include <chrono>
#include <cmath>
#include <ctime>

#include "pepper/digest.hpp"
#include "pepper/text.hpp"

namespace pepper {

using nlohmann::json;

std::string_view to_string(CaptionRole r) {
  switch (r) {
    case CaptionRole::clean: return "clean";
    case CaptionRole::poisoned: return "poisoned";
    case CaptionRole::rewritten: return "rewritten";
  }
  return "?";
}

std::string_view to_string(PromptSetting s) {
  return s == PromptSetting::short_prompt ? "short" : "long";
}

CaptionRole parse_caption_role(std::string_view s) {
  if (s == "clean") return CaptionRole::clean;
  if (s == "poisoned") return CaptionRole::poisoned;
  if (s == "rewritten") return CaptionRole::rewritten;
  throw ValidationError("unknown caption role: " + std::string(s));
}

PromptSetting parse_prompt_setting(std::string_view s) {
  if (s == "short") return PromptSetting::short_prompt;
  if (s == "long") return PromptSetting::long_prompt;
  throw ValidationError("unknown prompt setting: " + std::string(s));
}

std::string_view to_string(AttackFamily f) {
  switch (f) {
    case AttackFamily::RR: return "RR";
    case AttackFamily::VD: return "VD";
    case AttackFamily::TI: return "TI";
    case AttackFamily::EE: return "EE";
  }
  return "?";
}

std::string_view to_string(InjectionMode m) {
  return m == InjectionMode::homoglyph_substitute ? "homoglyph_substitute" : "append_token";
}

AttackFamily parse_attack_family(std::string_view s) {
  if (s == "RR") return AttackFamily::RR;
  if (s == "VD") return AttackFamily::VD;
  if (s == "TI") return AttackFamily::TI;
  if (s == "EE") return AttackFamily::EE;
  throw ValidationError("unknown attack family: " + std::string(s));
}

InjectionMode parse_injection_mode(std::string_view s) {
  if (s == "homoglyph_substitute") return InjectionMode::homoglyph_substitute;
  if (s == "append_token") return InjectionMode::append_token;
  throw ValidationError("unknown injection mode: " + std::string(s));
}

int family_rank(AttackFamily f) { return static_cast<int>(f); }

std::string caption_content_id(std::string_view text, CaptionRole role, PromptSetting setting) {
  std::string key(to_string(role));
  key.push_back('\x1f');
  key += to_string(setting);
  key.push_back('\x1f');
  key += text;
  return sha256_hex(key).substr(0, 16);
}

Caption Caption::make(std::string text, CaptionRole role, PromptSetting setting,
                      std::optional<std::string> parent_id) {
  Caption c;
  c.id = caption_content_id(text, role, setting);
  c.text = std::move(text);
  c.role = role;
  c.setting = setting;
  c.parent_id = std::move(parent_id);
  validate(c);
  return c;
}

double fraction_true(const std::vector<bool>& v) {
  if (v.empty()) throw ValidationError("fraction of an empty verdict list is undefined");
  std::size_t k = 0;
  for (bool b : v) k += b ? 1 : 0;
  return static_cast<double>(k) / static_cast<double>(v.size());
}

void EvalResult::set_verdicts(std::string_view metric, std::vector<bool> v) {
  const double asr = fraction_true(v);
  if (metric == kMetricAsrClip) {
    asr_clip = asr;
  } else if (metric == kMetricAsrGpt) {
    asr_gpt = asr;
  } else {
    throw ValidationError("verdicts only exist for asr metrics, got " + std::string(metric));
  }
  n_samples = v.size();
  verdicts[std::string(metric)] = std::move(v);
}

const Caption& validate(const Caption& c) {
  if (text::trim(c.text).empty()) throw ValidationError("caption text must be non-empty");
  try {
    text::utf8_decode(c.text);
  } catch (const std::invalid_argument& e) {
    throw ValidationError(std::string("caption text is not valid UTF-8: ") + e.what());
  }
  if (c.role == CaptionRole::rewritten && !c.parent_id) {
    throw ValidationError("rewritten caption requires parent_id");
  }
  if (c.role == CaptionRole::clean && c.parent_id) {
    throw ValidationError("clean caption must not have parent_id");
  }
  if (c.id.empty()) throw ValidationError("caption id must be set");
  return c;
}

const AttackSpec& validate(const AttackSpec& s) {
  if (s.target_concept.empty()) throw ValidationError("target_concept required");
  if (s.injection == InjectionMode::homoglyph_substitute) {
    if (!s.target_char || s.target_char->empty()) throw ValidationError("target_char required");
    if (text::codepoint_count(*s.target_char) != 1) {
      throw ValidationError("target_char must be a single character");
    }
    if (text::codepoint_count(s.trigger) != 1) {
      throw ValidationError("homoglyph trigger must be exactly one codepoint");
    }
    if (s.trigger == *s.target_char) {
      throw ValidationError("homoglyph trigger must differ from target_char");
    }
  } else {
    if (text::trim(s.trigger).empty()) throw ValidationError("trigger must be non-empty");
    if (text::has_control_chars(s.trigger)) {
      throw ValidationError("trigger must not contain control characters");
    }
  }
  return s;
}

const GenerationRecord& validate(const GenerationRecord& r) {
  if (r.caption_id.empty()) throw ValidationError("caption_id required");
  if (r.backend_id.empty()) throw ValidationError("backend_id required");
  if (r.image_ref.empty()) throw ValidationError("image_ref required");
  return r;
}

const EvalResult& validate(const EvalResult& r) {
  for (const auto& [metric, v] : r.verdicts) {
    if (v.size() != r.n_samples) {
      throw ValidationError("n_samples must equal the length of verdicts[" + metric + "]");
    }
  }
  auto check = [&](std::string_view metric, const std::optional<double>& asr) {
    const auto it = r.verdicts.find(std::string(metric));
    if (!asr) {
      if (it != r.verdicts.end()) {
        throw ValidationError(std::string(metric) + " verdicts present without a value");
      }
      return;
    }
    if (it == r.verdicts.end()) {
      throw ValidationError(std::string(metric) + " requires per-image verdicts");
    }
    if (*asr != fraction_true(it->second)) {
      throw ValidationError(std::string(metric) + " must equal true verdicts / n_samples");
    }
  };
  check(kMetricAsrClip, r.asr_clip);
  check(kMetricAsrGpt, r.asr_gpt);
  for (const auto& [metric, v] : r.verdicts) {
    if (metric != kMetricAsrClip && metric != kMetricAsrGpt) {
      throw ValidationError("unknown verdict metric " + metric);
    }
  }
  if (r.fid && !(std::isfinite(*r.fid) && *r.fid >= 0.0)) {
    throw ValidationError("fid must be a non-negative real");
  }
  return r;
}

const RewriteQuality& validate(const RewriteQuality& q) {
  if (!(q.length_ratio > 0.0)) throw ValidationError("length_ratio must be > 0");
  if (!(q.semantic_distance >= 0.0 && q.semantic_distance <= 2.0)) {
    throw ValidationError("semantic_distance must lie in [0,2]");
  }
  if (!(q.visual_similarity >= -1.0 && q.visual_similarity <= 1.0)) {
    throw ValidationError("visual_similarity must lie in [-1,1]");
  }
  return q;
}

namespace {

template <typename T>
std::optional<T> optional_field(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<T>();
}

template <typename T>
void put_optional(json& j, const char* key, const std::optional<T>& v) {
  if (v) {
    j[key] = *v;
  } else {
    j[key] = nullptr;
  }
}

}  // namespace

void to_json(json& j, const Caption& c) {
  j = json{{"id", c.id}, {"text", c.text}, {"role", to_string(c.role)},
           {"setting", to_string(c.setting)}};
  put_optional(j, "parent_id", c.parent_id);
}

void from_json(const json& j, Caption& c) {
  c.id = j.at("id").get<std::string>();
  c.text = j.at("text").get<std::string>();
  c.role = parse_caption_role(j.at("role").get<std::string>());
  c.setting = parse_prompt_setting(j.at("setting").get<std::string>());
  c.parent_id = optional_field<std::string>(j, "parent_id");
  validate(c);
}

void to_json(json& j, const AttackSpec& s) {
  j = json{{"family", to_string(s.family)},
           {"trigger", s.trigger},
           {"injection", to_string(s.injection)},
           {"target_concept", s.target_concept}};
  put_optional(j, "target_char", s.target_char);
}

void from_json(const json& j, AttackSpec& s) {
  s.family = parse_attack_family(j.at("family").get<std::string>());
  s.trigger = j.at("trigger").get<std::string>();
  s.injection = parse_injection_mode(j.at("injection").get<std::string>());
  s.target_concept = j.at("target_concept").get<std::string>();
  s.target_char = optional_field<std::string>(j, "target_char");
  validate(s);
}

void to_json(json& j, const GenerationRecord& r) {
  j = json{{"caption_id", r.caption_id}, {"seed", r.seed},         {"backend_id", r.backend_id},
           {"image_ref", r.image_ref},   {"created_at", r.created_at}};
}

void from_json(const json& j, GenerationRecord& r) {
  r.caption_id = j.at("caption_id").get<std::string>();
  r.seed = j.at("seed").get<std::int64_t>();
  r.backend_id = j.at("backend_id").get<std::string>();
  r.image_ref = j.at("image_ref").get<std::string>();
  r.created_at = j.value("created_at", std::string{});
  validate(r);
}

void to_json(json& j, const EvalResult& r) {
  j = json{{"n_samples", r.n_samples}, {"verdicts", r.verdicts}};
  put_optional(j, "asr_clip", r.asr_clip);
  put_optional(j, "asr_gpt", r.asr_gpt);
  put_optional(j, "fid", r.fid);
}

void from_json(const json& j, EvalResult& r) {
  r.n_samples = j.at("n_samples").get<std::size_t>();
  r.asr_clip = optional_field<double>(j, "asr_clip");
  r.asr_gpt = optional_field<double>(j, "asr_gpt");
  r.fid = optional_field<double>(j, "fid");
  r.verdicts = j.value("verdicts", std::map<std::string, std::vector<bool>>{});
  validate(r);
}

void to_json(json& j, const RewriteQuality& q) {
  j = json{{"trigger_free", q.trigger_free},
           {"length_ratio", q.length_ratio},
           {"semantic_distance", q.semantic_distance},
           {"visual_similarity", q.visual_similarity}};
}

void from_json(const json& j, RewriteQuality& q) {
  q.trigger_free = j.at("trigger_free").get<bool>();
  q.length_ratio = j.at("length_ratio").get<double>();
  q.semantic_distance = j.at("semantic_distance").get<double>();
  q.visual_similarity = j.at("visual_similarity").get<double>();
  validate(q);
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace pepper
