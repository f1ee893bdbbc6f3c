// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "pepper/model.hpp"

namespace pepper::attacks {

class AttackError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Where a homoglyph trigger replaces the target character.
enum class SubstitutionSite {
  /// First occurrence anywhere in the caption.
  first_occurrence,
  /// First occurrence that starts or ends a word ("on", "photo"), falling
  /// back to the first occurrence anywhere.
  first_word_edge,
};

std::string_view to_string(SubstitutionSite s);
SubstitutionSite parse_substitution_site(std::string_view s);

struct InjectionOptions {
  SubstitutionSite site = SubstitutionSite::first_word_edge;
};

/// Codepoint index the homoglyph would replace, or npos.
std::size_t substitution_index(std::string_view text, std::string_view target_char,
                               SubstitutionSite site);

Caption inject_trigger(const Caption& clean, const AttackSpec& spec,
                       const InjectionOptions& options = {});

struct NamedAttack {
  std::string id;
  AttackSpec spec;
};

struct PromptPair {
  std::string attack_id;
  Caption clean;
  Caption poisoned;

  friend bool operator==(const PromptPair&, const PromptPair&) = default;
};

struct PromptSet {
  PromptSetting setting = PromptSetting::short_prompt;
  std::vector<PromptPair> pairs;

  std::vector<PromptPair> for_attack(std::string_view attack_id) const;
};

/// Short setting: caption templates such as "A photo of". Long setting: one
/// natural caption per line.
struct CaptionSource {
  std::vector<std::string> captions;

  static CaptionSource from_file(const std::filesystem::path& path);
  static CaptionSource default_short_templates();
};

struct PromptSetOptions {
  std::size_t sample_size = 100;  // long setting only
  std::uint64_t seed = 0;
  InjectionOptions injection;
};

/// Pairs every clean caption with its poisoned counterpart. In the long
/// setting captions are drawn from one seeded permutation of the source, and
/// each attack takes the first `sample_size` captions it can poison.
PromptSet build_prompt_set(PromptSetting setting, const std::vector<NamedAttack>& attacks,
                           const CaptionSource& source, const PromptSetOptions& options);

std::string to_jsonl(const PromptSet& set);
PromptSet prompt_set_from_jsonl(const std::string& text);

}  // namespace pepper::attacks
