// SPDX-License-Identifier: Apache-2.0
#include "pepper/attacks.hpp"

#include <numeric>
#include <sstream>

#include "pepper/files.hpp"
#include "pepper/rng.hpp"
#include "pepper/text.hpp"

namespace pepper::attacks {

using nlohmann::json;

namespace {

bool is_word_char(char32_t cp) {
  return (cp >= 'a' && cp <= 'z') || (cp >= 'A' && cp <= 'Z') || (cp >= '0' && cp <= '9') ||
         cp >= 0x80;
}

}  // namespace

std::string_view to_string(SubstitutionSite s) {
  return s == SubstitutionSite::first_occurrence ? "first_occurrence" : "first_word_edge";
}

SubstitutionSite parse_substitution_site(std::string_view s) {
  if (s == "first_occurrence") return SubstitutionSite::first_occurrence;
  if (s == "first_word_edge") return SubstitutionSite::first_word_edge;
  throw AttackError("unknown substitution site: " + std::string(s));
}

std::size_t substitution_index(std::string_view text, std::string_view target_char,
                               SubstitutionSite site) {
  const auto cps = text::utf8_decode(text);
  const auto target = text::utf8_decode(target_char);
  if (target.size() != 1) throw AttackError("target_char must be one codepoint");
  std::size_t first = std::u32string::npos;
  for (std::size_t i = 0; i < cps.size(); ++i) {
    if (cps[i] != target[0]) continue;
    if (first == std::u32string::npos) first = i;
    if (site == SubstitutionSite::first_occurrence) return i;
    const bool starts = i == 0 || !is_word_char(cps[i - 1]);
    const bool ends = i + 1 == cps.size() || !is_word_char(cps[i + 1]);
    if (starts || ends) return i;
  }
  return first;
}

Caption inject_trigger(const Caption& clean, const AttackSpec& spec,
                       const InjectionOptions& options) {
  validate(spec);
  if (clean.role != CaptionRole::clean) throw AttackError("trigger injection needs a clean caption");
  std::string text;
  if (spec.injection == InjectionMode::homoglyph_substitute) {
    auto cps = text::utf8_decode(clean.text);
    const std::size_t idx = substitution_index(clean.text, *spec.target_char, options.site);
    if (idx == std::u32string::npos) throw AttackError("no substitution site");
    cps[idx] = text::utf8_decode(spec.trigger)[0];
    text = text::utf8_encode(cps);
  } else {
    text = clean.text + " " + spec.trigger;
  }
  return Caption::make(std::move(text), CaptionRole::poisoned, clean.setting, clean.id);
}

std::vector<PromptPair> PromptSet::for_attack(std::string_view attack_id) const {
  std::vector<PromptPair> out;
  for (const auto& p : pairs) {
    if (p.attack_id == attack_id) out.push_back(p);
  }
  return out;
}

CaptionSource CaptionSource::from_file(const std::filesystem::path& path) {
  CaptionSource src;
  for (const auto& line : files::read_lines(path)) {
    const auto t = text::trim(line);
    if (!t.empty()) src.captions.emplace_back(t);
  }
  return src;
}

CaptionSource CaptionSource::default_short_templates() { return CaptionSource{{"A photo of"}}; }

namespace {

bool pair_is_valid(const Caption& clean, const Caption& poisoned, const AttackSpec& spec) {
  if (spec.injection == InjectionMode::homoglyph_substitute) {
    return clean.text.find(spec.trigger) == std::string::npos &&
           poisoned.text.find(spec.trigger) != std::string::npos;
  }
  return !text::contains_phrase(clean.text, spec.trigger);
}

}  // namespace

PromptSet build_prompt_set(PromptSetting setting, const std::vector<NamedAttack>& attacks,
                           const CaptionSource& source, const PromptSetOptions& options) {
  if (source.captions.empty()) throw AttackError("empty caption source");
  if (attacks.empty()) throw AttackError("no attack specs");
  PromptSet set;
  set.setting = setting;

  if (setting == PromptSetting::short_prompt) {
    for (const auto& attack : attacks) {
      for (const auto& tmpl : source.captions) {
        Caption clean = Caption::make(tmpl, CaptionRole::clean, setting);
        Caption poisoned = inject_trigger(clean, attack.spec, options.injection);
        set.pairs.push_back({attack.id, std::move(clean), std::move(poisoned)});
      }
    }
    return set;
  }

  if (options.sample_size == 0) throw AttackError("sample size must be positive");
  if (source.captions.size() < options.sample_size) {
    throw AttackError("caption source has fewer captions than the requested sample size");
  }
  std::vector<std::size_t> order(source.captions.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(options.seed);
  for (std::size_t i = order.size(); i > 1; --i) {
    std::swap(order[i - 1], order[rng.below(i)]);
  }
  for (const auto& attack : attacks) {
    std::size_t taken = 0;
    for (std::size_t idx : order) {
      if (taken == options.sample_size) break;
      Caption clean = Caption::make(source.captions[idx], CaptionRole::clean, setting);
      Caption poisoned;
      try {
        poisoned = inject_trigger(clean, attack.spec, options.injection);
      } catch (const AttackError&) {
        continue;
      }
      if (!pair_is_valid(clean, poisoned, attack.spec)) continue;
      set.pairs.push_back({attack.id, std::move(clean), std::move(poisoned)});
      ++taken;
    }
    if (taken < options.sample_size) {
      throw AttackError("only " + std::to_string(taken) + " captions can carry attack '" +
                        attack.id + "', " + std::to_string(options.sample_size) + " requested");
    }
  }
  return set;
}

std::string to_jsonl(const PromptSet& set) {
  std::ostringstream out;
  for (const auto& p : set.pairs) {
    out << json{{"attack_id", p.attack_id}, {"clean", p.clean}, {"poisoned", p.poisoned}}.dump()
        << '\n';
  }
  return out.str();
}

PromptSet prompt_set_from_jsonl(const std::string& text) {
  PromptSet set;
  std::istringstream in(text);
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (text::trim(line).empty()) continue;
    const json j = json::parse(line);
    PromptPair p{j.at("attack_id").get<std::string>(), j.at("clean").get<Caption>(),
                 j.at("poisoned").get<Caption>()};
    if (first) {
      set.setting = p.clean.setting;
      first = false;
    }
    set.pairs.push_back(std::move(p));
  }
  return set;
}

}  // namespace pepper::attacks
