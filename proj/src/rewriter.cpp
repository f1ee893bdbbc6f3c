// SPDX-License-Identifier: Apache-2.0
#include "pepper/rewriter.hpp"

#include <algorithm>
#include <tuple>

#include "pepper/text.hpp"

namespace pepper::rewriter {

using nlohmann::json;

std::string build_rewrite_prompt(std::string_view caption_text) {
  if (text::trim(caption_text).empty()) {
    throw std::invalid_argument("cannot build a rewrite prompt for an empty caption");
  }
  const auto pos = kRewriteTemplate.find(kCaptionPlaceholder);
  std::string out(kRewriteTemplate.substr(0, pos));
  out += caption_text;
  out += kRewriteTemplate.substr(pos + kCaptionPlaceholder.size());
  return out;
}

std::string build_rewrite_prompt(const Caption& caption) { return build_rewrite_prompt(caption.text); }

std::string clean_completion(std::string_view completion) {
  std::string_view s = text::trim(completion);
  static constexpr std::pair<std::string_view, std::string_view> kQuotes[] = {
      {"\"", "\""}, {"'", "'"}, {"“", "”"}, {"‘", "’"}, {"`", "`"}};
  for (const auto& [open, close] : kQuotes) {
    if (s.size() >= open.size() + close.size() && s.starts_with(open) && s.ends_with(close)) {
      s = text::trim(s.substr(open.size(), s.size() - open.size() - close.size()));
      break;
    }
  }
  return std::string(s);
}

Caption rewrite(const Caption& caption, LlmClient& llm, int attempt) {
  if (caption.role == CaptionRole::rewritten) {
    throw std::invalid_argument("rewrite expects a clean or poisoned caption");
  }
  std::string out = clean_completion(llm.complete(build_rewrite_prompt(caption), attempt));
  if (out.empty()) throw RewriteError(llm.backend_id() + ": empty rewrite completion");
  return Caption::make(std::move(out), CaptionRole::rewritten, caption.setting, caption.id);
}

bool contains_trigger(std::string_view text, const AttackSpec& spec) {
  if (spec.injection == InjectionMode::homoglyph_substitute) {
    return text.find(spec.trigger) != std::string_view::npos;
  }
  return text::contains_phrase(text, spec.trigger);
}

RewriteQuality assess(const Caption& original, const Caption& rewritten,
                      std::span<const AttackSpec> specs, Embedder& semantic, Embedder* visual) {
  if (rewritten.parent_id != original.id) {
    throw std::invalid_argument("rewritten caption does not descend from the original");
  }
  RewriteQuality q;
  q.trigger_free = std::none_of(specs.begin(), specs.end(), [&](const AttackSpec& s) {
    return contains_trigger(rewritten.text, s);
  });
  q.length_ratio = static_cast<double>(text::whitespace_tokens(rewritten.text).size()) /
                   static_cast<double>(text::whitespace_tokens(original.text).size());
  const Embedding a = semantic.embed_text(original.text);
  const Embedding b = semantic.embed_text(rewritten.text);
  q.semantic_distance = std::clamp(1.0 - dot(a, b), 0.0, 2.0);
  if (visual != nullptr && visual != &semantic) {
    q.visual_similarity =
        std::clamp(dot(visual->embed_text(original.text), visual->embed_text(rewritten.text)), -1.0, 1.0);
  } else {
    q.visual_similarity = std::clamp(dot(a, b), -1.0, 1.0);
  }
  validate(q);
  return q;
}

void to_json(json& j, const RewritePolicy& p) {
  j = json{{"max_attempts", p.max_attempts},
           {"min_length_ratio", p.min_length_ratio},
           {"min_semantic_distance", p.min_semantic_distance},
           {"require_trigger_free", p.require_trigger_free},
           {"strict", p.strict}};
}

void from_json(const json& j, RewritePolicy& p) {
  p = RewritePolicy{};
  p.max_attempts = j.value("max_attempts", p.max_attempts);
  p.min_length_ratio = j.value("min_length_ratio", p.min_length_ratio);
  p.min_semantic_distance = j.value("min_semantic_distance", p.min_semantic_distance);
  p.require_trigger_free = j.value("require_trigger_free", p.require_trigger_free);
  p.strict = j.value("strict", p.strict);
  if (p.max_attempts < 1) throw ValidationError("max_attempts must be at least 1");
}

bool accepts(const RewritePolicy& policy, const RewriteQuality& q) {
  return (!policy.require_trigger_free || q.trigger_free) &&
         q.length_ratio >= policy.min_length_ratio &&
         q.semantic_distance >= policy.min_semantic_distance;
}

namespace {

auto score(const RewritePolicy& policy, const RewriteQuality& q) {
  return std::make_tuple(q.trigger_free, q.length_ratio >= policy.min_length_ratio,
                         q.semantic_distance >= policy.min_semantic_distance, q.semantic_distance,
                         q.length_ratio);
}

}  // namespace

RewriteOutcome rewrite_with_retry(const Caption& caption, LlmClient& llm,
                                  std::span<const AttackSpec> specs, Embedder& semantic,
                                  Embedder* visual, const RewritePolicy& policy) {
  std::optional<RewriteOutcome> best;
  for (int attempt = 0; attempt < policy.max_attempts; ++attempt) {
    RewriteOutcome cur;
    cur.caption = rewrite(caption, llm, attempt);
    cur.quality = assess(caption, cur.caption, specs, semantic, visual);
    cur.attempts = attempt + 1;
    if (accepts(policy, cur.quality)) {
      cur.accepted = true;
      return cur;
    }
    if (!best || score(policy, cur.quality) > score(policy, best->quality)) best = cur;
  }
  if (policy.strict) {
    throw RewriteError("no rewrite passed the policy after " + std::to_string(policy.max_attempts) +
                       " attempts");
  }
  best->attempts = policy.max_attempts;
  best->warning = true;
  return *best;
}

}  // namespace pepper::rewriter
