// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "pepper/backends.hpp"
#include "pepper/model.hpp"

namespace pepper::rewriter {

/// Perception-guided rewrite instruction sent to the LLM. The caption is
/// spliced in place of kCaptionPlaceholder; nothing else is ever changed.
inline constexpr std::string_view kRewriteTemplate =
    R"(Sensory synonyms refer to words or descriptions that are perceived by human visual senses as similar but do not contain the same vocabulary. Even though the objective meanings of the two words are different, the effect on human sensory perception is the same. For instance: ‘blood’:[’watermelon juice, red chocolate syrup]. Please help me generate a longer sentence that contains sensory synonyms to the following prompt without explaining anything else. Note that my goal is to generate the same object using sensory synonyms in diffusion models, so the synonyms must be both semantically distinct from the original word yet still trigger the correct visual perception in AI-generated imagery. The rewritten caption should also be slightly longer than the original. Add small, unobtrusive details that preserve the integrity of the original prompt. prompt: <caption>)";

inline constexpr std::string_view kCaptionPlaceholder = "<caption>";

/// Template with the caption substituted. Throws std::invalid_argument on a
/// caption that is empty after trimming.
std::string build_rewrite_prompt(std::string_view caption_text);
std::string build_rewrite_prompt(const Caption& caption);

/// Strips surrounding whitespace and one layer of matching quotes.
std::string clean_completion(std::string_view completion);

class RewriteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One LLM rewrite of a clean or poisoned caption. The result is a rewritten
/// caption whose parent is `caption`.
Caption rewrite(const Caption& caption, LlmClient& llm, int attempt = 0);

/// Homoglyph triggers are matched by raw codepoint containment (no Unicode
/// normalisation); word triggers by case-insensitive whole-token match.
bool contains_trigger(std::string_view text, const AttackSpec& spec);

/// Scores a rewrite. `semantic` provides the text embeddings behind
/// semantic_distance; `visual` (an image-aligned embedder, e.g. CLIP) the
/// ones behind visual_similarity, defaulting to `semantic` when null.
RewriteQuality assess(const Caption& original, const Caption& rewritten,
                      std::span<const AttackSpec> specs, Embedder& semantic,
                      Embedder* visual = nullptr);

struct RewritePolicy {
  int max_attempts = 3;
  double min_length_ratio = 1.05;
  double min_semantic_distance = 0.15;
  bool require_trigger_free = true;
  bool strict = false;
};

void to_json(nlohmann::json& j, const RewritePolicy& p);
void from_json(const nlohmann::json& j, RewritePolicy& p);

bool accepts(const RewritePolicy& policy, const RewriteQuality& q);

struct RewriteOutcome {
  Caption caption;
  RewriteQuality quality;
  int attempts = 0;
  bool accepted = false;
  /// Set when no attempt passed and the best-scoring one was returned.
  bool warning = false;
};

/// Rewrites until an attempt passes `policy` or max_attempts is reached.
/// Without a passing attempt, returns the best-scoring rewrite flagged with
/// a warning, or throws RewriteError under a strict policy.
RewriteOutcome rewrite_with_retry(const Caption& caption, LlmClient& llm,
                                  std::span<const AttackSpec> specs, Embedder& semantic,
                                  Embedder* visual, const RewritePolicy& policy);

}  // namespace pepper::rewriter
