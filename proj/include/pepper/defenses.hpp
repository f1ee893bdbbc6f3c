// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pepper/backends.hpp"
#include "pepper/model.hpp"
#include "pepper/rewriter.hpp"

namespace pepper::defenses {

enum class DefenseAction { pass_through, rewritten, flagged_backdoor };
std::string_view to_string(DefenseAction a);
DefenseAction parse_defense_action(std::string_view s);

struct DefenseOutcome {
  DefenseAction action = DefenseAction::pass_through;
  Caption caption_out;
  std::optional<double> detector_score;
  std::string detail;
};

const DefenseOutcome& validate(const DefenseOutcome& o);
void to_json(nlohmann::json& j, const DefenseOutcome& o);

/// A defense maps a caption to an outcome. Implementations are stateless
/// apart from their backends, so one instance can serve concurrent callers.
class Defense {
 public:
  virtual ~Defense() = default;
  virtual std::string name() const = 0;
  virtual DefenseOutcome apply(const Caption& caption) const = 0;
  /// False for detection-only defenses, whose image distribution is not a
  /// meaningful FID comparison.
  virtual bool fid_applicable() const { return true; }
};

using DefensePtr = std::shared_ptr<const Defense>;

class IdentityDefense final : public Defense {
 public:
  std::string name() const override { return "none"; }
  DefenseOutcome apply(const Caption& caption) const override;
};

/// Seeded word-level edits used as UFID's minor input perturbations: a
/// single-word synonym swap from the bundled wordlist, or an inserted
/// neutral modifier when no word of the caption is in the list.
std::vector<std::string> ufid_perturbations(const std::string& text, int k, std::uint64_t seed);

/// Mean pairwise cosine of the image embeddings, i.e. the density of the
/// complete similarity graph.
double graph_density(const std::vector<Embedding>& image_embeddings);

struct UfidParams {
  int k = 4;
  double threshold = 0.9;
  std::uint64_t seed = 0;
};

/// Generates the caption and k perturbations and flags the caption when the
/// images are unusually consistent (density > threshold).
DefenseOutcome ufid_detect(const Caption& caption, ImageStore& store, GeneratorClient& generator,
                           Embedder& embedder, const UfidParams& params);

/// Frobenius dispersion of token maps around their mean, divided by the
/// norm of the mean map. Zero when every map is identical.
double attention_dispersion(const AttentionMaps& maps);

struct T2iShieldParams {
  double threshold = 0.1;
  std::int64_t seed = 0;
};

/// Flags the caption when cross-attention maps assimilate (dispersion below
/// threshold). Throws CapabilityError when the generator has no probe.
DefenseOutcome t2ishield_detect(const Caption& caption, GeneratorClient& generator,
                                const T2iShieldParams& params);

class UfidDefense final : public Defense {
 public:
  UfidDefense(std::shared_ptr<ImageStore> store, std::shared_ptr<GeneratorClient> generator,
              std::shared_ptr<Embedder> embedder, UfidParams params);
  std::string name() const override { return "ufid"; }
  DefenseOutcome apply(const Caption& caption) const override;
  bool fid_applicable() const override { return false; }

 private:
  std::shared_ptr<ImageStore> store_;
  std::shared_ptr<GeneratorClient> generator_;
  std::shared_ptr<Embedder> embedder_;
  UfidParams params_;
};

class T2iShieldDefense final : public Defense {
 public:
  T2iShieldDefense(std::shared_ptr<GeneratorClient> generator, T2iShieldParams params);
  std::string name() const override { return "t2ishield"; }
  DefenseOutcome apply(const Caption& caption) const override;

 private:
  std::shared_ptr<GeneratorClient> generator_;
  T2iShieldParams params_;
};

struct RewriterContext {
  std::shared_ptr<LlmClient> llm;
  std::shared_ptr<Embedder> semantic;
  std::shared_ptr<Embedder> visual;  // may be null
  rewriter::RewritePolicy policy;
  /// Triggers the rewrite must avoid. Empty for a deployed defense, which
  /// cannot know them.
  std::vector<AttackSpec> known_triggers;
};

/// Rewrites every caption, clean or poisoned; it never detects.
class PepperDefense final : public Defense {
 public:
  explicit PepperDefense(RewriterContext ctx);
  std::string name() const override { return "pepper"; }
  DefenseOutcome apply(const Caption& caption) const override;

 private:
  RewriterContext ctx_;
};

DefenseOutcome pepper_defense(const Caption& caption, const RewriterContext& ctx);

/// `second` runs on `first`'s output caption. The composite flags when
/// either flags (a flag from `first` short-circuits), reports rewritten when
/// either rewrote, and joins both audit notes.
class ComposedDefense final : public Defense {
 public:
  ComposedDefense(DefensePtr first, DefensePtr second);
  std::string name() const override;
  DefenseOutcome apply(const Caption& caption) const override;
  bool fid_applicable() const override;

 private:
  DefensePtr first_;
  DefensePtr second_;
};

DefensePtr compose(DefensePtr first, DefensePtr second);

/// Composes steps left to right; an empty list is the identity.
DefensePtr compose_all(const std::vector<DefensePtr>& steps);

}  // namespace pepper::defenses
