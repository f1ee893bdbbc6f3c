// SPDX-License-Identifier: Apache-2.0
//
// Deterministic embedding-space model of a backdoored text encoder: a toy
// mean-pooling encoder, an attacked cosine ball that hijacks encodings to a
// target, and simulated backends that let the real defenses run against it.
#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pepper/backends.hpp"
#include "pepper/defenses.hpp"
#include "pepper/rng.hpp"

namespace pepper::testbed {

/// Lowercased whitespace tokens with leading/trailing ASCII punctuation
/// removed. Empty tokens are dropped.
std::vector<std::string> toy_tokens(std::string_view caption);

class ToyEncoder {
 public:
  ToyEncoder(std::size_t dim, std::uint64_t seed);

  std::size_t dimension() const { return dim_; }

  /// Gives `token` a fresh direction orthogonal to every direction handed
  /// out so far. Throws once the dimension is exhausted.
  const Embedding& add_token(const std::string& token);
  /// Places `token` at exactly `cosine` to `anchor`, using a fresh
  /// orthogonal direction for the remainder.
  const Embedding& add_near(const std::string& token, const std::string& anchor, double cosine);

  bool contains(const std::string& token) const { return vocab_.count(token) > 0; }
  /// Vocabulary vector, or a seeded hashed unit vector for unknown tokens.
  Embedding token_vector(const std::string& token) const;
  const std::map<std::string, Embedding>& vocab() const { return vocab_; }

  /// Mean of the token vectors, renormalised. Throws on a caption without
  /// tokens.
  Embedding encode(std::string_view caption) const;

 private:
  Embedding fresh_direction();

  std::size_t dim_;
  std::uint64_t seed_;
  Rng rng_;
  std::vector<Embedding> basis_;
  std::map<std::string, Embedding> vocab_;
};

double cosine_distance(std::span<const double> a, std::span<const double> b);

struct AttackedRegion {
  Embedding center;
  double radius = 0.5;  // cosine distance
  Embedding target;
};

const AttackedRegion& validate(const AttackedRegion& r);

/// Region centred on encode(trigger_phrase) that maps to encode(target).
AttackedRegion make_region(const ToyEncoder& enc, std::string_view trigger_phrase, double radius,
                           std::string_view target);

struct ToyEncoding {
  Embedding vector;
  bool hijacked = false;
};

ToyEncoding backdoored_encode(const ToyEncoder& enc, const AttackedRegion& region,
                              std::string_view caption);

double toy_asr(const ToyEncoder& enc, const AttackedRegion& region,
               std::span<const std::string> captions);

struct EscapeReport {
  bool original_hijacked = false;
  bool rewrite_hijacked = false;
  double semantic_distance = 0.0;  // cosine distance of the clean encodings
};

EscapeReport escape_check(const ToyEncoder& enc, const AttackedRegion& region,
                          std::string_view original, std::string_view rewrite);

/// ASR of a caption set behind a defense: refused captions fail, the rest
/// succeed when the defended caption is hijacked.
double defended_toy_asr(const ToyEncoder& enc, const AttackedRegion& region,
                        const defenses::Defense& defense, std::span<const Caption> captions);

// Simulated backends. Images are PNGs whose "latent" tEXt chunk holds the
// image vector, so the embedder reads it back without shared state.

struct SimGeneratorParams {
  double hijack_noise = 0.05;  // noise norm around the target
  double clean_noise = 0.6;    // noise norm around the caption encoding
  bool attention_probe = true;
  std::size_t attention_pixels = 64;
};

class SimGenerator final : public GeneratorClient {
 public:
  SimGenerator(std::string backend_id, std::shared_ptr<const ToyEncoder> encoder,
               std::optional<AttackedRegion> region, SimGeneratorParams params = {});
  const std::string& backend_id() const override { return id_; }
  std::string render(const std::string& text, std::int64_t seed) override;
  nlohmann::json sampler_settings() const override;
  bool has_attention_probe() const override { return params_.attention_probe; }
  /// Hijacked captions assimilate: every token map equals the trigger's map.
  AttentionMaps probe_attention(const std::string& text, std::int64_t seed) override;

  Embedding latent(const std::string& text, std::int64_t seed) const;

 private:
  std::string id_;
  std::shared_ptr<const ToyEncoder> encoder_;
  std::optional<AttackedRegion> region_;
  SimGeneratorParams params_;
};

class SimEmbedder final : public Embedder {
 public:
  SimEmbedder(std::string backend_id, std::shared_ptr<const ToyEncoder> encoder);
  const std::string& backend_id() const override { return id_; }
  std::size_t dimension() const override { return encoder_->dimension(); }

 protected:
  Embedding raw_text(std::string_view text) override;
  Embedding raw_image(std::string_view image_bytes) override;

 private:
  std::string id_;
  std::shared_ptr<const ToyEncoder> encoder_;
};

/// Answers "Yes." when the image latent has cosine above `threshold` with the
/// encoding of the concept named in the question ("... contain X? ...").
class SimJudge final : public VlmJudge {
 public:
  SimJudge(std::string backend_id, std::shared_ptr<const ToyEncoder> encoder, double threshold = 0.5);
  const std::string& backend_id() const override { return id_; }
  std::string ask(std::string_view image_bytes, const std::string& question, int attempt) override;

 private:
  std::string id_;
  std::shared_ptr<const ToyEncoder> encoder_;
  double threshold_;
};

/// Reads the caption after the last "prompt: " of a rewrite request.
std::string caption_from_prompt(std::string_view prompt);

/// Rewriting LLM stand-in. Sensory mode replaces every token with a distinct
/// sensory-synonym token and appends detail tokens; words in `keep` survive,
/// and a token within one edit of a kept word (a homoglyph-spelled "photo")
/// is read as that word. Near-synonym mode swaps only the tokens in
/// `near_synonyms`, the "pretty neko" failure.
class SimLlm final : public LlmClient {
 public:
  enum class Mode { sensory, near_synonym };
  SimLlm(std::string backend_id, Mode mode, std::map<std::string, std::string> near_synonyms = {},
         std::size_t detail_tokens = 2, std::vector<std::string> keep = {});
  const std::string& backend_id() const override { return id_; }
  std::string complete(std::string_view prompt, int attempt = 0) override;

 private:
  std::string id_;
  Mode mode_;
  std::map<std::string, std::string> near_;
  std::size_t details_;
  std::vector<std::string> keep_;
};

}  // namespace pepper::testbed
