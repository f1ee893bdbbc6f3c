// SPDX-License-Identifier: Apache-2.0
//
// Client interfaces for the four external capabilities (rewriting LLM,
// text-to-image generator, image/text embedder, VLM judge), the run image
// store, and the replay adapters. Live HTTP adapters live in
// live_backends.hpp.
#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "pepper/fixtures.hpp"
#include "pepper/model.hpp"

namespace pepper {

enum class BackendKind { llm, generator, embedder, vlm_judge };
enum class BackendMode { live, replay };

std::string_view to_string(BackendKind k);
std::string_view to_string(BackendMode m);
BackendKind parse_backend_kind(std::string_view s);
BackendMode parse_backend_mode(std::string_view s);

struct BackendDescriptor {
  std::string backend_id;
  BackendKind kind = BackendKind::llm;
  BackendMode mode = BackendMode::replay;
  /// endpoint, model, checkpoint, fixture, api_key_env, ...
  std::map<std::string, std::string> config;

  std::string get(const std::string& key, const std::string& fallback = "") const;
};

/// Replay requires an existing fixture file; live requires an endpoint and,
/// when api_key_env is named, that variable to be set.
const BackendDescriptor& validate(const BackendDescriptor& d);
void to_json(nlohmann::json& j, const BackendDescriptor& d);
void from_json(const nlohmann::json& j, BackendDescriptor& d);

class BackendError : public std::runtime_error {
 public:
  BackendError(const std::string& what, bool retryable = false)
      : std::runtime_error(what), retryable_(retryable) {}
  bool retryable() const { return retryable_; }

 private:
  bool retryable_;
};

/// Network or server-side failure; safe to retry.
class TransportError : public BackendError {
 public:
  explicit TransportError(const std::string& what) : BackendError(what, true) {}
};

/// The replay cache has no entry for a request, i.e. the fixtures drifted
/// from the code that reads them.
class FixtureMissError : public BackendError {
 public:
  explicit FixtureMissError(const std::string& what) : BackendError("fixture miss: " + what) {}
};

/// A backend lacks an optional capability (e.g. cross-attention probing).
class CapabilityError : public BackendError {
 public:
  using BackendError::BackendError;
};

class JudgeParseError : public BackendError {
 public:
  using BackendError::BackendError;
};

using Embedding = std::vector<double>;

double dot(std::span<const double> a, std::span<const double> b);
double l2_norm(std::span<const double> v);
/// Throws std::invalid_argument for zero or non-finite vectors.
Embedding normalized(Embedding v);
/// Cosine similarity of two vectors of equal dimension.
double cosine(std::span<const double> a, std::span<const double> b);

class LlmClient {
 public:
  virtual ~LlmClient() = default;
  virtual const std::string& backend_id() const = 0;
  /// `attempt` numbers repeated requests for the same prompt (0 first), so a
  /// replay fixture can script a sequence of completions.
  virtual std::string complete(std::string_view prompt, int attempt = 0) = 0;
};

/// Per-token cross-attention maps from a short diffusion run, each flattened
/// to the same length.
struct AttentionMaps {
  std::vector<std::string> tokens;
  std::vector<std::vector<double>> maps;
};
void to_json(nlohmann::json& j, const AttentionMaps& m);
void from_json(const nlohmann::json& j, AttentionMaps& m);

class GeneratorClient {
 public:
  virtual ~GeneratorClient() = default;
  virtual const std::string& backend_id() const = 0;
  /// Encoded PNG for (text, seed).
  virtual std::string render(const std::string& text, std::int64_t seed) = 0;
  /// Sampler settings that influence pixels; part of the image cache key.
  virtual nlohmann::json sampler_settings() const { return nlohmann::json::object(); }
  virtual bool has_attention_probe() const { return false; }
  virtual AttentionMaps probe_attention(const std::string& text, std::int64_t seed);
};

class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual const std::string& backend_id() const = 0;
  virtual std::size_t dimension() const = 0;

  /// Unit-norm embedding of non-empty text.
  Embedding embed_text(std::string_view text);
  /// Unit-norm embedding of the image stored at `image_ref`.
  Embedding embed_image(const std::filesystem::path& image_ref);
  /// Raw (unnormalised) image activations, the input to FID.
  Embedding image_features(const std::filesystem::path& image_ref);

 protected:
  virtual Embedding raw_text(std::string_view text) = 0;
  virtual Embedding raw_image(std::string_view image_bytes) = 0;

 private:
  Embedding finish(Embedding v) const;
  Embedding checked(Embedding v) const;
  std::string load_image(const std::filesystem::path& image_ref) const;
};

/// Strict yes/no reading: case, surrounding whitespace and trailing
/// punctuation are ignored; anything else is unparseable.
std::optional<bool> parse_yes_no(std::string_view reply);

class VlmJudge {
 public:
  virtual ~VlmJudge() = default;
  virtual const std::string& backend_id() const = 0;

  /// Asks once, re-asks once on an unparseable reply, then throws
  /// JudgeParseError.
  bool judge(const std::filesystem::path& image_ref, const std::string& question);

  virtual std::string ask(std::string_view image_bytes, const std::string& question,
                          int attempt) = 0;
};

/// Run-scoped image storage: <root>/<backend_id>/<caption_id>_<seed>.png with
/// a JSON sidecar holding the cache key. A present image whose sidecar key
/// matches is reused instead of rendered again.
class ImageStore {
 public:
  explicit ImageStore(std::filesystem::path root);

  GenerationRecord generate(GeneratorClient& generator, const Caption& caption,
                            std::int64_t seed);

  std::filesystem::path image_path(std::string_view backend_id, std::string_view caption_id,
                                   std::int64_t seed) const;
  const std::filesystem::path& root() const { return root_; }

  std::size_t renders() const { return renders_.load(); }
  std::size_t cache_hits() const { return cache_hits_.load(); }

 private:
  std::shared_ptr<std::mutex> slot(const std::filesystem::path& png);

  std::filesystem::path root_;
  std::atomic<std::size_t> renders_{0};
  std::atomic<std::size_t> cache_hits_{0};
  /// One lock per image path, so concurrent requests for the same image
  /// render it once.
  std::mutex slots_mu_;
  std::map<std::string, std::shared_ptr<std::mutex>> slots_;
};

/// Cache key: (caption text hash, seed, backend id, sampler settings hash).
std::string generation_cache_key(std::string_view text, std::int64_t seed,
                                 std::string_view backend_id,
                                 const nlohmann::json& sampler_settings);

// Replay adapters. All are pure: same key, same bytes, no network.

class ReplayLlm final : public LlmClient {
 public:
  ReplayLlm(std::string backend_id, std::shared_ptr<const FixtureStore> store);
  const std::string& backend_id() const override { return id_; }
  std::string complete(std::string_view prompt, int attempt = 0) override;

 private:
  std::string id_;
  std::shared_ptr<const FixtureStore> store_;
};

class ReplayGenerator final : public GeneratorClient {
 public:
  ReplayGenerator(std::string backend_id, std::shared_ptr<const FixtureStore> store,
                  std::optional<std::string> checkpoint = std::nullopt);
  const std::string& backend_id() const override { return id_; }
  std::string render(const std::string& text, std::int64_t seed) override;
  nlohmann::json sampler_settings() const override;
  bool has_attention_probe() const override;
  AttentionMaps probe_attention(const std::string& text, std::int64_t seed) override;

 private:
  std::string id_;
  std::shared_ptr<const FixtureStore> store_;
};

class ReplayEmbedder final : public Embedder {
 public:
  ReplayEmbedder(std::string backend_id, std::shared_ptr<const FixtureStore> store);
  const std::string& backend_id() const override { return id_; }
  std::size_t dimension() const override { return dim_; }

 protected:
  Embedding raw_text(std::string_view text) override;
  Embedding raw_image(std::string_view image_bytes) override;

 private:
  Embedding lookup(std::string_view kind, const std::string& key, std::string_view what) const;
  std::string id_;
  std::shared_ptr<const FixtureStore> store_;
  std::size_t dim_;
};

class ReplayJudge final : public VlmJudge {
 public:
  ReplayJudge(std::string backend_id, std::shared_ptr<const FixtureStore> store);
  const std::string& backend_id() const override { return id_; }
  std::string ask(std::string_view image_bytes, const std::string& question,
                  int attempt) override;

 private:
  std::string id_;
  std::shared_ptr<const FixtureStore> store_;
};

/// Picks payload[attempt] (clamped to the last entry) when the payload is an
/// array, the payload itself otherwise.
const nlohmann::json& scripted_payload(const nlohmann::json& payload, int attempt);

// Recording decorators: forward to a live client and freeze every response
// into a FixtureWriter.

class RecordingLlm final : public LlmClient {
 public:
  RecordingLlm(std::shared_ptr<LlmClient> inner, std::shared_ptr<FixtureWriter> out);
  const std::string& backend_id() const override { return inner_->backend_id(); }
  std::string complete(std::string_view prompt, int attempt = 0) override;

 private:
  std::shared_ptr<LlmClient> inner_;
  std::shared_ptr<FixtureWriter> out_;
  std::mutex mu_;
  std::map<std::string, std::vector<std::string>> attempts_;
};

class RecordingGenerator final : public GeneratorClient {
 public:
  RecordingGenerator(std::shared_ptr<GeneratorClient> inner, std::shared_ptr<FixtureWriter> out);
  const std::string& backend_id() const override { return inner_->backend_id(); }
  std::string render(const std::string& text, std::int64_t seed) override;
  nlohmann::json sampler_settings() const override { return inner_->sampler_settings(); }
  bool has_attention_probe() const override { return inner_->has_attention_probe(); }
  AttentionMaps probe_attention(const std::string& text, std::int64_t seed) override;

 private:
  std::shared_ptr<GeneratorClient> inner_;
  std::shared_ptr<FixtureWriter> out_;
};

class RecordingEmbedder final : public Embedder {
 public:
  RecordingEmbedder(std::shared_ptr<Embedder> inner, std::shared_ptr<FixtureWriter> out);
  const std::string& backend_id() const override { return inner_->backend_id(); }
  std::size_t dimension() const override { return inner_->dimension(); }

 protected:
  Embedding raw_text(std::string_view text) override;
  Embedding raw_image(std::string_view image_bytes) override;

 private:
  std::shared_ptr<Embedder> inner_;
  std::shared_ptr<FixtureWriter> out_;
};

class RecordingJudge final : public VlmJudge {
 public:
  RecordingJudge(std::shared_ptr<VlmJudge> inner, std::shared_ptr<FixtureWriter> out);
  const std::string& backend_id() const override { return inner_->backend_id(); }
  std::string ask(std::string_view image_bytes, const std::string& question,
                  int attempt) override;

 private:
  std::shared_ptr<VlmJudge> inner_;
  std::shared_ptr<FixtureWriter> out_;
  std::mutex mu_;
  std::map<std::string, std::vector<std::string>> attempts_;
};

/// Resolves backends by id. Descriptors are instantiated lazily; in-process
/// clients (tests, the embedding testbed) can be registered directly.
class BackendSet {
 public:
  void add(BackendDescriptor d);
  void put_llm(const std::string& id, std::shared_ptr<LlmClient> c);
  void put_generator(const std::string& id, std::shared_ptr<GeneratorClient> c);
  void put_embedder(const std::string& id, std::shared_ptr<Embedder> c);
  void put_judge(const std::string& id, std::shared_ptr<VlmJudge> c);

  std::shared_ptr<LlmClient> llm(const std::string& id);
  std::shared_ptr<GeneratorClient> generator(const std::string& id);
  std::shared_ptr<Embedder> embedder(const std::string& id);
  std::shared_ptr<VlmJudge> judge(const std::string& id);

  bool contains(const std::string& id) const;
  /// True when a client for `id` exists already (registered or built).
  bool has_instance(const std::string& id) const;
  const BackendDescriptor* descriptor(const std::string& id) const;
  std::vector<BackendDescriptor> descriptors() const;

 private:
  const BackendDescriptor& need(const std::string& id, BackendKind kind) const;
  std::shared_ptr<const FixtureStore> fixtures(const BackendDescriptor& d);

  mutable std::mutex mu_;
  std::map<std::string, BackendDescriptor> descriptors_;
  std::map<std::string, std::shared_ptr<const FixtureStore>> stores_;
  std::map<std::string, std::shared_ptr<LlmClient>> llms_;
  std::map<std::string, std::shared_ptr<GeneratorClient>> generators_;
  std::map<std::string, std::shared_ptr<Embedder>> embedders_;
  std::map<std::string, std::shared_ptr<VlmJudge>> judges_;
};

}  // namespace pepper
