// SPDX-License-Identifier: Apache-2.0
//
// Live adapters over HTTP:
//   llm        OpenAI-compatible /chat/completions (hosted GPT or a local
//              server such as llama.cpp / Ollama serving a small model)
//   generator  AUTOMATIC1111-compatible /sdapi/v1/txt2img, optional
//              cross-attention probe endpoint
//   embedder   {"embedding": [...]} JSON service, or provider=hashing for
//              the in-process hashed bag-of-ngrams text embedder
//   vlm_judge  OpenAI-compatible /chat/completions with an image part
#pragma once

#include <chrono>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <utility>
#include <vector>

#include "pepper/backends.hpp"

namespace pepper {

struct HttpResponse {
  int status = 0;
  std::string body;
};

using HttpHeaders = std::vector<std::pair<std::string, std::string>>;

class HttpTransport {
 public:
  virtual ~HttpTransport() = default;
  /// Throws TransportError when no response arrives.
  virtual HttpResponse post(const std::string& path, const std::string& body,
                            const HttpHeaders& headers) = 0;
};

/// `base_url` such as "https://api.openai.com/v1"; its path part prefixes
/// every request path.
std::shared_ptr<HttpTransport> make_http_transport(const std::string& base_url,
                                                   std::chrono::seconds timeout);

struct RetryPolicy {
  int max_retries = 3;
  std::chrono::milliseconds backoff{500};
};

/// Runs `fn`, retrying retryable BackendErrors with linear backoff.
std::string with_retries(const RetryPolicy& policy, const std::function<std::string()>& fn);

/// Minimum spacing between calls; shared by all threads using one backend.
class RateLimiter {
 public:
  explicit RateLimiter(double per_second);
  void acquire();

 private:
  std::chrono::nanoseconds interval_;
  std::mutex mu_;
  std::chrono::steady_clock::time_point next_{};
};

/// POSTs JSON and returns the parsed body; 429/5xx and transport failures
/// raise TransportError, other non-2xx raise BackendError.
nlohmann::json post_json(HttpTransport& http, const std::string& path, const nlohmann::json& body,
                         const HttpHeaders& headers);

class OpenAiChatLlm final : public LlmClient {
 public:
  OpenAiChatLlm(BackendDescriptor d, std::shared_ptr<HttpTransport> http);
  const std::string& backend_id() const override { return d_.backend_id; }
  std::string complete(std::string_view prompt, int attempt = 0) override;

 private:
  BackendDescriptor d_;
  std::shared_ptr<HttpTransport> http_;
  RetryPolicy retry_;
  RateLimiter limiter_;
};

class A1111Generator final : public GeneratorClient {
 public:
  A1111Generator(BackendDescriptor d, std::shared_ptr<HttpTransport> http);
  const std::string& backend_id() const override { return d_.backend_id; }
  std::string render(const std::string& text, std::int64_t seed) override;
  nlohmann::json sampler_settings() const override;
  bool has_attention_probe() const override;
  AttentionMaps probe_attention(const std::string& text, std::int64_t seed) override;

 private:
  BackendDescriptor d_;
  std::shared_ptr<HttpTransport> http_;
  RetryPolicy retry_;
  RateLimiter limiter_;
};

class HttpEmbedder final : public Embedder {
 public:
  HttpEmbedder(BackendDescriptor d, std::shared_ptr<HttpTransport> http);
  const std::string& backend_id() const override { return d_.backend_id; }
  std::size_t dimension() const override { return dim_; }

 protected:
  Embedding raw_text(std::string_view text) override;
  Embedding raw_image(std::string_view image_bytes) override;

 private:
  Embedding call(const std::string& path, const nlohmann::json& body);
  BackendDescriptor d_;
  std::shared_ptr<HttpTransport> http_;
  RetryPolicy retry_;
  RateLimiter limiter_;
  std::size_t dim_;
};

/// Signed feature hashing of lower-cased words and character trigrams.
/// Deterministic and dependency-free; text only.
class HashingEmbedder final : public Embedder {
 public:
  HashingEmbedder(std::string backend_id, std::size_t dimension);
  const std::string& backend_id() const override { return id_; }
  std::size_t dimension() const override { return dim_; }

 protected:
  Embedding raw_text(std::string_view text) override;
  Embedding raw_image(std::string_view image_bytes) override;

 private:
  std::string id_;
  std::size_t dim_;
};

class OpenAiVisionJudge final : public VlmJudge {
 public:
  OpenAiVisionJudge(BackendDescriptor d, std::shared_ptr<HttpTransport> http);
  const std::string& backend_id() const override { return d_.backend_id; }
  std::string ask(std::string_view image_bytes, const std::string& question,
                  int attempt) override;

 private:
  BackendDescriptor d_;
  std::shared_ptr<HttpTransport> http_;
  RetryPolicy retry_;
  RateLimiter limiter_;
};

/// Builds the live adapter for a descriptor. `http` overrides the transport
/// (used for fault injection); by default one is built from the endpoint.
std::shared_ptr<LlmClient> make_live_llm(const BackendDescriptor& d,
                                         std::shared_ptr<HttpTransport> http = nullptr);
std::shared_ptr<GeneratorClient> make_live_generator(const BackendDescriptor& d,
                                                     std::shared_ptr<HttpTransport> http = nullptr);
std::shared_ptr<Embedder> make_live_embedder(const BackendDescriptor& d,
                                             std::shared_ptr<HttpTransport> http = nullptr);
std::shared_ptr<VlmJudge> make_live_judge(const BackendDescriptor& d,
                                          std::shared_ptr<HttpTransport> http = nullptr);

}  // namespace pepper
