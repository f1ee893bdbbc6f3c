// SPDX-License-Identifier: Apache-2.0
#include "pepper/live_backends.hpp"

#include <cstdlib>
#include <thread>

#include <httplib.h>

#include "pepper/digest.hpp"
#include "pepper/rng.hpp"
#include "pepper/text.hpp"

namespace pepper {

using nlohmann::json;

namespace {

class HttplibTransport final : public HttpTransport {
 public:
  HttplibTransport(std::string scheme_host_port, std::string prefix, std::chrono::seconds timeout)
      : origin_(std::move(scheme_host_port)), prefix_(std::move(prefix)), timeout_(timeout) {}

  HttpResponse post(const std::string& path, const std::string& body,
                    const HttpHeaders& headers) override {
    // httplib::Client is not safe for concurrent requests; one per call.
    httplib::Client cli(origin_);
    cli.set_connection_timeout(timeout_);
    cli.set_read_timeout(timeout_);
    cli.set_write_timeout(timeout_);
    httplib::Headers h;
    for (const auto& [k, v] : headers) h.emplace(k, v);
    auto res = cli.Post(prefix_ + path, h, body, "application/json");
    if (!res) {
      throw TransportError("POST " + origin_ + prefix_ + path + " failed: " +
                           httplib::to_string(res.error()));
    }
    return {res->status, res->body};
  }

 private:
  std::string origin_;
  std::string prefix_;
  std::chrono::seconds timeout_;
};

std::string resolve_endpoint(const BackendDescriptor& d) {
  std::string endpoint = d.get("endpoint");
  if (endpoint.empty() && !d.get("endpoint_env").empty()) {
    if (const char* v = std::getenv(d.get("endpoint_env").c_str())) endpoint = v;
  }
  if (endpoint.empty()) throw ValidationError(d.backend_id + ": no endpoint configured");
  return endpoint;
}

HttpHeaders auth_headers(const BackendDescriptor& d) {
  HttpHeaders h;
  const std::string env = d.get("api_key_env");
  if (!env.empty()) {
    const char* key = std::getenv(env.c_str());
    if (key == nullptr) throw ValidationError(d.backend_id + ": " + env + " is not set");
    h.emplace_back("Authorization", std::string("Bearer ") + key);
  }
  return h;
}

RetryPolicy retry_from(const BackendDescriptor& d) {
  RetryPolicy p;
  p.max_retries = std::stoi(d.get("max_retries", "3"));
  p.backoff = std::chrono::milliseconds(std::stoll(d.get("retry_backoff_ms", "500")));
  return p;
}

double rate_from(const BackendDescriptor& d) { return std::stod(d.get("rate_limit_per_sec", "0")); }

std::shared_ptr<HttpTransport> transport_for(const BackendDescriptor& d,
                                             std::shared_ptr<HttpTransport> http) {
  if (http) return http;
  return make_http_transport(resolve_endpoint(d),
                             std::chrono::seconds(std::stoll(d.get("timeout_s", "120"))));
}

std::string chat_content(const json& reply) {
  try {
    return reply.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const json::exception&) {
    throw BackendError("malformed chat completion response");
  }
}

}  // namespace

std::shared_ptr<HttpTransport> make_http_transport(const std::string& base_url,
                                                   std::chrono::seconds timeout) {
  const auto scheme_end = base_url.find("://");
  if (scheme_end == std::string::npos) throw ValidationError("endpoint needs a scheme: " + base_url);
  const auto path_start = base_url.find('/', scheme_end + 3);
  std::string origin = base_url.substr(0, path_start);
  std::string prefix = path_start == std::string::npos ? "" : base_url.substr(path_start);
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  return std::make_shared<HttplibTransport>(std::move(origin), std::move(prefix), timeout);
}

std::string with_retries(const RetryPolicy& policy, const std::function<std::string()>& fn) {
  for (int attempt = 0;; ++attempt) {
    try {
      return fn();
    } catch (const BackendError& e) {
      if (!e.retryable() || attempt >= policy.max_retries) throw;
      std::this_thread::sleep_for(policy.backoff * (attempt + 1));
    }
  }
}

RateLimiter::RateLimiter(double per_second)
    : interval_(per_second > 0.0
                    ? std::chrono::nanoseconds(static_cast<std::int64_t>(1e9 / per_second))
                    : std::chrono::nanoseconds(0)) {}

void RateLimiter::acquire() {
  if (interval_.count() == 0) return;
  std::chrono::steady_clock::time_point slot;
  {
    std::lock_guard lock(mu_);
    const auto now = std::chrono::steady_clock::now();
    slot = std::max(now, next_);
    next_ = slot + interval_;
  }
  std::this_thread::sleep_until(slot);
}

json post_json(HttpTransport& http, const std::string& path, const json& body,
               const HttpHeaders& headers) {
  const HttpResponse res = http.post(path, body.dump(), headers);
  if (res.status == 429 || res.status >= 500) {
    throw TransportError("HTTP " + std::to_string(res.status) + " from " + path);
  }
  if (res.status < 200 || res.status >= 300) {
    throw BackendError("HTTP " + std::to_string(res.status) + " from " + path + ": " +
                       res.body.substr(0, 200));
  }
  try {
    return json::parse(res.body);
  } catch (const json::parse_error&) {
    throw BackendError("non-JSON response from " + path);
  }
}

OpenAiChatLlm::OpenAiChatLlm(BackendDescriptor d, std::shared_ptr<HttpTransport> http)
    : d_(std::move(d)), http_(std::move(http)), retry_(retry_from(d_)), limiter_(rate_from(d_)) {}

std::string OpenAiChatLlm::complete(std::string_view prompt, int attempt) {
  json body{{"model", d_.get("model", "gpt-4.1")},
            {"messages", json::array({json{{"role", "user"}, {"content", prompt}}})},
            {"temperature", std::stod(d_.get("temperature", "1.0"))}};
  if (attempt > 0) body["seed"] = attempt;
  const HttpHeaders headers = auth_headers(d_);
  return with_retries(retry_, [&] {
    limiter_.acquire();
    return chat_content(post_json(*http_, "/chat/completions", body, headers));
  });
}

A1111Generator::A1111Generator(BackendDescriptor d, std::shared_ptr<HttpTransport> http)
    : d_(std::move(d)), http_(std::move(http)), retry_(retry_from(d_)), limiter_(rate_from(d_)) {}

json A1111Generator::sampler_settings() const {
  return json{{"steps", std::stoi(d_.get("steps", "50"))},
              {"cfg_scale", std::stod(d_.get("guidance_scale", "7.5"))},
              {"width", std::stoi(d_.get("width", "512"))},
              {"height", std::stoi(d_.get("height", "512"))},
              {"sampler_name", d_.get("sampler_name", "PNDM")},
              {"checkpoint", d_.get("checkpoint")}};
}

std::string A1111Generator::render(const std::string& text, std::int64_t seed) {
  const json s = sampler_settings();
  json body{{"prompt", text},          {"seed", seed},          {"steps", s["steps"]},
            {"cfg_scale", s["cfg_scale"]}, {"width", s["width"]}, {"height", s["height"]},
            {"sampler_name", s["sampler_name"]}, {"batch_size", 1}};
  if (!d_.get("checkpoint").empty()) {
    body["override_settings"] = json{{"sd_model_checkpoint", d_.get("checkpoint")}};
  }
  const HttpHeaders headers = auth_headers(d_);
  const std::string b64 = with_retries(retry_, [&] {
    limiter_.acquire();
    const json r = post_json(*http_, d_.get("txt2img_path", "/sdapi/v1/txt2img"), body, headers);
    if (!r.contains("images") || r["images"].empty()) {
      throw BackendError(d_.backend_id + ": generator response has no images");
    }
    return r["images"][0].get<std::string>();
  });
  return base64_decode(b64);
}

bool A1111Generator::has_attention_probe() const { return !d_.get("attention_path").empty(); }

AttentionMaps A1111Generator::probe_attention(const std::string& text, std::int64_t seed) {
  if (!has_attention_probe()) return GeneratorClient::probe_attention(text, seed);
  json body{{"prompt", text},
            {"seed", seed},
            {"steps", std::stoi(d_.get("probe_steps", "10"))},
            {"checkpoint", d_.get("checkpoint")}};
  const HttpHeaders headers = auth_headers(d_);
  const std::string raw = with_retries(retry_, [&] {
    limiter_.acquire();
    return post_json(*http_, d_.get("attention_path"), body, headers).dump();
  });
  return json::parse(raw).get<AttentionMaps>();
}

HttpEmbedder::HttpEmbedder(BackendDescriptor d, std::shared_ptr<HttpTransport> http)
    : d_(std::move(d)),
      http_(std::move(http)),
      retry_(retry_from(d_)),
      limiter_(rate_from(d_)),
      dim_(std::stoul(d_.get("dimension", "512"))) {}

Embedding HttpEmbedder::call(const std::string& path, const json& body) {
  const HttpHeaders headers = auth_headers(d_);
  const std::string raw = with_retries(retry_, [&] {
    limiter_.acquire();
    const json r = post_json(*http_, path, body, headers);
    if (!r.contains("embedding")) throw BackendError(d_.backend_id + ": response lacks embedding");
    return r["embedding"].dump();
  });
  return json::parse(raw).get<Embedding>();
}

Embedding HttpEmbedder::raw_text(std::string_view text) {
  return call(d_.get("text_path", "/embed/text"), json{{"text", text}});
}

Embedding HttpEmbedder::raw_image(std::string_view image_bytes) {
  return call(d_.get("image_path", "/embed/image"), json{{"image_b64", base64_encode(image_bytes)}});
}

HashingEmbedder::HashingEmbedder(std::string backend_id, std::size_t dimension)
    : id_(std::move(backend_id)), dim_(dimension) {
  if (dim_ == 0) throw ValidationError("hashing embedder needs a positive dimension");
}

Embedding HashingEmbedder::raw_text(std::string_view input) {
  Embedding v(dim_, 0.0);
  auto add = [&](std::string_view feature, double weight) {
    const std::uint64_t h = fnv1a(feature);
    const double sign = (h >> 63) != 0 ? -1.0 : 1.0;
    v[h % dim_] += sign * weight;
  };
  for (const auto& raw : text::whitespace_tokens(text::ascii_lower(input))) {
    std::string_view w = raw;
    auto punct = [](char c) {
      return c == '.' || c == ',' || c == ';' || c == ':' || c == '!' || c == '?' || c == '"' ||
             c == '\'' || c == '(' || c == ')';
    };
    while (!w.empty() && punct(w.front())) w.remove_prefix(1);
    while (!w.empty() && punct(w.back())) w.remove_suffix(1);
    if (w.empty()) continue;
    add(std::string("w:") + std::string(w), 1.0);
    const std::string padded = "#" + std::string(w) + "#";
    for (std::size_t i = 0; i + 3 <= padded.size(); ++i) {
      add("c:" + padded.substr(i, 3), 0.5);
    }
  }
  if (l2_norm(v) == 0.0) v[fnv1a(input) % dim_] = 1.0;
  return v;
}

Embedding HashingEmbedder::raw_image(std::string_view) {
  throw CapabilityError(id_ + ": hashing embedder embeds text only");
}

OpenAiVisionJudge::OpenAiVisionJudge(BackendDescriptor d, std::shared_ptr<HttpTransport> http)
    : d_(std::move(d)), http_(std::move(http)), retry_(retry_from(d_)), limiter_(rate_from(d_)) {}

std::string OpenAiVisionJudge::ask(std::string_view image_bytes, const std::string& question,
                                   int attempt) {
  const json content = json::array(
      {json{{"type", "text"}, {"text", question}},
       json{{"type", "image_url"},
            {"image_url", json{{"url", "data:image/png;base64," + base64_encode(image_bytes)}}}}});
  json body{{"model", d_.get("model", "gpt-4o")},
            {"messages", json::array({json{{"role", "user"}, {"content", content}}})},
            {"temperature", 0.0}};
  if (attempt > 0) body["seed"] = attempt;
  const HttpHeaders headers = auth_headers(d_);
  return with_retries(retry_, [&] {
    limiter_.acquire();
    return chat_content(post_json(*http_, "/chat/completions", body, headers));
  });
}

std::shared_ptr<LlmClient> make_live_llm(const BackendDescriptor& d,
                                         std::shared_ptr<HttpTransport> http) {
  return std::make_shared<OpenAiChatLlm>(d, transport_for(d, std::move(http)));
}

std::shared_ptr<GeneratorClient> make_live_generator(const BackendDescriptor& d,
                                                     std::shared_ptr<HttpTransport> http) {
  return std::make_shared<A1111Generator>(d, transport_for(d, std::move(http)));
}

std::shared_ptr<Embedder> make_live_embedder(const BackendDescriptor& d,
                                             std::shared_ptr<HttpTransport> http) {
  if (d.get("provider") == "hashing") {
    return std::make_shared<HashingEmbedder>(d.backend_id, std::stoul(d.get("dimension", "256")));
  }
  return std::make_shared<HttpEmbedder>(d, transport_for(d, std::move(http)));
}

std::shared_ptr<VlmJudge> make_live_judge(const BackendDescriptor& d,
                                          std::shared_ptr<HttpTransport> http) {
  return std::make_shared<OpenAiVisionJudge>(d, transport_for(d, std::move(http)));
}

}  // namespace pepper
