// SPDX-License-Identifier: Apache-2.0
#include "pepper/backends.hpp"

#include <cmath>
#include <atomic>
#include <cstdlib>

#include <unistd.h>

#include "pepper/digest.hpp"
#include "pepper/files.hpp"
#include "pepper/live_backends.hpp"
#include "pepper/text.hpp"

namespace pepper {

using nlohmann::json;
namespace fs = std::filesystem;

std::string_view to_string(BackendKind k) {
  switch (k) {
    case BackendKind::llm: return "llm";
    case BackendKind::generator: return "generator";
    case BackendKind::embedder: return "embedder";
    case BackendKind::vlm_judge: return "vlm_judge";
  }
  return "?";
}

std::string_view to_string(BackendMode m) { return m == BackendMode::live ? "live" : "replay"; }

BackendKind parse_backend_kind(std::string_view s) {
  if (s == "llm") return BackendKind::llm;
  if (s == "generator") return BackendKind::generator;
  if (s == "embedder") return BackendKind::embedder;
  if (s == "vlm_judge") return BackendKind::vlm_judge;
  throw ValidationError("unknown backend kind: " + std::string(s));
}

BackendMode parse_backend_mode(std::string_view s) {
  if (s == "live") return BackendMode::live;
  if (s == "replay") return BackendMode::replay;
  throw ValidationError("unknown backend mode: " + std::string(s));
}

std::string BackendDescriptor::get(const std::string& key, const std::string& fallback) const {
  const auto it = config.find(key);
  return it == config.end() ? fallback : it->second;
}

const BackendDescriptor& validate(const BackendDescriptor& d) {
  if (d.backend_id.empty()) throw ValidationError("backend_id required");
  if (d.mode == BackendMode::replay) {
    const std::string fixture = d.get("fixture");
    if (fixture.empty()) throw ValidationError(d.backend_id + ": replay mode requires a fixture path");
    if (!fs::exists(fixture)) {
      throw ValidationError(d.backend_id + ": fixture path does not exist: " + fixture);
    }
    return d;
  }
  const std::string provider = d.get("provider");
  if (provider == "hashing") return d;  // in-process, nothing to resolve
  std::string endpoint = d.get("endpoint");
  if (endpoint.empty() && !d.get("endpoint_env").empty()) {
    const char* v = std::getenv(d.get("endpoint_env").c_str());
    if (v != nullptr) endpoint = v;
  }
  if (endpoint.empty()) throw ValidationError(d.backend_id + ": live mode requires an endpoint");
  const std::string key_env = d.get("api_key_env");
  if (!key_env.empty() && std::getenv(key_env.c_str()) == nullptr) {
    throw ValidationError(d.backend_id + ": credential variable " + key_env + " is not set");
  }
  const std::string ckpt_path = d.get("checkpoint_path");
  if (!ckpt_path.empty() && !fs::exists(ckpt_path)) {
    throw ValidationError(d.backend_id + ": checkpoint path does not exist: " + ckpt_path);
  }
  return d;
}

void to_json(json& j, const BackendDescriptor& d) {
  j = json{{"backend_id", d.backend_id},
           {"kind", to_string(d.kind)},
           {"mode", to_string(d.mode)},
           {"config", d.config}};
}

void from_json(const json& j, BackendDescriptor& d) {
  d.backend_id = j.at("backend_id").get<std::string>();
  d.kind = parse_backend_kind(j.at("kind").get<std::string>());
  d.mode = parse_backend_mode(j.at("mode").get<std::string>());
  d.config.clear();
  if (j.contains("config")) {
    for (const auto& [k, v] : j.at("config").items()) {
      d.config[k] = v.is_string() ? v.get<std::string>() : v.dump();
    }
  }
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("dimension mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double l2_norm(std::span<const double> v) { return std::sqrt(dot(v, v)); }

Embedding normalized(Embedding v) {
  const double n = l2_norm(v);
  if (!(n > 0.0) || !std::isfinite(n)) throw std::invalid_argument("cannot normalize a zero vector");
  for (auto& x : v) x /= n;
  return v;
}

double cosine(std::span<const double> a, std::span<const double> b) {
  const double na = l2_norm(a);
  const double nb = l2_norm(b);
  if (!(na > 0.0) || !(nb > 0.0)) throw std::invalid_argument("cosine of a zero vector");
  return dot(a, b) / (na * nb);
}

void to_json(json& j, const AttentionMaps& m) { j = json{{"tokens", m.tokens}, {"maps", m.maps}}; }

void from_json(const json& j, AttentionMaps& m) {
  m.tokens = j.at("tokens").get<std::vector<std::string>>();
  m.maps = j.at("maps").get<std::vector<std::vector<double>>>();
  if (m.tokens.size() != m.maps.size()) {
    throw BackendError("attention probe returned mismatched token and map counts");
  }
}

AttentionMaps GeneratorClient::probe_attention(const std::string&, std::int64_t) {
  throw CapabilityError(backend_id() + ": backend has no cross-attention probe");
}

Embedding Embedder::checked(Embedding v) const {
  if (v.size() != dimension()) {
    throw BackendError(backend_id() + ": embedding has dimension " + std::to_string(v.size()) +
                       ", expected " + std::to_string(dimension()));
  }
  for (double x : v) {
    if (!std::isfinite(x)) throw BackendError(backend_id() + ": non-finite embedding");
  }
  return v;
}

Embedding Embedder::finish(Embedding v) const { return normalized(checked(std::move(v))); }

Embedding Embedder::embed_text(std::string_view text) {
  if (text::trim(text).empty()) throw std::invalid_argument("cannot embed empty text");
  return finish(raw_text(text));
}

std::string Embedder::load_image(const fs::path& image_ref) const {
  std::string bytes;
  try {
    bytes = files::read_bytes(image_ref);
  } catch (const std::exception& e) {
    throw BackendError(backend_id() + ": unreadable image " + image_ref.string());
  }
  if (bytes.empty()) throw BackendError(backend_id() + ": empty image " + image_ref.string());
  return bytes;
}

Embedding Embedder::embed_image(const fs::path& image_ref) {
  return finish(raw_image(load_image(image_ref)));
}

Embedding Embedder::image_features(const fs::path& image_ref) {
  return checked(raw_image(load_image(image_ref)));
}

std::optional<bool> parse_yes_no(std::string_view reply) {
  std::string s = text::ascii_lower(text::trim(reply));
  while (!s.empty() && (s.back() == '.' || s.back() == '!')) s.pop_back();
  s = std::string(text::trim(s));
  if (s == "yes") return true;
  if (s == "no") return false;
  return std::nullopt;
}

bool VlmJudge::judge(const fs::path& image_ref, const std::string& question) {
  std::string bytes;
  try {
    bytes = files::read_bytes(image_ref);
  } catch (const std::exception&) {
    throw BackendError(backend_id() + ": missing image " + image_ref.string());
  }
  std::string reply;
  for (int attempt = 0; attempt < 2; ++attempt) {
    reply = ask(bytes, question, attempt);
    if (auto v = parse_yes_no(reply)) return *v;
  }
  throw JudgeParseError(backend_id() + ": judge reply not yes/no after re-ask: \"" + reply + "\"");
}

std::string generation_cache_key(std::string_view text, std::int64_t seed,
                                 std::string_view backend_id, const json& sampler_settings) {
  return sha256_hex(json{{"text_sha256", sha256_hex(text)},
                         {"seed", seed},
                         {"backend_id", backend_id},
                         {"sampler_sha256", sha256_hex(sampler_settings.dump())}}
                        .dump());
}

ImageStore::ImageStore(fs::path root) : root_(std::move(root)) {}

fs::path ImageStore::image_path(std::string_view backend_id, std::string_view caption_id,
                                std::int64_t seed) const {
  return root_ / std::string(backend_id) /
         (std::string(caption_id) + "_" + std::to_string(seed) + ".png");
}

std::shared_ptr<std::mutex> ImageStore::slot(const fs::path& png) {
  std::lock_guard lock(slots_mu_);
  auto& m = slots_[png.string()];
  if (!m) m = std::make_shared<std::mutex>();
  return m;
}

GenerationRecord ImageStore::generate(GeneratorClient& generator, const Caption& caption,
                                      std::int64_t seed) {
  validate(caption);
  const fs::path png = image_path(generator.backend_id(), caption.id, seed);
  fs::path sidecar = png;
  sidecar += ".json";
  const std::string key =
      generation_cache_key(caption.text, seed, generator.backend_id(), generator.sampler_settings());

  GenerationRecord rec{caption.id, seed, generator.backend_id(), png.string(), ""};
  const auto lock_slot = slot(png);
  std::lock_guard lock(*lock_slot);
  if (fs::exists(png) && fs::exists(sidecar)) {
    try {
      const json meta = json::parse(files::read_bytes(sidecar));
      if (meta.value("cache_key", "") == key) {
        rec.created_at = meta.value("created_at", "");
        ++cache_hits_;
        return rec;
      }
    } catch (const json::exception&) {
      // unreadable sidecar: fall through and regenerate
    }
  }
  const std::string bytes = generator.render(caption.text, seed);
  if (bytes.empty()) throw BackendError(generator.backend_id() + ": generator returned no image");
  rec.created_at = utc_timestamp();
  try {
    files::write_atomic(png, bytes);
    files::write_atomic(sidecar, json{{"cache_key", key},
                                      {"caption_id", caption.id},
                                      {"seed", seed},
                                      {"backend_id", generator.backend_id()},
                                      {"created_at", rec.created_at}}
                                     .dump());
  } catch (const std::exception& e) {
    throw BackendError(std::string("image store write failed: ") + e.what());
  }
  ++renders_;
  return rec;
}

const json& scripted_payload(const json& payload, int attempt) {
  if (!payload.is_array()) return payload;
  if (payload.empty()) throw BackendError("empty scripted fixture payload");
  const auto idx = std::min<std::size_t>(static_cast<std::size_t>(std::max(attempt, 0)),
                                         payload.size() - 1);
  return payload.at(idx);
}

ReplayLlm::ReplayLlm(std::string backend_id, std::shared_ptr<const FixtureStore> store)
    : id_(std::move(backend_id)), store_(std::move(store)) {}

std::string ReplayLlm::complete(std::string_view prompt, int attempt) {
  const json* p = store_->find("llm", fixture_key::llm(prompt));
  if (p == nullptr) throw FixtureMissError(id_ + ": no completion for prompt hash " + fixture_key::llm(prompt));
  return scripted_payload(*p, attempt).get<std::string>();
}

ReplayGenerator::ReplayGenerator(std::string backend_id, std::shared_ptr<const FixtureStore> store,
                                 std::optional<std::string> checkpoint)
    : id_(std::move(backend_id)), store_(std::move(store)) {
  if (checkpoint) {
    const std::string recorded = store_->header().value("checkpoint", "");
    if (recorded != *checkpoint) {
      throw BackendError(id_ + ": unknown checkpoint id '" + *checkpoint + "'" +
                         (recorded.empty() ? "" : " (fixtures were recorded for '" + recorded + "')"));
    }
  }
}

std::string ReplayGenerator::render(const std::string& text, std::int64_t seed) {
  const std::string key = fixture_key::generation(text, seed);
  const json* p = store_->find("generator", key);
  if (p == nullptr) throw FixtureMissError(id_ + ": no image for (" + text + ", " + std::to_string(seed) + ")");
  return base64_decode(p->get<std::string>());
}

json ReplayGenerator::sampler_settings() const {
  return store_->header().value("sampler", json::object());
}

bool ReplayGenerator::has_attention_probe() const {
  return store_->header().value("attention", false);
}

AttentionMaps ReplayGenerator::probe_attention(const std::string& text, std::int64_t seed) {
  if (!has_attention_probe()) return GeneratorClient::probe_attention(text, seed);
  const json* p = store_->find("attention", fixture_key::generation(text, seed));
  if (p == nullptr) throw FixtureMissError(id_ + ": no attention maps for (" + text + ")");
  return p->get<AttentionMaps>();
}

ReplayEmbedder::ReplayEmbedder(std::string backend_id, std::shared_ptr<const FixtureStore> store)
    : id_(std::move(backend_id)), store_(std::move(store)) {
  dim_ = store_->header().value("dimension", std::size_t{0});
  if (dim_ == 0) throw FixtureSchemaError(id_ + ": embedder fixtures must declare a dimension");
}

Embedding ReplayEmbedder::lookup(std::string_view kind, const std::string& key,
                                 std::string_view what) const {
  const json* p = store_->find(kind, key);
  if (p == nullptr) throw FixtureMissError(id_ + ": no " + std::string(kind) + " vector for " + std::string(what));
  return p->get<Embedding>();
}

Embedding ReplayEmbedder::raw_text(std::string_view text) {
  return lookup("embed_text", fixture_key::embed_text(text), text);
}

Embedding ReplayEmbedder::raw_image(std::string_view image_bytes) {
  const std::string key = fixture_key::embed_image(image_bytes);
  return lookup("embed_image", key, "image " + key.substr(0, 12));
}

ReplayJudge::ReplayJudge(std::string backend_id, std::shared_ptr<const FixtureStore> store)
    : id_(std::move(backend_id)), store_(std::move(store)) {}

std::string ReplayJudge::ask(std::string_view image_bytes, const std::string& question,
                             int attempt) {
  const json* p = store_->find("judge", fixture_key::judge(image_bytes, question));
  if (p == nullptr) throw FixtureMissError(id_ + ": no judge reply for question \"" + question + "\"");
  return scripted_payload(*p, attempt).get<std::string>();
}

RecordingLlm::RecordingLlm(std::shared_ptr<LlmClient> inner, std::shared_ptr<FixtureWriter> out)
    : inner_(std::move(inner)), out_(std::move(out)) {}

namespace {

// Freezes attempt-indexed replies: one reply is stored as a string, several
// as an array so replay can hand them out by attempt number.
json scripted(std::vector<std::string>& seq, int attempt, const std::string& reply) {
  const auto idx = static_cast<std::size_t>(std::max(attempt, 0));
  if (seq.size() <= idx) seq.resize(idx + 1, reply);
  seq[idx] = reply;
  return seq.size() == 1 ? json(seq.front()) : json(seq);
}

}  // namespace

std::string RecordingLlm::complete(std::string_view prompt, int attempt) {
  std::string reply = inner_->complete(prompt, attempt);
  std::lock_guard lock(mu_);
  const std::string key = fixture_key::llm(prompt);
  json payload = scripted(attempts_[key], attempt, reply);
  out_->put("llm", key, std::move(payload));
  return reply;
}

RecordingGenerator::RecordingGenerator(std::shared_ptr<GeneratorClient> inner,
                                       std::shared_ptr<FixtureWriter> out)
    : inner_(std::move(inner)), out_(std::move(out)) {}

std::string RecordingGenerator::render(const std::string& text, std::int64_t seed) {
  std::string png = inner_->render(text, seed);
  out_->put("generator", fixture_key::generation(text, seed), base64_encode(png));
  return png;
}

AttentionMaps RecordingGenerator::probe_attention(const std::string& text, std::int64_t seed) {
  AttentionMaps maps = inner_->probe_attention(text, seed);
  out_->put("attention", fixture_key::generation(text, seed), maps);
  return maps;
}

RecordingEmbedder::RecordingEmbedder(std::shared_ptr<Embedder> inner,
                                     std::shared_ptr<FixtureWriter> out)
    : inner_(std::move(inner)), out_(std::move(out)) {}

Embedding RecordingEmbedder::raw_text(std::string_view text) {
  Embedding v = inner_->embed_text(text);
  out_->put("embed_text", fixture_key::embed_text(text), v);
  return v;
}

Embedding RecordingEmbedder::raw_image(std::string_view image_bytes) {
  // The inner embedder reads from a path; hand it a scratch copy.
  static std::atomic<std::uint64_t> counter{0};
  const fs::path tmp = fs::temp_directory_path() /
                       ("pepper-rec-" + std::to_string(::getpid()) + "-" + std::to_string(counter++) + "-" +
                        sha256_hex(image_bytes).substr(0, 16) + ".png");
  files::write_atomic(tmp, image_bytes);
  // Raw activations, so replayed FID features match the live ones.
  Embedding v = inner_->image_features(tmp);
  std::error_code ec;
  fs::remove(tmp, ec);
  out_->put("embed_image", fixture_key::embed_image(image_bytes), v);
  return v;
}

RecordingJudge::RecordingJudge(std::shared_ptr<VlmJudge> inner, std::shared_ptr<FixtureWriter> out)
    : inner_(std::move(inner)), out_(std::move(out)) {}

std::string RecordingJudge::ask(std::string_view image_bytes, const std::string& question,
                                int attempt) {
  std::string reply = inner_->ask(image_bytes, question, attempt);
  std::lock_guard lock(mu_);
  const std::string key = fixture_key::judge(image_bytes, question);
  json payload = scripted(attempts_[key], attempt, reply);
  out_->put("judge", key, std::move(payload));
  return reply;
}

void BackendSet::add(BackendDescriptor d) {
  std::lock_guard lock(mu_);
  const std::string id = d.backend_id;
  descriptors_[id] = std::move(d);
}

void BackendSet::put_llm(const std::string& id, std::shared_ptr<LlmClient> c) {
  std::lock_guard lock(mu_);
  llms_[id] = std::move(c);
}

void BackendSet::put_generator(const std::string& id, std::shared_ptr<GeneratorClient> c) {
  std::lock_guard lock(mu_);
  generators_[id] = std::move(c);
}

void BackendSet::put_embedder(const std::string& id, std::shared_ptr<Embedder> c) {
  std::lock_guard lock(mu_);
  embedders_[id] = std::move(c);
}

void BackendSet::put_judge(const std::string& id, std::shared_ptr<VlmJudge> c) {
  std::lock_guard lock(mu_);
  judges_[id] = std::move(c);
}

bool BackendSet::contains(const std::string& id) const {
  std::lock_guard lock(mu_);
  return descriptors_.contains(id) || llms_.contains(id) || generators_.contains(id) ||
         embedders_.contains(id) || judges_.contains(id);
}

bool BackendSet::has_instance(const std::string& id) const {
  std::lock_guard lock(mu_);
  return llms_.contains(id) || generators_.contains(id) || embedders_.contains(id) ||
         judges_.contains(id);
}

const BackendDescriptor* BackendSet::descriptor(const std::string& id) const {
  std::lock_guard lock(mu_);
  const auto it = descriptors_.find(id);
  return it == descriptors_.end() ? nullptr : &it->second;
}

std::vector<BackendDescriptor> BackendSet::descriptors() const {
  std::lock_guard lock(mu_);
  std::vector<BackendDescriptor> out;
  for (const auto& [id, d] : descriptors_) out.push_back(d);
  return out;
}

const BackendDescriptor& BackendSet::need(const std::string& id, BackendKind kind) const {
  const auto it = descriptors_.find(id);
  if (it == descriptors_.end()) throw ValidationError("unknown backend id: " + id);
  if (it->second.kind != kind) {
    throw ValidationError("backend " + id + " is a " + std::string(to_string(it->second.kind)) +
                          ", not a " + std::string(to_string(kind)));
  }
  return it->second;
}

std::shared_ptr<const FixtureStore> BackendSet::fixtures(const BackendDescriptor& d) {
  const std::string path = d.get("fixture");
  auto it = stores_.find(path);
  if (it == stores_.end()) {
    it = stores_.emplace(path, std::make_shared<FixtureStore>(FixtureStore::load(path))).first;
  }
  return it->second;
}

std::shared_ptr<LlmClient> BackendSet::llm(const std::string& id) {
  std::lock_guard lock(mu_);
  if (auto it = llms_.find(id); it != llms_.end()) return it->second;
  const auto& d = validate(need(id, BackendKind::llm));
  std::shared_ptr<LlmClient> c;
  if (d.mode == BackendMode::replay) {
    c = std::make_shared<ReplayLlm>(id, fixtures(d));
  } else {
    c = make_live_llm(d);
  }
  llms_[id] = c;
  return c;
}

std::shared_ptr<GeneratorClient> BackendSet::generator(const std::string& id) {
  std::lock_guard lock(mu_);
  if (auto it = generators_.find(id); it != generators_.end()) return it->second;
  const auto& d = validate(need(id, BackendKind::generator));
  std::shared_ptr<GeneratorClient> c;
  if (d.mode == BackendMode::replay) {
    std::optional<std::string> ckpt;
    if (!d.get("checkpoint").empty()) ckpt = d.get("checkpoint");
    c = std::make_shared<ReplayGenerator>(id, fixtures(d), ckpt);
  } else {
    c = make_live_generator(d);
  }
  generators_[id] = c;
  return c;
}

std::shared_ptr<Embedder> BackendSet::embedder(const std::string& id) {
  std::lock_guard lock(mu_);
  if (auto it = embedders_.find(id); it != embedders_.end()) return it->second;
  const auto& d = validate(need(id, BackendKind::embedder));
  std::shared_ptr<Embedder> c;
  if (d.mode == BackendMode::replay) {
    c = std::make_shared<ReplayEmbedder>(id, fixtures(d));
  } else {
    c = make_live_embedder(d);
  }
  embedders_[id] = c;
  return c;
}

std::shared_ptr<VlmJudge> BackendSet::judge(const std::string& id) {
  std::lock_guard lock(mu_);
  if (auto it = judges_.find(id); it != judges_.end()) return it->second;
  const auto& d = validate(need(id, BackendKind::vlm_judge));
  std::shared_ptr<VlmJudge> c;
  if (d.mode == BackendMode::replay) {
    c = std::make_shared<ReplayJudge>(id, fixtures(d));
  } else {
    c = make_live_judge(d);
  }
  judges_[id] = c;
  return c;
}

}  // namespace pepper
