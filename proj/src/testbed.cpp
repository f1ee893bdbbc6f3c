// SPDX-License-Identifier: Apache-2.0
#include "pepper/testbed.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "pepper/png.hpp"
#include "pepper/text.hpp"

namespace pepper::testbed {

using nlohmann::json;

std::vector<std::string> toy_tokens(std::string_view caption) {
  std::vector<std::string> out;
  for (auto tok : text::whitespace_tokens(caption)) {
    auto punct = [](unsigned char c) { return c < 0x80 && std::ispunct(c) && c != '[' && c != ']'; };
    while (!tok.empty() && punct(static_cast<unsigned char>(tok.back()))) tok.pop_back();
    std::size_t start = 0;
    while (start < tok.size() && punct(static_cast<unsigned char>(tok[start]))) ++start;
    tok = text::ascii_lower(tok.substr(start));
    if (!tok.empty()) out.push_back(std::move(tok));
  }
  return out;
}

namespace {

Embedding gaussian(Rng& rng, std::size_t dim) {
  Embedding v(dim);
  for (auto& x : v) x = rng.normal();
  return v;
}

}  // namespace

ToyEncoder::ToyEncoder(std::size_t dim, std::uint64_t seed) : dim_(dim), seed_(seed), rng_(seed) {
  if (dim < 2) throw std::invalid_argument("toy encoder needs dimension >= 2");
}

Embedding ToyEncoder::fresh_direction() {
  if (basis_.size() >= dim_) throw std::length_error("toy encoder dimension exhausted");
  Embedding g = gaussian(rng_, dim_);
  for (int pass = 0; pass < 2; ++pass) {
    for (const auto& b : basis_) {
      const double p = dot(g, b);
      for (std::size_t i = 0; i < dim_; ++i) g[i] -= p * b[i];
    }
  }
  g = normalized(std::move(g));
  basis_.push_back(g);
  return g;
}

const Embedding& ToyEncoder::add_token(const std::string& token) {
  if (contains(token)) throw std::invalid_argument("duplicate toy token: " + token);
  return vocab_.emplace(token, fresh_direction()).first->second;
}

const Embedding& ToyEncoder::add_near(const std::string& token, const std::string& anchor,
                                      double cos) {
  if (contains(token)) throw std::invalid_argument("duplicate toy token: " + token);
  if (!(cos > -1.0 && cos < 1.0)) throw std::invalid_argument("cosine must lie in (-1, 1)");
  const Embedding& a = vocab_.at(anchor);
  const Embedding fresh = fresh_direction();
  const double s = std::sqrt(1.0 - cos * cos);
  Embedding v(dim_);
  for (std::size_t i = 0; i < dim_; ++i) v[i] = cos * a[i] + s * fresh[i];
  return vocab_.emplace(token, normalized(std::move(v))).first->second;
}

Embedding ToyEncoder::token_vector(const std::string& token) const {
  if (auto it = vocab_.find(token); it != vocab_.end()) return it->second;
  Rng r(derive_seed(seed_, "unknown-token:" + token));
  return normalized(gaussian(r, dim_));
}

Embedding ToyEncoder::encode(std::string_view caption) const {
  const auto toks = toy_tokens(caption);
  if (toks.empty()) throw std::invalid_argument("caption has no tokens");
  Embedding sum(dim_, 0.0);
  for (const auto& t : toks) {
    const Embedding v = token_vector(t);
    for (std::size_t i = 0; i < dim_; ++i) sum[i] += v[i];
  }
  return normalized(std::move(sum));
}

double cosine_distance(std::span<const double> a, std::span<const double> b) {
  return 1.0 - cosine(a, b);
}

const AttackedRegion& validate(const AttackedRegion& r) {
  if (!(r.radius > 0.0 && r.radius < 2.0)) throw ValidationError("region radius must lie in (0, 2)");
  if (r.center.empty() || r.center.size() != r.target.size()) {
    throw ValidationError("region center and target must share a dimension");
  }
  if (std::abs(l2_norm(r.center) - 1.0) > 1e-9 || std::abs(l2_norm(r.target) - 1.0) > 1e-9) {
    throw ValidationError("region center and target must be unit vectors");
  }
  return r;
}

AttackedRegion make_region(const ToyEncoder& enc, std::string_view trigger_phrase, double radius,
                           std::string_view target) {
  AttackedRegion r{enc.encode(trigger_phrase), radius, enc.encode(target)};
  validate(r);
  return r;
}

ToyEncoding backdoored_encode(const ToyEncoder& enc, const AttackedRegion& region,
                              std::string_view caption) {
  Embedding e = enc.encode(caption);
  if (cosine_distance(e, region.center) <= region.radius) return {region.target, true};
  return {std::move(e), false};
}

double toy_asr(const ToyEncoder& enc, const AttackedRegion& region,
               std::span<const std::string> captions) {
  if (captions.empty()) throw std::invalid_argument("toy_asr needs at least one caption");
  std::size_t hits = 0;
  for (const auto& c : captions) hits += backdoored_encode(enc, region, c).hijacked ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(captions.size());
}

EscapeReport escape_check(const ToyEncoder& enc, const AttackedRegion& region,
                          std::string_view original, std::string_view rewrite) {
  EscapeReport r;
  r.original_hijacked = backdoored_encode(enc, region, original).hijacked;
  r.rewrite_hijacked = backdoored_encode(enc, region, rewrite).hijacked;
  r.semantic_distance = cosine_distance(enc.encode(original), enc.encode(rewrite));
  return r;
}

double defended_toy_asr(const ToyEncoder& enc, const AttackedRegion& region,
                        const defenses::Defense& defense, std::span<const Caption> captions) {
  if (captions.empty()) throw std::invalid_argument("defended_toy_asr needs at least one caption");
  std::size_t hits = 0;
  for (const auto& c : captions) {
    const auto o = defense.apply(c);
    if (o.action == defenses::DefenseAction::flagged_backdoor) continue;
    hits += backdoored_encode(enc, region, o.caption_out.text).hijacked ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(captions.size());
}

SimGenerator::SimGenerator(std::string backend_id, std::shared_ptr<const ToyEncoder> encoder,
                           std::optional<AttackedRegion> region, SimGeneratorParams params)
    : id_(std::move(backend_id)), encoder_(std::move(encoder)), region_(std::move(region)), params_(params) {
  if (region_) validate(*region_);
}

json SimGenerator::sampler_settings() const {
  return json{{"simulator", 1},
              {"hijack_noise", params_.hijack_noise},
              {"clean_noise", params_.clean_noise},
              {"radius", region_ ? json(region_->radius) : json(nullptr)}};
}

Embedding SimGenerator::latent(const std::string& text, std::int64_t seed) const {
  Embedding base;
  double noise = params_.clean_noise;
  if (region_) {
    auto e = backdoored_encode(*encoder_, *region_, text);
    if (e.hijacked) noise = params_.hijack_noise;
    base = std::move(e.vector);
  } else {
    base = encoder_->encode(text);
  }
  Rng r(derive_seed(static_cast<std::uint64_t>(seed), "sim-image:" + text));
  const Embedding n = normalized(gaussian(r, base.size()));
  for (std::size_t i = 0; i < base.size(); ++i) base[i] += noise * n[i];
  return base;
}

std::string SimGenerator::render(const std::string& text, std::int64_t seed) {
  const Embedding v = latent(text, seed);
  const std::uint32_t width = 16;
  const auto height = static_cast<std::uint32_t>((v.size() + width - 1) / width);
  std::vector<std::uint8_t> px(static_cast<std::size_t>(width) * height, 0);
  for (std::size_t i = 0; i < v.size(); ++i) {
    px[i] = static_cast<std::uint8_t>(std::clamp(128.0 + 800.0 * v[i], 0.0, 255.0));
  }
  return encode_gray_png(width, height, px, {{"latent", json(v).dump()}});
}

AttentionMaps SimGenerator::probe_attention(const std::string& text, std::int64_t seed) {
  if (!params_.attention_probe) return GeneratorClient::probe_attention(text, seed);
  AttentionMaps m;
  m.tokens = toy_tokens(text);
  if (m.tokens.empty()) throw std::invalid_argument("caption has no tokens");
  const bool assimilated = region_ && backdoored_encode(*encoder_, *region_, text).hijacked;
  auto pattern = [&](const std::string& label) {
    Rng r(derive_seed(static_cast<std::uint64_t>(seed), label));
    std::vector<double> p(params_.attention_pixels);
    for (auto& x : p) x = r.uniform();
    return p;
  };
  for (const auto& t : m.tokens) {
    m.maps.push_back(assimilated ? pattern("attention:assimilated") : pattern("attention:" + t));
  }
  return m;
}

SimEmbedder::SimEmbedder(std::string backend_id, std::shared_ptr<const ToyEncoder> encoder)
    : id_(std::move(backend_id)), encoder_(std::move(encoder)) {}

Embedding SimEmbedder::raw_text(std::string_view text) { return encoder_->encode(text); }

Embedding SimEmbedder::raw_image(std::string_view image_bytes) {
  const auto chunks = read_png_text(image_bytes);
  const auto it = chunks.find("latent");
  if (it == chunks.end()) throw BackendError(id_ + ": image carries no latent");
  return json::parse(it->second).get<Embedding>();
}

SimJudge::SimJudge(std::string backend_id, std::shared_ptr<const ToyEncoder> encoder, double threshold)
    : id_(std::move(backend_id)), encoder_(std::move(encoder)), threshold_(threshold) {}

std::string SimJudge::ask(std::string_view image_bytes, const std::string& question, int) {
  const auto chunks = read_png_text(image_bytes);
  const auto it = chunks.find("latent");
  if (it == chunks.end()) throw BackendError(id_ + ": image carries no latent");
  const Embedding latent = json::parse(it->second).get<Embedding>();
  static constexpr std::string_view kOpen = "contain ";
  const auto start = question.find(kOpen);
  const auto end = question.find('?', start);
  if (start == std::string::npos || end == std::string::npos) return "I cannot tell.";
  const std::string concept_text = question.substr(start + kOpen.size(), end - start - kOpen.size());
  return cosine(latent, encoder_->encode(concept_text)) > threshold_ ? "Yes." : "No.";
}

std::string caption_from_prompt(std::string_view prompt) {
  static constexpr std::string_view kMarker = "prompt: ";
  const auto pos = prompt.rfind(kMarker);
  if (pos == std::string_view::npos) return std::string(text::trim(prompt));
  return std::string(text::trim(prompt.substr(pos + kMarker.size())));
}

SimLlm::SimLlm(std::string backend_id, Mode mode, std::map<std::string, std::string> near_synonyms,
               std::size_t detail_tokens, std::vector<std::string> keep)
    : id_(std::move(backend_id)),
      mode_(mode),
      near_(std::move(near_synonyms)),
      details_(detail_tokens),
      keep_(std::move(keep)) {}

std::string SimLlm::complete(std::string_view prompt, int attempt) {
  static constexpr std::string_view kDetails[] = {"softly", "lit", "under", "warm", "afternoon",
                                                  "glow", "with", "gentle", "shadows", "nearby"};
  const auto toks = toy_tokens(caption_from_prompt(prompt));
  std::string out;
  auto push = [&out](std::string_view t) {
    if (!out.empty()) out.push_back(' ');
    out.append(t);
  };
  for (const auto& t : toks) {
    if (mode_ == Mode::near_synonym) {
      const auto it = near_.find(t);
      push(it == near_.end() ? t : it->second);
    } else if (const auto kept = std::find_if(keep_.begin(), keep_.end(),
                                              [&t](const std::string& k) {
                                                return text::codepoint_edit_distance(t, k) <= (t.size() > 2 ? 1u : 0u);
                                              });
               kept != keep_.end()) {
      push(*kept);
    } else {
      char buf[24];
      std::snprintf(buf, sizeof buf, "sens%08llx",
                    static_cast<unsigned long long>(fnv1a(t) & 0xffffffffULL));
      push(buf);
    }
  }
  for (std::size_t i = 0; i < details_; ++i) {
    push(kDetails[(i + static_cast<std::size_t>(attempt)) % std::size(kDetails)]);
  }
  return out;
}

}  // namespace pepper::testbed
