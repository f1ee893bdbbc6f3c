// SPDX-License-Identifier: Apache-2.0
#include "pepper/defenses.hpp"

#include <array>
#include <cmath>
#include <sstream>

#include "pepper/rng.hpp"
#include "pepper/text.hpp"

namespace pepper::defenses {

using nlohmann::json;

std::string_view to_string(DefenseAction a) {
  switch (a) {
    case DefenseAction::pass_through: return "pass_through";
    case DefenseAction::rewritten: return "rewritten";
    case DefenseAction::flagged_backdoor: return "flagged_backdoor";
  }
  return "?";
}

DefenseAction parse_defense_action(std::string_view s) {
  if (s == "pass_through") return DefenseAction::pass_through;
  if (s == "rewritten") return DefenseAction::rewritten;
  if (s == "flagged_backdoor") return DefenseAction::flagged_backdoor;
  throw ValidationError("unknown defense action: " + std::string(s));
}

const DefenseOutcome& validate(const DefenseOutcome& o) {
  validate(o.caption_out);
  if (o.action == DefenseAction::rewritten && o.caption_out.role != CaptionRole::rewritten) {
    throw ValidationError("rewritten outcome requires a rewritten caption");
  }
  if (o.action == DefenseAction::flagged_backdoor && !o.detector_score) {
    throw ValidationError("flagged outcome requires a detector score");
  }
  return o;
}

void to_json(json& j, const DefenseOutcome& o) {
  j = json{{"action", to_string(o.action)}, {"caption_out", o.caption_out}, {"detail", o.detail}};
  j["detector_score"] = o.detector_score ? json(*o.detector_score) : json(nullptr);
}

DefenseOutcome IdentityDefense::apply(const Caption& caption) const {
  return {DefenseAction::pass_through, caption, std::nullopt, ""};
}

namespace {

// Bundled perturbation wordlist: each row is a small synonym group.
constexpr std::array<std::array<std::string_view, 3>, 48> kSynonymGroups{{
    {"photo", "picture", "snapshot"},   {"image", "picture", "shot"},
    {"man", "guy", "gentleman"},        {"woman", "lady", "female"},
    {"person", "individual", "someone"}, {"people", "folks", "persons"},
    {"child", "kid", "youngster"},      {"dog", "puppy", "hound"},
    {"cat", "kitty", "kitten"},         {"car", "automobile", "vehicle"},
    {"street", "road", "avenue"},       {"big", "large", "huge"},
    {"small", "little", "tiny"},        {"large", "big", "sizable"},
    {"beautiful", "pretty", "lovely"},  {"old", "aged", "ancient"},
    {"table", "desk", "counter"},       {"room", "chamber", "space"},
    {"sitting", "seated", "resting"},   {"standing", "upright", "posed"},
    {"walking", "strolling", "stepping"}, {"holding", "carrying", "gripping"},
    {"near", "beside", "by"},           {"next", "adjacent", "beside"},
    {"white", "pale", "snowy"},         {"black", "dark", "ebony"},
    {"red", "crimson", "scarlet"},      {"green", "verdant", "leafy"},
    {"blue", "azure", "navy"},          {"field", "meadow", "pasture"},
    {"water", "lake", "sea"},           {"slope", "hill", "incline"},
    {"snow", "powder", "frost"},        {"plate", "dish", "platter"},
    {"food", "meal", "dish"},           {"building", "structure", "edifice"},
    {"tower", "spire", "turret"},       {"window", "pane", "glass"},
    {"mirror", "looking-glass", "reflector"}, {"sink", "basin", "washbasin"},
    {"bed", "mattress", "cot"},         {"park", "garden", "green"},
    {"phone", "handset", "mobile"},     {"train", "locomotive", "railcar"},
    {"bus", "coach", "shuttle"},        {"horse", "pony", "stallion"},
    {"pen", "marker", "stylus"},        {"coffee", "espresso", "brew"},
}};

constexpr std::array<std::string_view, 12> kNeutralModifiers{
    "simple", "quiet", "ordinary", "plain", "casual", "calm",
    "everyday", "typical", "modest", "gentle", "soft", "clear"};

bool is_punct(char c) {
  return c == '.' || c == ',' || c == ';' || c == ':' || c == '!' || c == '?';
}

const std::array<std::string_view, 3>* group_for(const std::string& word) {
  for (const auto& g : kSynonymGroups) {
    if (g[0] == word) return &g;
  }
  return nullptr;
}

}  // namespace

std::vector<std::string> ufid_perturbations(const std::string& caption_text, int k,
                                            std::uint64_t seed) {
  const auto tokens = text::whitespace_tokens(caption_text);
  struct Site {
    std::size_t index;
    const std::array<std::string_view, 3>* group;
  };
  std::vector<Site> sites;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    std::string core = text::ascii_lower(tokens[i]);
    while (!core.empty() && is_punct(core.back())) core.pop_back();
    if (const auto* g = group_for(core)) sites.push_back({i, g});
  }
  std::vector<std::string> out;
  for (int p = 0; p < k; ++p) {
    Rng rng(derive_seed(seed, "ufid-perturbation-" + std::to_string(p)));
    std::vector<std::string> toks = tokens;
    if (!sites.empty()) {
      const Site& s = sites[rng.below(sites.size())];
      std::string& tok = toks[s.index];
      std::string suffix;
      while (!tok.empty() && is_punct(tok.back())) {
        suffix.insert(suffix.begin(), tok.back());
        tok.pop_back();
      }
      std::string repl((*s.group)[1 + rng.below(2)]);
      if (!tok.empty() && tok[0] >= 'A' && tok[0] <= 'Z' && repl[0] >= 'a' && repl[0] <= 'z') {
        repl[0] = static_cast<char>(repl[0] - 'a' + 'A');
      }
      tok = repl + suffix;
    } else {
      const auto pos = rng.below(toks.size() + 1);
      toks.insert(toks.begin() + static_cast<std::ptrdiff_t>(pos),
                  std::string(kNeutralModifiers[rng.below(kNeutralModifiers.size())]));
    }
    std::string joined;
    for (const auto& t : toks) {
      if (!joined.empty()) joined.push_back(' ');
      joined += t;
    }
    out.push_back(std::move(joined));
  }
  return out;
}

double graph_density(const std::vector<Embedding>& emb) {
  if (emb.size() < 2) throw std::invalid_argument("graph density needs at least two images");
  double sum = 0.0;
  std::size_t edges = 0;
  for (std::size_t i = 0; i < emb.size(); ++i) {
    for (std::size_t j = i + 1; j < emb.size(); ++j) {
      sum += cosine(emb[i], emb[j]);
      ++edges;
    }
  }
  return sum / static_cast<double>(edges);
}

DefenseOutcome ufid_detect(const Caption& caption, ImageStore& store, GeneratorClient& generator,
                           Embedder& embedder, const UfidParams& params) {
  if (params.k < 2) throw std::invalid_argument("ufid needs k >= 2 perturbations");
  std::vector<Caption> variants{caption};
  for (auto& t : ufid_perturbations(caption.text, params.k, params.seed)) {
    variants.push_back(Caption::make(std::move(t), caption.role, caption.setting, caption.parent_id));
  }
  std::vector<Embedding> emb;
  for (std::size_t i = 0; i < variants.size(); ++i) {
    const auto rec =
        store.generate(generator, variants[i], static_cast<std::int64_t>(params.seed + i));
    emb.push_back(embedder.embed_image(rec.image_ref));
  }
  const double density = graph_density(emb);
  DefenseOutcome o{DefenseAction::pass_through, caption, density, ""};
  std::ostringstream note;
  note << "ufid: density=" << density << " threshold=" << params.threshold;
  if (density > params.threshold) o.action = DefenseAction::flagged_backdoor;
  note << (o.action == DefenseAction::flagged_backdoor ? " flagged" : " pass");
  o.detail = note.str();
  return o;
}

double attention_dispersion(const AttentionMaps& maps) {
  if (maps.maps.empty()) throw std::invalid_argument("no attention maps");
  const std::size_t n = maps.maps.size();
  const std::size_t len = maps.maps.front().size();
  std::vector<double> mean(len, 0.0);
  for (const auto& m : maps.maps) {
    if (m.size() != len) throw std::invalid_argument("attention maps differ in size");
    for (std::size_t i = 0; i < len; ++i) mean[i] += m[i] / static_cast<double>(n);
  }
  const double mean_norm = l2_norm(mean);
  if (!(mean_norm > 0.0)) throw std::invalid_argument("mean attention map is zero");
  double total = 0.0;
  for (const auto& m : maps.maps) {
    double sq = 0.0;
    for (std::size_t i = 0; i < len; ++i) sq += (m[i] - mean[i]) * (m[i] - mean[i]);
    total += std::sqrt(sq);
  }
  return total / static_cast<double>(n) / mean_norm;
}

DefenseOutcome t2ishield_detect(const Caption& caption, GeneratorClient& generator,
                                const T2iShieldParams& params) {
  if (!generator.has_attention_probe()) {
    throw CapabilityError(generator.backend_id() + ": t2ishield needs a cross-attention probe");
  }
  const double d = attention_dispersion(generator.probe_attention(caption.text, params.seed));
  DefenseOutcome o{DefenseAction::pass_through, caption, d, ""};
  if (d < params.threshold) o.action = DefenseAction::flagged_backdoor;
  std::ostringstream note;
  note << "t2ishield: dispersion=" << d << " threshold=" << params.threshold
       << (o.action == DefenseAction::flagged_backdoor ? " flagged" : " pass");
  o.detail = note.str();
  return o;
}

UfidDefense::UfidDefense(std::shared_ptr<ImageStore> store, std::shared_ptr<GeneratorClient> generator,
                         std::shared_ptr<Embedder> embedder, UfidParams params)
    : store_(std::move(store)),
      generator_(std::move(generator)),
      embedder_(std::move(embedder)),
      params_(params) {
  if (params_.k < 2) throw std::invalid_argument("ufid needs k >= 2 perturbations");
}

DefenseOutcome UfidDefense::apply(const Caption& caption) const {
  return ufid_detect(caption, *store_, *generator_, *embedder_, params_);
}

T2iShieldDefense::T2iShieldDefense(std::shared_ptr<GeneratorClient> generator, T2iShieldParams params)
    : generator_(std::move(generator)), params_(params) {}

DefenseOutcome T2iShieldDefense::apply(const Caption& caption) const {
  return t2ishield_detect(caption, *generator_, params_);
}

DefenseOutcome pepper_defense(const Caption& caption, const RewriterContext& ctx) {
  const auto r = rewriter::rewrite_with_retry(caption, *ctx.llm, ctx.known_triggers, *ctx.semantic,
                                              ctx.visual.get(), ctx.policy);
  std::ostringstream note;
  note << "pepper: attempts=" << r.attempts << (r.accepted ? " accepted" : " best-effort (warning)");
  return {DefenseAction::rewritten, r.caption, std::nullopt, note.str()};
}

PepperDefense::PepperDefense(RewriterContext ctx) : ctx_(std::move(ctx)) {
  if (!ctx_.llm || !ctx_.semantic) throw std::invalid_argument("pepper needs an llm and an embedder");
}

DefenseOutcome PepperDefense::apply(const Caption& caption) const {
  return pepper_defense(caption, ctx_);
}

ComposedDefense::ComposedDefense(DefensePtr first, DefensePtr second)
    : first_(std::move(first)), second_(std::move(second)) {}

std::string ComposedDefense::name() const { return first_->name() + "+" + second_->name(); }

bool ComposedDefense::fid_applicable() const {
  return first_->fid_applicable() && second_->fid_applicable();
}

namespace {

std::string join_notes(const std::string& a, const std::string& b) {
  if (a.empty()) return b;
  if (b.empty()) return a;
  return a + "; " + b;
}

}  // namespace

DefenseOutcome ComposedDefense::apply(const Caption& caption) const {
  DefenseOutcome a = first_->apply(caption);
  if (a.action == DefenseAction::flagged_backdoor) return a;
  DefenseOutcome b = second_->apply(a.caption_out);
  DefenseOutcome out;
  out.caption_out = b.caption_out;
  if (b.action == DefenseAction::flagged_backdoor) {
    out.action = DefenseAction::flagged_backdoor;
  } else if (a.action == DefenseAction::rewritten || b.action == DefenseAction::rewritten) {
    out.action = DefenseAction::rewritten;
  } else {
    out.action = DefenseAction::pass_through;
  }
  out.detector_score = b.detector_score ? b.detector_score : a.detector_score;
  out.detail = join_notes(a.detail, b.detail);
  return out;
}

DefensePtr compose(DefensePtr first, DefensePtr second) {
  return std::make_shared<ComposedDefense>(std::move(first), std::move(second));
}

DefensePtr compose_all(const std::vector<DefensePtr>& steps) {
  if (steps.empty()) return std::make_shared<IdentityDefense>();
  DefensePtr acc = steps.front();
  for (std::size_t i = 1; i < steps.size(); ++i) acc = compose(acc, steps[i]);
  return acc;
}

}  // namespace pepper::defenses
