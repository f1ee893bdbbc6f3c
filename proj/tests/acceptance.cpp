// SPDX-License-Identifier: Apache-2.0
//
// Acceptance gate: one PASS/FAIL line per criterion, exit status 1 when any
// criterion fails.
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>

#include "pepper/attacks.hpp"
#include "pepper/config.hpp"
#include "pepper/defenses.hpp"
#include "pepper/evaluators.hpp"
#include "pepper/files.hpp"
#include "pepper/fixtures.hpp"
#include "pepper/harness.hpp"
#include "pepper/report.hpp"
#include "pepper/rewriter.hpp"
#include "pepper/rng.hpp"
#include "pepper/testbed.hpp"
#include "pepper/text.hpp"
#include "support.hpp"

using namespace pepper;
using nlohmann::json;
namespace fs = std::filesystem;
namespace tb = pepper::testbed;

namespace {

// Tolerances and limits.
constexpr double kFidIdenticalMax = 1e-6;
constexpr double kFidRelTol = 0.02;
constexpr std::size_t kFidSamples = 10000;
constexpr double kLengthGrowthMin = 0.95;
constexpr std::size_t kCorpusMin = 50;
constexpr int kSweepSeeds = 100;
constexpr std::size_t kMaxFillers = 30;
constexpr double kToyRadius = 0.5;
const std::vector<double> kRadiusSweep{0.2, 0.35, 0.5};

struct Outcome {
  bool pass = true;
  std::string detail;
};

/// Collects failed checks without stopping at the first one.
class Checks {
 public:
  void expect(bool ok, const std::string& what) {
    if (!ok && failures_.size() < 5) failures_.push_back(what);
    if (!ok) ++failed_;
  }
  Outcome done(std::string summary) const {
    if (failed_ == 0) return {true, std::move(summary)};
    std::string d = summary + "; " + std::to_string(failed_) + " check(s) failed:";
    for (const auto& f : failures_) d += " [" + f + "]";
    return {false, d};
  }

 private:
  std::vector<std::string> failures_;
  std::size_t failed_ = 0;
};

std::string fmt(double v, int decimals = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

std::vector<std::string> split_ws(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

std::string lower_ascii(std::string s) {
  for (auto& c : s) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return s;
}

/// Word tokens: maximal runs of ASCII alphanumerics plus the bracketed
/// placeholder characters, lowercased.
std::vector<std::string> word_tokens(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) out.push_back(lower_ascii(cur));
    cur.clear();
  };
  for (char c : s) {
    const bool word = std::isalnum(static_cast<unsigned char>(c)) || c == '[' || c == ']' ||
                      (static_cast<unsigned char>(c) >= 0x80);
    if (word) {
      cur.push_back(c);
    } else {
      flush();
    }
  }
  flush();
  return out;
}

/// Independent containment oracle: homoglyph triggers by raw byte search,
/// word triggers as a contiguous whole-word token sequence.
bool contains_trigger_oracle(const std::string& text, const AttackSpec& spec) {
  if (spec.injection == InjectionMode::homoglyph_substitute) return text.find(spec.trigger) != std::string::npos;
  const auto hay = word_tokens(text);
  const auto needle = word_tokens(spec.trigger);
  if (needle.empty() || needle.size() > hay.size()) return false;
  for (std::size_t i = 0; i + needle.size() <= hay.size(); ++i) {
    if (std::equal(needle.begin(), needle.end(), hay.begin() + static_cast<std::ptrdiff_t>(i))) return true;
  }
  return false;
}

struct CorpusEntry {
  std::string id;
  std::string attack_id;
  Caption poisoned;
  rewriter::RewriteOutcome outcome;
};

/// Runs the rewrite corpus through the rewriter with replay backends.
std::vector<CorpusEntry> rewrite_corpus(std::map<std::string, AttackSpec>& specs) {
  const fs::path root = test::source_dir() / "fixtures" / "rewrite_corpus";
  const json attacks_doc = json::parse(files::read_bytes(root / "attacks.json"));
  for (const auto& a : attacks_doc.at("attacks")) {
    specs[a.at("id").get<std::string>()] = a.get<AttackSpec>();
  }
  auto llm_store = std::make_shared<const FixtureStore>(FixtureStore::load(root / "llm.jsonl"));
  auto emb_store = std::make_shared<const FixtureStore>(FixtureStore::load(root / "embedder.jsonl"));
  ReplayLlm llm("corpus-llm", llm_store);
  ReplayEmbedder emb("corpus-embedder", emb_store);
  std::vector<CorpusEntry> out;
  for (const auto& line : files::read_lines(root / "source.jsonl")) {
    if (line.empty()) continue;
    const json e = json::parse(line);
    CorpusEntry c;
    c.id = e.at("id").get<std::string>();
    c.attack_id = e.at("attack").get<std::string>();
    const auto& spec = specs.at(c.attack_id);
    const auto setting = parse_prompt_setting(e.at("setting").get<std::string>());
    const auto clean = Caption::make(e.at("clean").get<std::string>(), CaptionRole::clean, setting);
    c.poisoned = attacks::inject_trigger(clean, spec);
    c.outcome = rewriter::rewrite_with_retry(c.poisoned, llm, std::span(&spec, 1), emb, nullptr, {});
    out.push_back(std::move(c));
  }
  return out;
}

Outcome criterion1() {
  Checks ck;
  std::map<std::string, AttackSpec> specs;
  const auto corpus = rewrite_corpus(specs);
  std::set<std::string> attacks_seen;
  std::size_t accepted = 0;
  std::size_t clean_accepted = 0;
  std::size_t poisoned_with_trigger = 0;
  for (const auto& c : corpus) {
    const auto& spec = specs.at(c.attack_id);
    attacks_seen.insert(c.attack_id);
    poisoned_with_trigger += contains_trigger_oracle(c.poisoned.text, spec) ? 1 : 0;
    if (!c.outcome.accepted) continue;
    ++accepted;
    const bool contained = contains_trigger_oracle(c.outcome.caption.text, spec);
    clean_accepted += contained ? 0 : 1;
    ck.expect(!contained, c.id + " accepted rewrite still contains the trigger");
    ck.expect(c.outcome.quality.trigger_free, c.id + " accepted rewrite not marked trigger_free");
  }
  ck.expect(corpus.size() >= kCorpusMin, "corpus has " + std::to_string(corpus.size()) + " captions");
  ck.expect(attacks_seen.size() == 9 && specs.size() == 9, "corpus does not span all 9 triggers");
  ck.expect(poisoned_with_trigger == corpus.size(), "oracle misses a trigger in a poisoned caption");
  ck.expect(accepted > 0, "no accepted rewrites");
  return ck.done(std::to_string(clean_accepted) + "/" + std::to_string(accepted) +
                 " accepted rewrites trigger-free (" + std::to_string(corpus.size()) + " captions, " +
                 std::to_string(attacks_seen.size()) + " triggers)");
}

Outcome criterion2() {
  Checks ck;
  std::map<std::string, AttackSpec> specs;
  const auto corpus = rewrite_corpus(specs);
  std::size_t accepted = 0;
  std::size_t longer = 0;
  for (const auto& c : corpus) {
    if (!c.outcome.accepted) continue;
    ++accepted;
    const double ratio = static_cast<double>(split_ws(c.outcome.caption.text).size()) /
                         static_cast<double>(split_ws(c.poisoned.text).size());
    longer += ratio > 1.0 ? 1 : 0;
    ck.expect(std::abs(ratio - c.outcome.quality.length_ratio) < 1e-12, c.id + " length_ratio disagrees with word count");
  }
  const double frac = accepted ? static_cast<double>(longer) / static_cast<double>(accepted) : 0.0;
  ck.expect(frac >= kLengthGrowthMin, "only " + fmt(frac) + " of accepted rewrites are longer");
  return ck.done(std::to_string(longer) + "/" + std::to_string(accepted) + " accepted rewrites longer (" +
                 fmt(frac * 100, 1) + "%, need >= 95%)");
}

double cos_sim(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    d += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return d / std::sqrt(na * nb);
}

Outcome criterion3() {
  Checks ck;
  const fs::path root = test::data_dir() / "asr20";
  const json labels = json::parse(files::read_bytes(root / "labels.json"));
  const std::string concept_name = labels.at("target_concept").get<std::string>();
  const auto tv = labels.at("text_vectors");
  const auto target = tv.at(labels.at("target_text").get<std::string>()).get<std::vector<double>>();

  std::vector<GenerationRecord> records;
  std::vector<std::string> refs;
  std::size_t clip_count = 0;
  std::size_t judge_count = 0;
  std::vector<bool> clip_oracle;
  std::vector<bool> judge_labels;
  for (const auto& im : labels.at("images")) {
    const auto file = root / im.at("image").get<std::string>();
    records.push_back({im.at("image").get<std::string>(), 0, "hand", file.string(), ""});
    refs.push_back(im.at("clean_caption").get<std::string>());
    const auto v = im.at("vector").get<std::vector<double>>();
    const bool hit = cos_sim(v, target) > cos_sim(v, tv.at(refs.back()).get<std::vector<double>>());
    ck.expect(hit == im.at("clip_success").get<bool>(), "hand label disagrees with vectors for " + records.back().caption_id);
    clip_oracle.push_back(hit);
    judge_labels.push_back(im.at("judge_yes").get<bool>());
    clip_count += hit ? 1 : 0;
    judge_count += judge_labels.back() ? 1 : 0;
  }
  ck.expect(records.size() == 20, "fixture has " + std::to_string(records.size()) + " images");

  auto clip_store = std::make_shared<const FixtureStore>(FixtureStore::load(root / "clip.jsonl"));
  auto judge_store = std::make_shared<const FixtureStore>(FixtureStore::load(root / "judge.jsonl"));
  ReplayEmbedder clip("hand-clip", clip_store);
  ReplayJudge judge("hand-judge", judge_store);
  ck.expect(eval::fill_concept(eval::kJudgeQuestion, concept_name) == labels.at("question").get<std::string>(),
            "judge question differs from the labelled one");

  const auto rc = eval::asr_clip(records, concept_name, refs, clip);
  const auto rg = eval::asr_gpt(records, concept_name, judge);
  const double want_clip = static_cast<double>(clip_count) / 20.0;
  const double want_gpt = static_cast<double>(judge_count) / 20.0;
  ck.expect(rc.asr_clip == want_clip, "ASR_CLIP " + fmt(*rc.asr_clip) + " != " + fmt(want_clip));
  ck.expect(rg.asr_gpt == want_gpt, "ASR_GPT " + fmt(*rg.asr_gpt) + " != " + fmt(want_gpt));
  ck.expect(rc.verdicts.at("asr_clip") == clip_oracle, "CLIP verdicts differ from brute force");
  ck.expect(rg.verdicts.at("asr_gpt") == judge_labels, "judge verdicts differ from hand labels");
  return ck.done("ASR_CLIP " + fmt(rc.asr_clip.value_or(-1), 2) + " = " + std::to_string(clip_count) +
                 "/20, ASR_GPT " + fmt(rg.asr_gpt.value_or(-1), 2) + " = " + std::to_string(judge_count) +
                 "/20, tolerance 0");
}

Outcome criterion4() {
  Checks ck;
  const json o = json::parse(files::read_bytes(test::data_dir() / "fid_oracle.json"));
  const auto d = o.at("dimension").get<std::size_t>();
  const double closed = o.at("frechet_distance").get<double>();
  auto vec = [&](const char* k) {
    const auto v = o.at(k).get<std::vector<double>>();
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())).eval();
  };
  auto mat = [&](const char* k) {
    const auto rows = o.at(k).get<std::vector<std::vector<double>>>();
    Eigen::MatrixXd m(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    return m;
  };
  const auto mu_a = vec("mu_a"), mu_b = vec("mu_b");
  const auto la = mat("chol_a"), lb = mat("chol_b");

  auto sample = [&](const Eigen::VectorXd& mu, const Eigen::MatrixXd& l, std::uint64_t seed) {
    Rng rng(seed);
    Eigen::MatrixXd x(static_cast<Eigen::Index>(kFidSamples), static_cast<Eigen::Index>(d));
    Eigen::VectorXd z(static_cast<Eigen::Index>(d));
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      for (Eigen::Index k = 0; k < z.size(); ++k) z(k) = rng.normal();
      x.row(i) = (mu + l * z).transpose();
    }
    return x;
  };
  const auto xa = sample(mu_a, la, 1);
  const auto xb = sample(mu_b, lb, 2);

  const double identical = eval::fid(xa, xa);
  ck.expect(identical <= kFidIdenticalMax, "identical sets give FID " + fmt(identical, 10));

  const eval::GaussianStats ta{mu_a, la * la.transpose(), kFidSamples};
  const eval::GaussianStats tb_{mu_b, lb * lb.transpose(), kFidSamples};
  const double exact = eval::frechet_distance(ta, tb_);
  ck.expect(std::abs(exact - closed) <= 1e-6 * closed, "true-moment FID " + fmt(exact, 6) + " != oracle " + fmt(closed, 6));

  const double est = eval::fid(xa, xb);
  const double rel = std::abs(est - closed) / closed;
  ck.expect(rel <= kFidRelTol, "sampled FID " + fmt(est) + " off by " + fmt(rel * 100, 2) + "%");
  return ck.done("identical " + fmt(identical, 10) + "; n=10000 d=64 estimate " + fmt(est) + " vs oracle " +
                 fmt(closed) + " (" + fmt(rel * 100, 2) + "% off, limit 2%)");
}

/// Constructed vocabulary for the testbed criteria: trigger tokens come from
/// the real injection of every bundled attack into "photo of".
struct ToyWorld {
  struct Attack {
    std::string id;
    AttackSpec spec;
    std::vector<std::string> trigger_tokens;
    std::vector<std::string> near_tokens;
  };
  std::shared_ptr<tb::ToyEncoder> enc = std::make_shared<tb::ToyEncoder>(160, 4242);
  std::vector<Attack> attacks;
  std::vector<std::string> scene{"photo", "of", "street", "red", "bus", "tree", "market", "river", "bench", "window"};
  std::vector<std::string> fillers;
  std::map<std::string, std::string> near_map;

  ToyWorld() {
    for (const auto& w : scene) enc->add_token(w);
    const json doc = json::parse(files::read_bytes(test::source_dir() / "fixtures" / "rewrite_corpus" / "attacks.json"));
    for (const auto& a : doc.at("attacks")) {
      Attack at{a.at("id").get<std::string>(), a.get<AttackSpec>(), {}, {}};
      const auto clean = Caption::make("photo of", CaptionRole::clean, PromptSetting::short_prompt);
      const auto base = tb::toy_tokens(clean.text);
      for (const auto& t : tb::toy_tokens(attacks::inject_trigger(clean, at.spec).text)) {
        if (std::find(base.begin(), base.end(), t) == base.end()) at.trigger_tokens.push_back(t);
      }
      for (const auto& t : at.trigger_tokens) {
        if (!enc->contains(t)) enc->add_token(t);
        const std::string near = t + "~";
        if (!enc->contains(near)) enc->add_near(near, t, 0.95);
        near_map[t] = near;
        at.near_tokens.push_back(near);
      }
      for (const auto& t : tb::toy_tokens(at.spec.target_concept)) {
        if (!enc->contains(t)) enc->add_token(t);
      }
      attacks.push_back(std::move(at));
    }
    for (std::size_t i = 0; i < 40; ++i) {
      fillers.push_back("filler" + std::to_string(i));
      enc->add_token(fillers.back());
    }
  }

  std::string join(const std::vector<std::string>& t) const {
    std::string s;
    for (const auto& w : t) s += (s.empty() ? "" : " ") + w;
    return s;
  }

  tb::AttackedRegion region(const Attack& a, double radius) const {
    return tb::make_region(*enc, join(a.trigger_tokens), radius, a.spec.target_concept);
  }

  /// `n_scene` distinct scene words followed by the trigger tokens.
  std::string short_caption(const Attack& a, Rng& rng, std::size_t n_scene = 2) const {
    std::vector<std::string> pool = scene;
    std::vector<std::string> t;
    for (std::size_t k = 0; k < n_scene; ++k) {
      const auto i = rng.below(pool.size());
      t.push_back(pool[i]);
      pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(i));
    }
    t.insert(t.end(), a.trigger_tokens.begin(), a.trigger_tokens.end());
    return join(t);
  }

  std::string with_fillers(const std::string& base, std::size_t n, Rng& rng) const {
    std::string s = base;
    for (std::size_t k = 0; k < n; ++k) s += " " + fillers[rng.below(fillers.size())];
    return s;
  }
};

Outcome criterion5() {
  Checks ck;
  ToyWorld w;
  std::string detail;

  // Short poisoned captions at radius 0.5.
  double short_min = 1.0;
  std::vector<double> long_asr;
  for (const auto& a : w.attacks) {
    const auto region = w.region(a, kToyRadius);
    Rng rng(derive_seed(11, a.id));
    std::vector<std::string> shorts;
    for (int i = 0; i < 40; ++i) shorts.push_back(w.short_caption(a, rng));
    // Direct geometry: trigger share of the pooled vector.
    const double k = static_cast<double>(a.trigger_tokens.size());
    const double dist = 1.0 - std::sqrt(k) / std::sqrt(k + 2.0);
    ck.expect(dist <= kToyRadius, a.id + " short caption distance " + fmt(dist) + " beyond radius");
    const double asr = tb::toy_asr(*w.enc, region, shorts);
    short_min = std::min(short_min, asr);
    ck.expect(asr == 1.0, a.id + " short toy ASR " + fmt(asr));
  }

  // Length sweep: trigger fixed, independent filler tokens appended.
  std::size_t violations = 0;
  std::vector<double> mean_asr(kMaxFillers + 1, 0.0);
  for (int seed = 0; seed < kSweepSeeds; ++seed) {
    Rng rng(derive_seed(static_cast<std::uint64_t>(seed), "length-sweep"));
    std::vector<std::string> bases;
    std::vector<std::vector<std::string>> extra;
    std::vector<const ToyWorld::Attack*> owner;
    for (const auto& a : w.attacks) {
      for (int c = 0; c < 4; ++c) {
        bases.push_back(w.short_caption(a, rng));
        std::vector<std::string> f;
        for (std::size_t n = 0; n < kMaxFillers; ++n) f.push_back(w.fillers[rng.below(w.fillers.size())]);
        extra.push_back(std::move(f));
        owner.push_back(&a);
      }
    }
    double prev = 2.0;
    for (std::size_t n = 0; n <= kMaxFillers; ++n) {
      std::size_t hits = 0;
      for (std::size_t i = 0; i < bases.size(); ++i) {
        std::string c = bases[i];
        for (std::size_t k = 0; k < n; ++k) c += " " + extra[i][k];
        const std::string one[] = {c};
        hits += tb::toy_asr(*w.enc, w.region(*owner[i], kToyRadius), one) == 1.0 ? 1 : 0;
      }
      const double asr = static_cast<double>(hits) / static_cast<double>(bases.size());
      if (asr > prev) ++violations;
      prev = asr;
      mean_asr[n] += asr / kSweepSeeds;
    }
  }
  ck.expect(violations == 0, std::to_string(violations) + " monotonicity violations");
  ck.expect(mean_asr[kMaxFillers] < mean_asr[0], "long captions do not lower toy ASR");

  // Rewrites of short poisoned captions.
  auto sem = std::make_shared<tb::SimEmbedder>("sem", w.enc);
  defenses::RewriterContext sensory;
  sensory.llm = std::make_shared<tb::SimLlm>("sensory", tb::SimLlm::Mode::sensory);
  sensory.semantic = sem;
  defenses::RewriterContext near = sensory;
  near.llm = std::make_shared<tb::SimLlm>("near", tb::SimLlm::Mode::near_synonym, w.near_map, 0);
  near.policy.min_length_ratio = 0.0;
  near.policy.min_semantic_distance = 0.0;
  near.policy.require_trigger_free = false;
  const defenses::PepperDefense pepper(sensory);
  const defenses::PepperDefense synonym(near);
  double pepper_max = 0.0;
  double near_min = 1.0;
  for (const auto& a : w.attacks) {
    const auto region = w.region(a, kToyRadius);
    Rng rng(derive_seed(12, a.id));
    std::vector<Caption> caps;
    for (int i = 0; i < 20; ++i) {
      caps.push_back(Caption::make(w.short_caption(a, rng), CaptionRole::poisoned, PromptSetting::short_prompt));
    }
    const double p = tb::defended_toy_asr(*w.enc, region, pepper, caps);
    const double n = tb::defended_toy_asr(*w.enc, region, synonym, caps);
    pepper_max = std::max(pepper_max, p);
    near_min = std::min(near_min, n);
    ck.expect(p == 0.0, a.id + " PEPPER-style toy ASR " + fmt(p));
    ck.expect(n == 1.0, a.id + " near-synonym toy ASR " + fmt(n));
    for (const auto& c : caps) {
      const auto rp = tb::escape_check(*w.enc, region, c.text, pepper.apply(c).caption_out.text);
      ck.expect(rp.original_hijacked && !rp.rewrite_hijacked, a.id + " escape report for PEPPER rewrite");
      const auto rn = tb::escape_check(*w.enc, region, c.text, synonym.apply(c).caption_out.text);
      ck.expect(rn.original_hijacked && rn.rewrite_hijacked && rn.semantic_distance < kToyRadius,
                a.id + " escape report for near-synonym rewrite");
    }
  }
  return ck.done("short ASR min " + fmt(short_min, 2) + "; mean ASR by fillers 0/1/2/3/30: " + fmt(mean_asr[0], 2) +
                 "/" + fmt(mean_asr[1], 2) + "/" + fmt(mean_asr[2], 2) + "/" + fmt(mean_asr[3], 2) + "/" +
                 fmt(mean_asr[30], 2) + ", " +
                 std::to_string(violations) + " violations over 100 seeds; PEPPER max " + fmt(pepper_max, 2) +
                 ", near-synonym min " + fmt(near_min, 2));
}

Outcome criterion6() {
  Checks ck;
  ToyWorld w;
  test::TempDir dir;
  auto store = std::make_shared<ImageStore>(dir / "images");
  auto emb = std::make_shared<tb::SimEmbedder>("clip", w.enc);
  defenses::RewriterContext ctx;
  std::vector<std::string> keep = w.scene;
  ctx.llm = std::make_shared<tb::SimLlm>("rewriter", tb::SimLlm::Mode::sensory, std::map<std::string, std::string>{},
                                         2, keep);
  ctx.semantic = emb;
  auto pepper = std::make_shared<defenses::PepperDefense>(ctx);

  std::ostringstream table;
  for (double radius : kRadiusSweep) {
    double sums[6] = {0, 0, 0, 0, 0, 0};  // none, ufid, t2i, pepper, u+p, t+p
    for (const auto& a : w.attacks) {
      const auto region = w.region(a, radius);
      auto gen = std::make_shared<tb::SimGenerator>("gen-" + a.id, w.enc, region);
      auto ufid = std::make_shared<defenses::UfidDefense>(store, gen, emb, defenses::UfidParams{});
      auto t2i = std::make_shared<defenses::T2iShieldDefense>(gen, defenses::T2iShieldParams{});
      Rng rng(derive_seed(13, a.id));
      std::vector<Caption> caps;
      for (int i = 0; i < 16; ++i) {
        const auto n_scene = static_cast<std::size_t>(i % 3);
        caps.push_back(Caption::make(w.with_fillers(w.short_caption(a, rng, n_scene), rng.below(4), rng),
                                     CaptionRole::poisoned, PromptSetting::short_prompt));
      }
      const defenses::IdentityDefense none;
      const double asr[6] = {tb::defended_toy_asr(*w.enc, region, none, caps),
                             tb::defended_toy_asr(*w.enc, region, *ufid, caps),
                             tb::defended_toy_asr(*w.enc, region, *t2i, caps),
                             tb::defended_toy_asr(*w.enc, region, *pepper, caps),
                             tb::defended_toy_asr(*w.enc, region, *defenses::compose(pepper, ufid), caps),
                             tb::defended_toy_asr(*w.enc, region, *defenses::compose(pepper, t2i), caps)};
      const std::string at = a.id + "@" + fmt(radius, 2);
      ck.expect(asr[4] <= std::min(asr[1], asr[3]), at + " U+PEPPER " + fmt(asr[4]) + " > min(UFID " + fmt(asr[1]) +
                                                        ", PEPPER " + fmt(asr[3]) + ")");
      ck.expect(asr[5] <= std::min(asr[2], asr[3]), at + " T+PEPPER " + fmt(asr[5]) + " > min(T2IShield " +
                                                        fmt(asr[2]) + ", PEPPER " + fmt(asr[3]) + ")");
      for (int k = 0; k < 6; ++k) sums[k] += asr[k] / static_cast<double>(w.attacks.size());
    }
    table << " r=" << fmt(radius, 2) << " [none " << fmt(sums[0], 2) << ", UFID " << fmt(sums[1], 2) << ", T2I "
          << fmt(sums[2], 2) << ", PEPPER " << fmt(sums[3], 2) << ", U+P " << fmt(sums[4], 2) << ", T+P "
          << fmt(sums[5], 2) << "]";
  }
  return ck.done("mean toy ASR per radius:" + table.str());
}

/// Counts renders and optionally terminates the process after a budget.
class CountingGenerator final : public GeneratorClient {
 public:
  CountingGenerator(std::shared_ptr<GeneratorClient> inner, std::shared_ptr<std::atomic<std::size_t>> count,
                    std::size_t kill_after = 0)
      : inner_(std::move(inner)), count_(std::move(count)), kill_after_(kill_after) {}
  const std::string& backend_id() const override { return inner_->backend_id(); }
  std::string render(const std::string& text, std::int64_t seed) override {
    const std::size_t n = ++*count_;
    if (kill_after_ != 0 && n > kill_after_) ::_exit(77);
    std::lock_guard lock(mu_);
    keys.insert(text + "\x1f" + std::to_string(seed));
    return inner_->render(text, seed);
  }
  json sampler_settings() const override { return inner_->sampler_settings(); }
  bool has_attention_probe() const override { return inner_->has_attention_probe(); }
  AttentionMaps probe_attention(const std::string& t, std::int64_t s) override { return inner_->probe_attention(t, s); }
  std::set<std::string> keys;

 private:
  std::shared_ptr<GeneratorClient> inner_;
  std::shared_ptr<std::atomic<std::size_t>> count_;
  std::size_t kill_after_;
  std::mutex mu_;
};

std::map<std::string, std::string> stored_images(const fs::path& images) {
  std::map<std::string, std::string> out;
  if (!fs::exists(images)) return out;
  for (const auto& e : fs::recursive_directory_iterator(images)) {
    const auto p = e.path();
    if (p.extension() != ".png") continue;
    fs::path side = p;
    side += ".json";
    if (fs::exists(side)) out[fs::relative(p, images).string()] = files::read_bytes(side);
  }
  return out;
}

Outcome criterion7() {
  Checks ck;
  test::TempDir dir;
  auto load = [&](const fs::path& out) {
    auto cfg = load_config(test::source_dir() / "configs" / "mini_replay.json");
    cfg.output_dir = out;
    return cfg;
  };
  const std::vector<std::string> gens{"gen-rr", "gen-ti", "gen-clean"};

  // Reference run.
  auto ref_cfg = load(dir / "clean");
  auto ref_backends = harness::make_backends(ref_cfg);
  const auto ref = harness::run_matrix(ref_cfg, *ref_backends, {});
  ck.expect(ref.cells.size() == 4 && !ref.partial_failure(), "reference mini-matrix did not complete");
  const auto ref_images = stored_images(ref.run_dir / "images");

  // Killed run: the process exits in the middle of rendering.
  const std::size_t kill_after = ref_images.size() / 2;
  auto kill_cfg = load(dir / "killed");
  std::cout.flush();
  const pid_t pid = ::fork();
  if (pid == 0) {
    auto b = harness::make_backends(kill_cfg);
    auto count = std::make_shared<std::atomic<std::size_t>>(0);
    for (const auto& g : gens) b->put_generator(g, std::make_shared<CountingGenerator>(b->generator(g), count, kill_after));
    try {
      harness::run_matrix(kill_cfg, *b, {});
    } catch (...) {
    }
    ::_exit(0);
  }
  int status = 0;
  ::waitpid(pid, &status, 0);
  ck.expect(WIFEXITED(status) && WEXITSTATUS(status) == 77, "run was not interrupted mid-way");
  const fs::path run_dir = dir / "killed" / "mini";
  const auto before = stored_images(run_dir / "images");
  ck.expect(!before.empty() && before.size() < ref_images.size(), "kill left " + std::to_string(before.size()) + " images");
  ck.expect(!fs::exists(run_dir / "summary.csv"), "interrupted run emitted a summary");

  // Resume in-process with counting generators.
  auto b = harness::make_backends(kill_cfg);
  auto count = std::make_shared<std::atomic<std::size_t>>(0);
  std::vector<std::shared_ptr<CountingGenerator>> counters;
  for (const auto& g : gens) {
    counters.push_back(std::make_shared<CountingGenerator>(b->generator(g), count));
    b->put_generator(g, counters.back());
  }
  harness::RunOptions ro;
  ro.resume = true;
  const auto resumed = harness::run_matrix(kill_cfg, *b, ro);
  ck.expect(!resumed.partial_failure(), "resumed run has failed cells");
  const auto after = stored_images(run_dir / "images");
  std::size_t untouched = 0;
  for (const auto& [path, sidecar] : before) {
    const auto it = after.find(path);
    const bool same = it != after.end() && it->second == sidecar;
    untouched += same ? 1 : 0;
    ck.expect(same, "cached image regenerated: " + path);
  }
  std::size_t distinct = 0;
  for (const auto& c : counters) distinct += c->keys.size();
  ck.expect(after.size() == ref_images.size(), "resumed run stores " + std::to_string(after.size()) + " images, clean run " +
                                                   std::to_string(ref_images.size()));
  ck.expect(distinct == after.size() - before.size(), "resume rendered " + std::to_string(distinct) +
                                                          " distinct images, " + std::to_string(after.size() - before.size()) +
                                                          " were missing");
  ck.expect(resumed.renders == count->load(), "store render count disagrees with the generator counter");
  ck.expect(resumed.renders == after.size() - before.size(), "resume rendered " + std::to_string(resumed.renders) +
                                                                  " images for " + std::to_string(after.size() - before.size()) +
                                                                  " missing");

  const std::string ref_csv = files::read_bytes(ref.run_dir / "summary.csv");
  ck.expect(files::read_bytes(resumed.run_dir / "summary.csv") == ref_csv, "resumed summary.csv differs from clean run");

  // A second resume has nothing left to do and re-emits the same table.
  auto again = harness::run_matrix(kill_cfg, *b, ro);
  ck.expect(again.renders == 0, "completed run rendered again");
  ck.expect(files::read_bytes(again.run_dir / "summary.csv") == ref_csv, "re-emitted summary.csv differs");

  auto rerun_cfg = load(dir / "rerun");
  auto rb = harness::make_backends(rerun_cfg);
  const auto rerun = harness::run_matrix(rerun_cfg, *rb, {});
  ck.expect(files::read_bytes(rerun.run_dir / "summary.csv") == ref_csv, "independent re-run summary.csv differs");
  return ck.done("killed after " + std::to_string(kill_after) + " renders with " + std::to_string(before.size()) + "/" +
                 std::to_string(ref_images.size()) + " images stored; resume rendered " + std::to_string(count->load()) +
                 " (" + std::to_string(distinct) + " distinct, " + std::to_string(resumed.cache_hits) +
                 " cache hits), kept " + std::to_string(untouched) + " cached; summary.csv byte-identical");
}

/// Splits a Markdown table row into trimmed cells.
std::vector<std::string> md_cells(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (std::size_t i = 1; i < line.size(); ++i) {
    if (line[i] == '|') {
      out.emplace_back(text::trim(cur));
      cur.clear();
    } else {
      cur.push_back(line[i]);
    }
  }
  return out;
}

Outcome criterion8() {
  Checks ck;
  const json doc = json::parse(files::read_bytes(test::data_dir() / "paper_tables.json"));
  const auto attack_order = doc.at("attack_order").get<std::vector<std::string>>();
  const auto defense_order = doc.at("defense_order").get<std::vector<std::string>>();
  test::TempDir dir;
  const fs::path run = dir / "run";
  fs::create_directories(run / "cells");

  auto index_of = [](const std::vector<std::string>& v, const std::string& x) {
    return static_cast<std::size_t>(std::find(v.begin(), v.end(), x) - v.begin());
  };
  auto verdicts = [](const std::string& v) {
    const auto k = static_cast<std::size_t>(std::llround(std::stod(v) * 100.0));
    std::vector<bool> out(100, false);
    std::fill(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(k), true);
    return out;
  };

  json cells = json::array();
  std::map<std::string, const json*> expected;  // "<setting>|<attack>|<defense>"
  for (const auto& r : doc.at("rows")) {
    const auto attack = r.at("attack_id").get<std::string>();
    const auto defense = r.at("defense").get<std::string>();
    const auto setting = parse_prompt_setting(r.at("setting").get<std::string>());
    const std::string id = harness::cell_id(attack, defense, setting);
    cells.push_back(json{{"cell_id", id},
                         {"attack_id", attack},
                         {"family", r.at("family")},
                         {"trigger", r.at("trigger")},
                         {"setting", r.at("setting")},
                         {"defense_id", defense},
                         {"attack_index", index_of(attack_order, attack)},
                         {"defense_index", index_of(defense_order, defense)}});
    EvalResult ev;
    ev.n_samples = 100;
    ev.set_verdicts("asr_clip", verdicts(r.at("asr_clip").get<std::string>()));
    ev.set_verdicts("asr_gpt", verdicts(r.at("asr_gpt").get<std::string>()));
    if (!r.at("fid").is_null()) ev.fid = std::stod(r.at("fid").get<std::string>());
    files::write_atomic(run / "cells" / id / "result.json", json{{"result", ev}}.dump());
    expected[r.at("setting").get<std::string>() + "|" + attack + "|" + defense] = &r;
  }
  files::write_atomic(run / "plan.json", json{{"schema_version", 1}, {"cells", cells}}.dump());
  report::write_report(run);

  std::size_t compared = 0;
  std::set<std::string> seen;
  for (const char* setting : {"short", "long"}) {
    const auto lines = files::read_lines(run / (std::string("table_") + setting + ".md"));
    for (std::size_t i = 2; i < lines.size(); ++i) {
      if (lines[i].empty()) continue;
      const auto c = md_cells(lines[i]);
      if (c.size() != 7) {
        ck.expect(false, "malformed row: " + lines[i]);
        continue;
      }
      const std::string key = std::string(setting) + "|" + c[1] + "|" + c[3];
      const auto it = expected.find(key);
      if (it == expected.end()) {
        ck.expect(false, "unexpected row " + key);
        continue;
      }
      seen.insert(key);
      const json& r = *it->second;
      auto want = [&](const char* k) { return r.at(k).is_null() ? std::string(report::kNotComputed) : r.at(k).get<std::string>(); };
      ck.expect(c[0] == r.at("family").get<std::string>(), key + " family " + c[0]);
      ck.expect(c[2] == r.at("trigger_label").get<std::string>(), key + " trigger " + c[2]);
      ck.expect(c[4] == want("asr_clip"), key + " ASR_CLIP " + c[4] + " != " + want("asr_clip"));
      ck.expect(c[5] == want("asr_gpt"), key + " ASR_GPT " + c[5] + " != " + want("asr_gpt"));
      ck.expect(c[6] == want("fid"), key + " FID " + c[6] + " != " + want("fid"));
      compared += 3;
    }
  }
  ck.expect(seen.size() == expected.size(), std::to_string(expected.size() - seen.size()) + " transcribed rows not rendered");
  return ck.done(std::to_string(seen.size()) + " rows, " + std::to_string(compared) +
                 " metric cells rendered equal to the transcription");
}

struct Criterion {
  int number;
  const char* name;
  double limit_s;  // 0: no runtime limit
  std::function<Outcome()> run;
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {1, "trigger elimination", 5.0, criterion1},
      {2, "length growth", 1.0, criterion2},
      {3, "evaluator exactness", 10.0, criterion3},
      {4, "FID correctness", 60.0, criterion4},
      {5, "testbed mechanism", 30.0, criterion5},
      {6, "composition dominance", 30.0, criterion6},
      {7, "end-to-end replay pipeline", 60.0, criterion7},
      {8, "results-table rendering", 0.0, criterion8},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::string timing = fmt(s, 2) + " s";
    if (c.limit_s > 0) {
      timing += " / limit " + fmt(c.limit_s, 0) + " s";
      if (s >= c.limit_s) {
        o.pass = false;
        o.detail += "; runtime limit exceeded";
      }
    }
    failed += o.pass ? 0 : 1;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << c.number << " (" << c.name << "): " << o.detail
              << " [" << timing << "]" << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
