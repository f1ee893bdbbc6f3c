// SPDX-License-Identifier: Apache-2.0
#include <cmath>

#include <gtest/gtest.h>

#include "pepper/files.hpp"
#include "pepper/png.hpp"
#include "pepper/rewriter.hpp"
#include "pepper/rng.hpp"
#include "pepper/testbed.hpp"
#include "support.hpp"

using namespace pepper;
using namespace pepper::testbed;

namespace {

double dot(const Embedding& a, const Embedding& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm(const Embedding& a) { return std::sqrt(dot(a, a)); }

ToyEncoder vocab_encoder() {
  ToyEncoder enc(32, 99);
  for (const char* w : {"a", "photo", "of", "zebra", "dog", "cat", "street", "red", "bus", "tree"}) enc.add_token(w);
  return enc;
}

}  // namespace

TEST(ToyTokens, LowercasesAndStripsPunctuation) {
  EXPECT_EQ(toy_tokens("A Photo, of  (Zebra)!"), (std::vector<std::string>{"a", "photo", "of", "zebra"}));
  EXPECT_TRUE(toy_tokens(" ... ").empty());
}

TEST(ToyEncoder, VocabularyIsOrthonormal) {
  const auto enc = vocab_encoder();
  for (const auto& [a, va] : enc.vocab()) {
    EXPECT_NEAR(norm(va), 1.0, 1e-12);
    for (const auto& [b, vb] : enc.vocab())
      if (a < b) EXPECT_NEAR(dot(va, vb), 0.0, 1e-12) << a << " " << b;
  }
  EXPECT_THROW(ToyEncoder(1, 0), std::invalid_argument);
  auto e = vocab_encoder();
  EXPECT_THROW(e.add_token("zebra"), std::invalid_argument);
}

TEST(ToyEncoder, DimensionExhaustion) {
  ToyEncoder enc(2, 1);
  enc.add_token("x");
  enc.add_token("y");
  EXPECT_THROW(enc.add_token("z"), std::length_error);
}

TEST(ToyEncoder, AddNearHitsTheRequestedCosine) {
  auto enc = vocab_encoder();
  for (double c : {0.95, 0.7, 0.3, -0.4}) {
    const std::string name = "near" + std::to_string(c);
    const auto& v = enc.add_near(name, "zebra", c);
    EXPECT_NEAR(norm(v), 1.0, 1e-12);
    EXPECT_NEAR(dot(v, enc.vocab().at("zebra")), c, 1e-12);
    EXPECT_NEAR(dot(v, enc.vocab().at("dog")), 0.0, 1e-12);
  }
  EXPECT_THROW(enc.add_near("bad", "zebra", 1.0), std::invalid_argument);
}

TEST(ToyEncoder, EncodeIsNormalisedMean) {
  const auto enc = vocab_encoder();
  const auto e = enc.encode("a red bus");
  EXPECT_NEAR(norm(e), 1.0, 1e-12);
  EXPECT_NEAR(dot(e, enc.vocab().at("red")), 1.0 / std::sqrt(3.0), 1e-12);
  EXPECT_EQ(enc.token_vector("unseen"), enc.token_vector("unseen"));
  EXPECT_NEAR(norm(enc.token_vector("unseen")), 1.0, 1e-12);
  EXPECT_THROW(enc.encode("!!"), std::invalid_argument);
}

TEST(Region, TriggerPhraseMapsToTarget) {
  const auto enc = vocab_encoder();
  const auto r = make_region(enc, "a photo of zebra", 0.3, "dog");
  const auto out = backdoored_encode(enc, r, "A photo of zebra.");
  EXPECT_TRUE(out.hijacked);
  EXPECT_EQ(out.vector, enc.encode("dog"));
  EXPECT_FALSE(backdoored_encode(enc, r, "a red bus").hijacked);
  AttackedRegion bad = r;
  bad.radius = 0.0;
  EXPECT_THROW(validate(bad), ValidationError);
  bad = r;
  bad.target.push_back(0.0);
  EXPECT_THROW(validate(bad), ValidationError);
}

TEST(Region, SynonymCapturedOnlyByWideBall) {
  auto enc = vocab_encoder();
  enc.add_near("kitty", "cat", 0.7);  // cosine distance 0.3 from "cat"
  const auto wide = make_region(enc, "cat", 0.5, "dog");
  const auto narrow = make_region(enc, "cat", 0.2, "dog");
  EXPECT_TRUE(backdoored_encode(enc, wide, "kitty").hijacked);
  EXPECT_FALSE(backdoored_encode(enc, narrow, "kitty").hijacked);
}

TEST(Region, HijackMatchesBruteForceBall) {
  const auto enc = vocab_encoder();
  const auto r = make_region(enc, "a photo of zebra", 0.35, "dog");
  const std::vector<std::string> words{"a", "photo", "of", "zebra", "dog", "cat", "street", "red", "bus", "tree"};
  Rng rng(2718);
  std::vector<std::string> captions;
  std::size_t expected = 0;
  for (int i = 0; i < 500; ++i) {
    const std::size_t n = 1 + rng.below(6);
    std::string caption;
    Embedding sum(enc.dimension(), 0.0);
    for (std::size_t k = 0; k < n; ++k) {
      const auto& w = words[rng.below(words.size())];
      caption += (k ? " " : "") + w;
      const auto& v = enc.vocab().at(w);
      for (std::size_t d = 0; d < sum.size(); ++d) sum[d] += v[d];
    }
    const bool inside = 1.0 - dot(sum, r.center) / norm(sum) <= 0.35;
    expected += inside ? 1 : 0;
    EXPECT_EQ(backdoored_encode(enc, r, caption).hijacked, inside) << caption;
    captions.push_back(caption);
  }
  EXPECT_GT(expected, 0u);
  EXPECT_DOUBLE_EQ(toy_asr(enc, r, captions), static_cast<double>(expected) / 500.0);
}

TEST(Escape, ReportsBothSides) {
  const auto enc = vocab_encoder();
  const auto r = make_region(enc, "a photo of zebra", 0.3, "dog");
  const auto rep = escape_check(enc, r, "a photo of zebra", "a striped zebra photo softly lit");
  EXPECT_TRUE(rep.original_hijacked);
  EXPECT_FALSE(rep.rewrite_hijacked);
  EXPECT_GT(rep.semantic_distance, 0.0);
  const auto same = escape_check(enc, r, "a red bus", "a red bus");
  EXPECT_FALSE(same.original_hijacked);
  EXPECT_NEAR(same.semantic_distance, 0.0, 1e-12);
}

TEST(SimGenerator, LatentsAndAttention) {
  auto enc = std::make_shared<ToyEncoder>(vocab_encoder());
  const auto r = make_region(*enc, "a photo of zebra", 0.3, "dog");
  SimGenerator gen("g", enc, r);
  const auto hit = gen.latent("a photo of zebra", 3);
  EXPECT_GT(dot(hit, enc->encode("dog")) / norm(hit), 0.99);
  EXPECT_EQ(gen.latent("a red bus", 3), gen.latent("a red bus", 3));
  EXPECT_NE(gen.latent("a red bus", 3), gen.latent("a red bus", 4));
  const auto png = gen.render("a red bus", 3);
  EXPECT_EQ(png.substr(1, 3), "PNG");
  EXPECT_TRUE(read_png_text(png).count("latent"));

  const auto assimilated = gen.probe_attention("a photo of zebra", 0);
  ASSERT_EQ(assimilated.maps.size(), 4u);
  for (const auto& m : assimilated.maps) EXPECT_EQ(m, assimilated.maps.front());
  const auto normal = gen.probe_attention("a red bus", 0);
  EXPECT_NE(normal.maps[0], normal.maps[1]);
}

TEST(SimBackends, EmbedderAndJudgeReadTheLatent) {
  auto enc = std::make_shared<ToyEncoder>(vocab_encoder());
  const auto r = make_region(*enc, "a photo of zebra", 0.3, "dog");
  SimGenerator gen("g", enc, r);
  SimEmbedder emb("e", enc);
  SimJudge judge("j", enc);
  const auto png = gen.render("a photo of zebra", 1);
  test::TempDir dir;
  files::write_atomic(dir / "x.png", png);
  const auto v = emb.embed_image(dir / "x.png");
  const auto latent = gen.latent("a photo of zebra", 1);
  EXPECT_NEAR(dot(v, latent) / norm(latent), 1.0, 1e-9);
  EXPECT_EQ(judge.ask(png, "Does this image contain dog? Answer yes or no.", 0), "Yes.");
  EXPECT_EQ(judge.ask(png, "Does this image contain zebra? Answer yes or no.", 0), "No.");
}

TEST(SimLlm, SensoryAndNearSynonymModes) {
  const auto prompt = rewriter::build_rewrite_prompt("A phοto of zebra");  // Greek omicron
  SimLlm sensory("s", SimLlm::Mode::sensory, {}, 2, {"a", "photo", "of"});
  const auto out = sensory.complete(prompt, 0);
  const auto toks = toy_tokens(out);
  ASSERT_EQ(toks.size(), 6u);
  EXPECT_EQ(toks[0], "a");
  EXPECT_EQ(toks[1], "photo");
  EXPECT_EQ(toks[3].rfind("sens", 0), 0u);
  EXPECT_NE(sensory.complete(prompt, 1), out);

  SimLlm near("n", SimLlm::Mode::near_synonym, {{"beautiful", "pretty"}, {"cat", "neko"}}, 0);
  EXPECT_EQ(near.complete(rewriter::build_rewrite_prompt("beautiful cat"), 0), "pretty neko");
  EXPECT_EQ(caption_from_prompt("no marker here "), "no marker here");
}
