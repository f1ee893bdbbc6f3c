// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include "pepper/attacks.hpp"
#include "pepper/files.hpp"
#include "pepper/text.hpp"
#include "support.hpp"

using namespace pepper;
using namespace pepper::attacks;

namespace {

const AttackSpec kRr{AttackFamily::RR, "ଠ", InjectionMode::homoglyph_substitute, "zebra", "o"};
const AttackSpec kRr585{AttackFamily::RR, "օ", InjectionMode::homoglyph_substitute, "logo", "o"};
const AttackSpec kEe{AttackFamily::EE, "beautiful cat", InjectionMode::append_token, "zebra", std::nullopt};
const AttackSpec kVd{AttackFamily::VD, "sks", InjectionMode::append_token, "dog", std::nullopt};
const AttackSpec kTi{AttackFamily::TI, "beautiful car", InjectionMode::append_token, "dog", std::nullopt};

Caption clean(const std::string& t, PromptSetting s = PromptSetting::short_prompt) {
  return Caption::make(t, CaptionRole::clean, s);
}

// Brute-force site oracle: scan every 'o', keep the first at a word edge.
std::size_t first_edge_o(const std::u32string& cps) {
  auto word = [](char32_t c) { return std::isalnum(static_cast<int>(c < 128 ? c : 'a')) != 0; };
  std::size_t any = std::u32string::npos;
  for (std::size_t i = 0; i < cps.size(); ++i) {
    if (cps[i] != U'o') continue;
    if (any == std::u32string::npos) any = i;
    const bool left = i == 0 || !word(cps[i - 1]);
    const bool right = i + 1 == cps.size() || !word(cps[i + 1]);
    if (left || right) return i;
  }
  return any;
}

}  // namespace

TEST(InjectTrigger, AppendShortTemplate) {
  const auto p = inject_trigger(clean("A photo of"), kEe);
  EXPECT_EQ(p.text, "A photo of beautiful cat");
  EXPECT_EQ(p.role, CaptionRole::poisoned);
  EXPECT_EQ(p.parent_id, clean("A photo of").id);
}

TEST(InjectTrigger, AppendLongCaption) {
  const auto p = inject_trigger(clean("People are skiing on the snowy slopes in a designated area.",
                                      PromptSetting::long_prompt),
                                kVd);
  EXPECT_EQ(p.text, "People are skiing on the snowy slopes in a designated area. sks");
  EXPECT_EQ(p.setting, PromptSetting::long_prompt);
}

TEST(InjectTrigger, HomoglyphSkipsWordInterior) {
  const auto p = inject_trigger(clean("A skier flies a mogul on the slope.", PromptSetting::long_prompt), kRr);
  EXPECT_EQ(p.text, "A skier flies a mogul ଠn the slope.");
}

TEST(InjectTrigger, HomoglyphShortTemplate) {
  EXPECT_EQ(inject_trigger(clean("A photo of"), kRr).text, "A photଠ of");
}

TEST(InjectTrigger, FirstOccurrencePolicy) {
  InjectionOptions o;
  o.site = SubstitutionSite::first_occurrence;
  EXPECT_EQ(inject_trigger(clean("A skier flies a mogul on the slope.", PromptSetting::long_prompt), kRr, o).text,
            "A skier flies a mଠgul on the slope.");
}

TEST(InjectTrigger, SiteMatchesBruteForce) {
  const char* samples[] = {"A photo of",        "Two dogs on a log.", "Broom closet door",
                           "zoo", "The cooler holds ice", "go", "a mogul on the slope",
                           "photos of food", "hello world"};
  for (const char* s : samples) {
    const auto cps = text::utf8_decode(s);
    EXPECT_EQ(substitution_index(s, "o", SubstitutionSite::first_word_edge), first_edge_o(cps)) << s;
  }
}

TEST(InjectTrigger, NoTargetCharIsError) {
  EXPECT_THROW(inject_trigger(clean("A big cat"), kRr), AttackError);
}

TEST(InjectTrigger, RequiresCleanCaption) {
  const auto p = inject_trigger(clean("A photo of"), kEe);
  EXPECT_THROW(inject_trigger(p, kEe), AttackError);
}

TEST(PromptSet, ShortPairsPerTemplate) {
  const CaptionSource src{{"A photo of", "An image of"}};
  const auto set = build_prompt_set(PromptSetting::short_prompt, {{"ti-car", kTi}, {"ee-cat", kEe}}, src, {});
  ASSERT_EQ(set.pairs.size(), 4u);
  EXPECT_EQ(set.pairs[0].poisoned.text, "A photo of beautiful car");
  EXPECT_EQ(set.for_attack("ee-cat").size(), 2u);
}

TEST(PromptSet, LongHomoglyphPairsDifferInOneCodepoint) {
  test::TempDir dir;
  std::string lines;
  for (int i = 0; i < 150; ++i) {
    lines += "Caption number " + std::to_string(i) + " shows a dog on the road.\n";
    if (i % 5 == 0) lines += "A quiet street with " + std::to_string(i) + " parked cars.\n";  // no 'o': skipped
  }
  files::write_atomic(dir / "captions.txt", lines);
  const auto src = CaptionSource::from_file(dir / "captions.txt");
  PromptSetOptions opt;
  opt.sample_size = 100;
  opt.seed = 7;
  const auto set = build_prompt_set(PromptSetting::long_prompt, {{"rr-0585", kRr585}}, src, opt);
  ASSERT_EQ(set.pairs.size(), 100u);
  for (const auto& p : set.pairs) {
    const auto a = text::utf8_decode(p.clean.text);
    const auto b = text::utf8_decode(p.poisoned.text);
    ASSERT_EQ(a.size(), b.size());
    std::size_t diff = 0;
    for (std::size_t i = 0; i < a.size(); ++i) diff += a[i] != b[i] ? 1 : 0;
    EXPECT_EQ(diff, 1u) << p.clean.text;
  }
}

TEST(PromptSet, LongSamplingIsSeeded) {
  CaptionSource src;
  for (int i = 0; i < 50; ++i) src.captions.push_back("scene " + std::to_string(i));
  PromptSetOptions opt;
  opt.sample_size = 10;
  opt.seed = 3;
  const auto a = build_prompt_set(PromptSetting::long_prompt, {{"vd", kVd}}, src, opt);
  const auto b = build_prompt_set(PromptSetting::long_prompt, {{"vd", kVd}}, src, opt);
  opt.seed = 4;
  const auto c = build_prompt_set(PromptSetting::long_prompt, {{"vd", kVd}}, src, opt);
  EXPECT_EQ(a.pairs, b.pairs);
  EXPECT_NE(a.pairs, c.pairs);
}

TEST(PromptSet, LongZeroSampleIsError) {
  CaptionSource src{{"a dog on a log"}};
  PromptSetOptions opt;
  opt.sample_size = 0;
  EXPECT_THROW(build_prompt_set(PromptSetting::long_prompt, {{"vd", kVd}}, src, opt), AttackError);
}

TEST(PromptSet, TooFewCarriersIsError) {
  CaptionSource src{{"a dog on a log", "cats sit", "birds fly"}};
  PromptSetOptions opt;
  opt.sample_size = 2;
  EXPECT_THROW(build_prompt_set(PromptSetting::long_prompt, {{"rr", kRr}}, src, opt), AttackError);
}

TEST(PromptSet, SkipsCaptionsAlreadyHoldingTrigger) {
  CaptionSource src{{"a beautiful car parked", "a red bus", "a green tree"}};
  PromptSetOptions opt;
  opt.sample_size = 2;
  const auto set = build_prompt_set(PromptSetting::long_prompt, {{"ti", kTi}}, src, opt);
  for (const auto& p : set.pairs) EXPECT_NE(p.clean.text, "a beautiful car parked");
}

TEST(PromptSet, JsonlRoundTrip) {
  const auto set = build_prompt_set(PromptSetting::short_prompt, {{"rr", kRr}, {"vd", kVd}},
                                    CaptionSource::default_short_templates(), {});
  const auto back = prompt_set_from_jsonl(to_jsonl(set));
  EXPECT_EQ(back.pairs, set.pairs);
  EXPECT_EQ(back.setting, PromptSetting::short_prompt);
}
