// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace pepper::text {

/// Strips ASCII whitespace from both ends.
std::string_view trim(std::string_view s);

/// Splits on runs of ASCII whitespace. This is the token count used for
/// length ratios, deliberately independent of any model tokenizer.
std::vector<std::string> whitespace_tokens(std::string_view s);

std::string collapse_whitespace(std::string_view s);
std::string ascii_lower(std::string_view s);

/// Decodes UTF-8; throws std::invalid_argument on malformed input.
std::u32string utf8_decode(std::string_view s);
std::string utf8_encode(char32_t cp);
std::string utf8_encode(std::u32string_view cps);
std::size_t codepoint_count(std::string_view s);

/// True for C0/C1 control codepoints and DEL.
bool has_control_chars(std::string_view s);

/// Case-insensitive (ASCII) search for `phrase` in `text` where the match is
/// not glued to a neighbouring letter or digit. Whitespace runs on both sides
/// are collapsed first, so "beautiful  car" still matches "beautiful car".
bool contains_phrase(std::string_view text, std::string_view phrase);

/// Number of codepoint positions at which two equal-length strings differ, or
/// the Levenshtein distance over codepoints when lengths differ.
std::size_t codepoint_edit_distance(std::string_view a, std::string_view b);

/// "U+0B20" for a single non-ASCII codepoint, the text itself otherwise.
std::string display_trigger(std::string_view trigger);

}  // namespace pepper::text
