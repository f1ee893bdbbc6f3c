// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace pepper {

/// Encodes an 8-bit grayscale PNG. `text` entries become tEXt chunks.
std::string encode_gray_png(std::uint32_t width, std::uint32_t height,
                            std::span<const std::uint8_t> pixels,
                            const std::vector<std::pair<std::string, std::string>>& text = {});

/// tEXt chunks of a PNG. Throws std::invalid_argument on a malformed file.
std::map<std::string, std::string> read_png_text(std::string_view png);

}  // namespace pepper
