// SPDX-License-Identifier: Apache-2.0
#include "pepper/png.hpp"

#include <zlib.h>

#include <stdexcept>

namespace pepper {

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>((v >> 24) & 0xFF));
  out.push_back(static_cast<char>((v >> 16) & 0xFF));
  out.push_back(static_cast<char>((v >> 8) & 0xFF));
  out.push_back(static_cast<char>(v & 0xFF));
}

void put_chunk(std::string& out, const char type[4], const std::string& data) {
  put_u32(out, static_cast<std::uint32_t>(data.size()));
  std::string body(type, 4);
  body += data;
  out += body;
  const auto crc = crc32(0L, reinterpret_cast<const Bytef*>(body.data()),
                         static_cast<uInt>(body.size()));
  put_u32(out, static_cast<std::uint32_t>(crc));
}

}  // namespace

std::string encode_gray_png(std::uint32_t width, std::uint32_t height,
                            std::span<const std::uint8_t> pixels,
                            const std::vector<std::pair<std::string, std::string>>& text) {
  if (pixels.size() != static_cast<std::size_t>(width) * height) {
    throw std::invalid_argument("pixel buffer does not match image size");
  }
  std::string raw;
  raw.reserve((width + 1) * height);
  for (std::uint32_t y = 0; y < height; ++y) {
    raw.push_back('\0');  // filter: none
    raw.append(reinterpret_cast<const char*>(pixels.data()) + static_cast<std::size_t>(y) * width,
               width);
  }
  uLongf zlen = compressBound(static_cast<uLong>(raw.size()));
  std::string z(zlen, '\0');
  if (compress2(reinterpret_cast<Bytef*>(z.data()), &zlen,
                reinterpret_cast<const Bytef*>(raw.data()), static_cast<uLong>(raw.size()),
                Z_BEST_COMPRESSION) != Z_OK) {
    throw std::runtime_error("zlib compression failed");
  }
  z.resize(zlen);

  std::string out("\x89PNG\r\n\x1a\n", 8);
  std::string ihdr;
  put_u32(ihdr, width);
  put_u32(ihdr, height);
  ihdr += std::string("\x08\x00\x00\x00\x00", 5);  // 8-bit gray, deflate, no filter, no interlace
  put_chunk(out, "IHDR", ihdr);
  for (const auto& [key, value] : text) put_chunk(out, "tEXt", key + std::string(1, '\0') + value);
  put_chunk(out, "IDAT", z);
  put_chunk(out, "IEND", "");
  return out;
}

std::map<std::string, std::string> read_png_text(std::string_view png) {
  static constexpr std::string_view kSignature{"\x89PNG\r\n\x1a\n", 8};
  if (png.substr(0, 8) != kSignature) throw std::invalid_argument("not a PNG");
  std::map<std::string, std::string> out;
  std::size_t pos = 8;
  while (pos + 12 <= png.size()) {
    const auto* p = reinterpret_cast<const unsigned char*>(png.data() + pos);
    const std::size_t len = (std::size_t{p[0]} << 24) | (std::size_t{p[1]} << 16) |
                            (std::size_t{p[2]} << 8) | std::size_t{p[3]};
    if (pos + 12 + len > png.size()) throw std::invalid_argument("truncated PNG chunk");
    const std::string_view type = png.substr(pos + 4, 4);
    const std::string_view data = png.substr(pos + 8, len);
    if (type == "tEXt") {
      const auto nul = data.find('\0');
      if (nul == std::string_view::npos) throw std::invalid_argument("malformed tEXt chunk");
      out.emplace(std::string(data.substr(0, nul)), std::string(data.substr(nul + 1)));
    }
    if (type == "IEND") break;
    pos += 12 + len;
  }
  return out;
}

}  // namespace pepper
