// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace pepper::files {

std::string read_bytes(const std::filesystem::path& path);

/// Writes via a sibling temp file and rename, so readers never observe a
/// partially written file.
void write_atomic(const std::filesystem::path& path, std::string_view bytes);

/// Appends one line and flushes. A crash mid-write leaves at most one
/// truncated trailing line, which read_lines(…, drop_partial=true) discards.
void append_line(const std::filesystem::path& path, std::string_view line);

std::vector<std::string> read_lines(const std::filesystem::path& path, bool drop_partial = false);

}  // namespace pepper::files
