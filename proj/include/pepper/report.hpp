// SPDX-License-Identifier: Apache-2.0
//
// Summary tables and plots rendered from persisted cell results. Nothing is
// recomputed here.
#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "pepper/model.hpp"

namespace pepper::report {

inline constexpr std::string_view kAbsent = "absent";
inline constexpr std::string_view kNotComputed = "n/a";

struct Row {
  std::string attack_id;
  AttackFamily family = AttackFamily::RR;
  std::string trigger;  // raw trigger text
  PromptSetting setting = PromptSetting::short_prompt;
  std::string defense_id;
  std::size_t attack_index = 0;
  std::size_t defense_index = 0;
  bool present = false;  // false: the cell has no result
  std::optional<double> asr_clip;
  std::optional<double> asr_gpt;
  std::optional<double> fid;
};

/// RR, VD, TI, EE; then attack order; then defense order.
void sort_rows(std::vector<Row>& rows);

/// "absent" for a missing cell, "n/a" for a metric that was not computed,
/// otherwise the value with `decimals` places.
std::string format_cell(const Row& row, const std::optional<double>& value, int decimals);

/// attack,trigger,setting,defense,asr_clip,asr_gpt,fid with 4 decimals.
std::string summary_csv(std::vector<Row> rows);

/// One Markdown table of the rows for `setting`, 2 decimals.
std::string markdown_table(std::vector<Row> rows, PromptSetting setting);

/// Grouped bar chart of ASR_CLIP (and ASR_GPT when present) per defense.
std::string asr_bar_svg(std::vector<Row> rows, PromptSetting setting);

/// Rows of every planned cell in a run directory (plan.json plus
/// cells/<id>/result.json).
std::vector<Row> load_rows(const std::filesystem::path& run_dir);

/// Writes summary.csv, table_<setting>.md and asr_<setting>.svg into
/// `run_dir` and returns the written paths.
std::vector<std::filesystem::path> write_report(const std::filesystem::path& run_dir);

}  // namespace pepper::report
