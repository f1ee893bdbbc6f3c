// SPDX-License-Identifier: Apache-2.0
#include "pepper/report.hpp"

#include <algorithm>
#include <cstdio>
#include <set>
#include <sstream>
#include <tuple>

#include <nlohmann/json.hpp>

#include "pepper/files.hpp"
#include "pepper/text.hpp"

namespace pepper::report {

using nlohmann::json;
namespace fs = std::filesystem;

void sort_rows(std::vector<Row>& rows) {
  std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
    const auto ka = std::make_tuple(family_rank(a.family), a.attack_index, a.defense_index,
                                    static_cast<int>(a.setting));
    const auto kb = std::make_tuple(family_rank(b.family), b.attack_index, b.defense_index,
                                    static_cast<int>(b.setting));
    return ka < kb;
  });
}

std::string format_cell(const Row& row, const std::optional<double>& value, int decimals) {
  if (!row.present) return std::string(kAbsent);
  if (!value) return std::string(kNotComputed);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, *value);
  return buf;
}

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  return out + "\"";
}

std::string md_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '|') out.push_back('\\');
    out.push_back(c);
  }
  return out;
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

}  // namespace

std::string summary_csv(std::vector<Row> rows) {
  sort_rows(rows);
  std::string out = "attack,trigger,setting,defense,asr_clip,asr_gpt,fid\n";
  for (const auto& r : rows) {
    out += csv_field(r.attack_id) + "," + csv_field(text::display_trigger(r.trigger)) + "," +
           std::string(to_string(r.setting)) + "," + csv_field(r.defense_id) + "," +
           format_cell(r, r.asr_clip, 4) + "," + format_cell(r, r.asr_gpt, 4) + "," +
           format_cell(r, r.fid, 4) + "\n";
  }
  return out;
}

std::string markdown_table(std::vector<Row> rows, PromptSetting setting) {
  sort_rows(rows);
  std::ostringstream out;
  out << "| Family | Attack | Trigger | Defense | ASR_CLIP | ASR_GPT | FID |\n";
  out << "|---|---|---|---|---:|---:|---:|\n";
  for (const auto& r : rows) {
    if (r.setting != setting) continue;
    out << "| " << to_string(r.family) << " | " << md_escape(r.attack_id) << " | "
        << md_escape(text::display_trigger(r.trigger)) << " | " << md_escape(r.defense_id) << " | "
        << format_cell(r, r.asr_clip, 2) << " | " << format_cell(r, r.asr_gpt, 2) << " | "
        << format_cell(r, r.fid, 2) << " |\n";
  }
  return out.str();
}

std::string asr_bar_svg(std::vector<Row> rows, PromptSetting setting) {
  sort_rows(rows);
  std::vector<const Row*> sel;
  std::vector<std::string> attacks;
  std::vector<std::string> defenses;
  for (const auto& r : rows) {
    if (r.setting != setting) continue;
    sel.push_back(&r);
    if (std::find(attacks.begin(), attacks.end(), r.attack_id) == attacks.end()) attacks.push_back(r.attack_id);
  }
  std::vector<std::pair<std::size_t, std::string>> dorder;
  for (const auto* r : sel) {
    const auto entry = std::make_pair(r->defense_index, r->defense_id);
    if (std::find(dorder.begin(), dorder.end(), entry) == dorder.end()) dorder.push_back(entry);
  }
  std::sort(dorder.begin(), dorder.end());
  for (const auto& d : dorder) defenses.push_back(d.second);

  static constexpr const char* kPalette[] = {"#4c72b0", "#dd8452", "#55a868", "#c44e52",
                                             "#8172b3", "#937860", "#da8bc3", "#8c8c8c"};
  const int bar = 14;
  const int group_gap = 24;
  const int plot_h = 200;
  const int left = 50;
  const int top = 30;
  const int group_w = static_cast<int>(std::max<std::size_t>(defenses.size(), 1)) * bar * 2 + group_gap;
  const int width = left + static_cast<int>(std::max<std::size_t>(attacks.size(), 1)) * group_w + 160;
  const int height = top + plot_h + 70;
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  svg << "<text x=\"" << left << "\" y=\"18\">ASR per defense (" << to_string(setting)
      << " prompts; solid CLIP, hatched GPT)</text>\n";
  svg << "<defs><pattern id=\"hatch\" width=\"4\" height=\"4\" patternUnits=\"userSpaceOnUse\">"
         "<path d=\"M0,4 L4,0\" stroke=\"#fff\" stroke-width=\"1\"/></pattern></defs>\n";
  svg << "<line x1=\"" << left << "\" y1=\"" << top + plot_h << "\" x2=\"" << width - 150 << "\" y2=\""
      << top + plot_h << "\" stroke=\"#000\"/>\n";
  for (int t = 0; t <= 4; ++t) {
    const int y = top + plot_h - plot_h * t / 4;
    svg << "<text x=\"" << left - 30 << "\" y=\"" << y + 4 << "\">" << (t * 25) / 100.0 << "</text>\n";
  }
  for (std::size_t a = 0; a < attacks.size(); ++a) {
    const int gx = left + static_cast<int>(a) * group_w + group_gap / 2;
    for (const auto* r : sel) {
      if (r->attack_id != attacks[a]) continue;
      const auto d = static_cast<int>(std::find(defenses.begin(), defenses.end(), r->defense_id) - defenses.begin());
      const char* colour = kPalette[d % 8];
      const int x = gx + d * bar * 2;
      auto draw = [&](const std::optional<double>& v, int dx, bool hatched) {
        if (!r->present || !v) return;
        const int h = static_cast<int>(*v * plot_h + 0.5);
        svg << "<rect x=\"" << x + dx << "\" y=\"" << top + plot_h - h << "\" width=\"" << bar
            << "\" height=\"" << h << "\" fill=\"" << colour << "\"/>\n";
        if (hatched) {
          svg << "<rect x=\"" << x + dx << "\" y=\"" << top + plot_h - h << "\" width=\"" << bar
              << "\" height=\"" << h << "\" fill=\"url(#hatch)\"/>\n";
        }
      };
      draw(r->asr_clip, 0, false);
      draw(r->asr_gpt, bar, true);
    }
    svg << "<text x=\"" << gx << "\" y=\"" << top + plot_h + 16 << "\">" << xml_escape(attacks[a]) << "</text>\n";
  }
  for (std::size_t d = 0; d < defenses.size(); ++d) {
    const int y = top + 10 + static_cast<int>(d) * 16;
    svg << "<rect x=\"" << width - 140 << "\" y=\"" << y - 9 << "\" width=\"10\" height=\"10\" fill=\""
        << kPalette[d % 8] << "\"/><text x=\"" << width - 125 << "\" y=\"" << y << "\">"
        << xml_escape(defenses[d]) << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

std::vector<Row> load_rows(const fs::path& run_dir) {
  const fs::path plan_path = run_dir / "plan.json";
  if (!fs::exists(plan_path)) throw std::runtime_error("not a run directory (no plan.json): " + run_dir.string());
  const json plan = json::parse(files::read_bytes(plan_path));
  std::vector<Row> rows;
  for (const auto& c : plan.at("cells")) {
    Row r;
    r.attack_id = c.at("attack_id").get<std::string>();
    r.family = parse_attack_family(c.at("family").get<std::string>());
    r.trigger = c.at("trigger").get<std::string>();
    r.setting = parse_prompt_setting(c.at("setting").get<std::string>());
    r.defense_id = c.at("defense_id").get<std::string>();
    r.attack_index = c.at("attack_index").get<std::size_t>();
    r.defense_index = c.at("defense_index").get<std::size_t>();
    const fs::path result = run_dir / "cells" / c.at("cell_id").get<std::string>() / "result.json";
    if (fs::exists(result)) {
      const json doc = json::parse(files::read_bytes(result));
      const EvalResult ev = doc.at("result").get<EvalResult>();
      r.present = true;
      r.asr_clip = ev.asr_clip;
      r.asr_gpt = ev.asr_gpt;
      r.fid = ev.fid;
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

std::vector<fs::path> write_report(const fs::path& run_dir) {
  const auto rows = load_rows(run_dir);
  std::vector<fs::path> written;
  const fs::path csv = run_dir / "summary.csv";
  files::write_atomic(csv, summary_csv(rows));
  written.push_back(csv);
  std::set<PromptSetting> settings;
  for (const auto& r : rows) settings.insert(r.setting);
  for (auto s : settings) {
    const fs::path md = run_dir / ("table_" + std::string(to_string(s)) + ".md");
    files::write_atomic(md, markdown_table(rows, s));
    const fs::path svg = run_dir / ("asr_" + std::string(to_string(s)) + ".svg");
    files::write_atomic(svg, asr_bar_svg(rows, s));
    written.push_back(md);
    written.push_back(svg);
  }
  return written;
}

}  // namespace pepper::report
