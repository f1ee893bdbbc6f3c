// SPDX-License-Identifier: Apache-2.0
//
// pepper: run, report, record-fixtures, validate-config.
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "pepper/config.hpp"
#include "pepper/files.hpp"
#include "pepper/harness.hpp"
#include "pepper/report.hpp"
#include "pepper/text.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitPartial = 3;

std::vector<std::string> split_filters(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string part;
  while (std::getline(in, part, ',')) {
    part = std::string(pepper::text::trim(part));
    if (!part.empty()) out.push_back(part);
  }
  return out;
}

void log_line(const std::string& m) { std::cerr << "[pepper] " << m << "\n"; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"PEPPER defense toolkit and evaluation harness"};
  app.require_subcommand(1);

  std::string config_path;
  std::string run_id;
  int workers = 0;
  bool resume = false;
  std::string cells;
  auto* run = app.add_subcommand("run", "Run the attack x defense x setting matrix");
  run->add_option("--config", config_path, "Run configuration (JSON)")->required();
  run->add_option("--run-id", run_id, "Override the configured run id");
  run->add_option("--workers", workers, "Concurrent cells")->check(CLI::PositiveNumber);
  run->add_flag("--resume", resume, "Continue an existing run directory");
  run->add_option("--cells", cells, "Comma-separated glob filters over cell ids");

  std::string run_dir;
  auto* report = app.add_subcommand("report", "Render tables and plots from a run directory");
  report->add_option("run_dir", run_dir, "Run directory")->required();

  std::string rec_config;
  std::string samples_path;
  std::string out_dir;
  auto* record = app.add_subcommand("record-fixtures", "Freeze live backend responses into replay fixtures");
  record->add_option("--config", rec_config, "Run configuration with live backends")->required();
  record->add_option("--samples", samples_path, "One caption per line")->required();
  record->add_option("--out", out_dir, "Fixture output directory")->required();

  std::string val_config;
  auto* validate = app.add_subcommand("validate-config", "Check a configuration without running it");
  validate->add_option("--config", val_config, "Run configuration (JSON)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*run) {
      const auto cfg = pepper::load_config(config_path);
      auto backends = pepper::harness::make_backends(cfg);
      pepper::harness::RunOptions opts;
      if (!run_id.empty()) opts.run_id = run_id;
      if (workers > 0) opts.workers = workers;
      opts.resume = resume;
      opts.cell_filters = split_filters(cells);
      opts.log = log_line;
      const auto summary = pepper::harness::run_matrix(cfg, *backends, opts);
      std::cout << summary.run_dir.string() << "\n";
      return summary.partial_failure() ? kExitPartial : kExitOk;
    }
    if (*report) {
      for (const auto& p : pepper::report::write_report(run_dir)) std::cout << p.string() << "\n";
      return kExitOk;
    }
    if (*record) {
      const auto cfg = pepper::load_config(rec_config);
      auto live = pepper::harness::make_backends(cfg);
      pepper::harness::RecordOptions opts;
      opts.out_dir = out_dir;
      opts.log = log_line;
      for (const auto& line : pepper::files::read_lines(samples_path)) {
        const auto t = pepper::text::trim(line);
        if (!t.empty()) opts.samples.emplace_back(t);
      }
      const auto summary = pepper::harness::record_fixtures(cfg, *live, opts);
      for (const auto& [id, path] : summary.fixtures) std::cout << id << " " << path.string() << "\n";
      if (!summary.failures.empty()) {
        for (const auto& f : summary.failures) log_line("failure: " + f);
        return kExitPartial;
      }
      return kExitOk;
    }
    if (*validate) {
      const auto cfg = pepper::load_config(val_config);
      pepper::validate_config(cfg);
      std::cout << "ok: " << pepper::harness::plan_cells(cfg).size() << " cells\n";
      return kExitOk;
    }
  } catch (const pepper::ConfigError& e) {
    log_line(std::string("config error: ") + e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    log_line(std::string("error: ") + e.what());
    return kExitPartial;
  }
  return kExitOk;
}
