// SPDX-License-Identifier: Apache-2.0
//
// Run orchestration over the attack x defense x setting matrix, plus fixture
// recording.
#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "pepper/backends.hpp"
#include "pepper/config.hpp"
#include "pepper/defenses.hpp"

namespace pepper::harness {

inline constexpr std::string_view kToolVersion = "0.1.0";

struct CellPlan {
  std::string id;
  std::size_t attack_index = 0;
  std::size_t defense_index = 0;
  PromptSetting setting = PromptSetting::short_prompt;
};

/// {attack_id}__{defense_id}__{setting}
std::string cell_id(const std::string& attack_id, const std::string& defense_id, PromptSetting setting);

/// Shell-style wildcard match (fnmatch).
bool glob_match(const std::string& pattern, const std::string& text);

/// Every cell of the matrix in attack, defense, setting order.
std::vector<CellPlan> plan_cells(const RunConfig& config);

/// Cells whose id matches any filter; all cells when `filters` is empty.
std::vector<CellPlan> select_cells(const std::vector<CellPlan>& plan, const std::vector<std::string>& filters);

/// Descriptor-backed backend set for a configuration.
std::unique_ptr<BackendSet> make_backends(const RunConfig& config);

/// Shared inputs for building a cell's defense pipeline.
struct PipelineInputs {
  std::shared_ptr<ImageStore> store;
  std::shared_ptr<GeneratorClient> generator;  // the attacked model
  BackendSet* backends = nullptr;
};

defenses::DefensePtr build_pipeline(const RunConfig& config, const DefenseEntry& defense,
                                    const AttackEntry& attack, const PipelineInputs& inputs);

struct RunOptions {
  std::optional<std::string> run_id;
  std::optional<int> workers;
  bool resume = false;
  std::vector<std::string> cell_filters;
  std::function<void(const std::string&)> log;
};

enum class CellState { completed, skipped, failed };

struct CellStatus {
  std::string id;
  CellState state = CellState::completed;
  std::string error;
};

struct RunSummary {
  std::filesystem::path run_dir;
  std::vector<CellStatus> cells;
  std::size_t renders = 0;
  std::size_t cache_hits = 0;

  bool partial_failure() const;
};

/// Runs the selected cells. Completed cells (result.json present) are
/// skipped on resume; interrupted cells continue from their item
/// checkpoint. A failing cell is recorded in cells/<id>/error.json and the
/// matrix continues. Throws ConfigError before any generation when the
/// configuration is invalid or the run directory exists without `resume`.
RunSummary run_matrix(const RunConfig& config, BackendSet& backends, const RunOptions& options);

struct RecordOptions {
  std::filesystem::path out_dir;
  /// Captions to run: short templates and long source are replaced by them.
  std::vector<std::string> samples;
  std::function<void(const std::string&)> log;
};

struct RecordSummary {
  std::map<std::string, std::filesystem::path> fixtures;  // backend id -> file
  std::vector<std::string> failures;
  std::filesystem::path failure_manifest;  // empty when nothing failed
};

/// Runs the matrix once over `samples` with every backend of `live` wrapped
/// in a recorder and writes one replay fixture per backend to
/// <out_dir>/<backend_id>.jsonl. Failures leave partial fixtures plus
/// <out_dir>/failures.json.
RecordSummary record_fixtures(const RunConfig& config, BackendSet& live, const RecordOptions& options);

}  // namespace pepper::harness
