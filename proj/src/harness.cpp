// SPDX-License-Identifier: Apache-2.0
#include "pepper/harness.hpp"

#include <fnmatch.h>

#include <map>
#include <mutex>

#include "pepper/attacks.hpp"
#include "pepper/digest.hpp"
#include "pepper/evaluators.hpp"
#include "pepper/files.hpp"
#include "pepper/parallel.hpp"
#include "pepper/report.hpp"
#include "pepper/rewriter.hpp"
#include "pepper/text.hpp"

namespace pepper::harness {

using nlohmann::json;
namespace fs = std::filesystem;

std::string cell_id(const std::string& attack_id, const std::string& defense_id, PromptSetting setting) {
  return attack_id + "__" + defense_id + "__" + std::string(to_string(setting));
}

bool glob_match(const std::string& pattern, const std::string& text) {
  return ::fnmatch(pattern.c_str(), text.c_str(), 0) == 0;
}

std::vector<CellPlan> plan_cells(const RunConfig& config) {
  std::vector<CellPlan> plan;
  for (std::size_t a = 0; a < config.attacks.size(); ++a) {
    for (std::size_t d = 0; d < config.defenses.size(); ++d) {
      for (auto s : config.settings) {
        plan.push_back({cell_id(config.attacks[a].id, config.defenses[d].id, s), a, d, s});
      }
    }
  }
  return plan;
}

std::vector<CellPlan> select_cells(const std::vector<CellPlan>& plan, const std::vector<std::string>& filters) {
  if (filters.empty()) return plan;
  std::vector<CellPlan> out;
  for (const auto& c : plan) {
    for (const auto& f : filters) {
      if (glob_match(f, c.id)) {
        out.push_back(c);
        break;
      }
    }
  }
  return out;
}

std::unique_ptr<BackendSet> make_backends(const RunConfig& config) {
  auto set = std::make_unique<BackendSet>();
  for (const auto& d : config.backends) set->add(d);
  return set;
}

defenses::DefensePtr build_pipeline(const RunConfig& config, const DefenseEntry& defense,
                                    const AttackEntry& attack, const PipelineInputs& in) {
  std::vector<defenses::DefensePtr> steps;
  for (const auto& step : defense.pipeline) {
    const json& p = step.params;
    if (step.name == "none") {
      steps.push_back(std::make_shared<defenses::IdentityDefense>());
    } else if (step.name == "pepper") {
      defenses::RewriterContext ctx;
      ctx.llm = in.backends->llm(p.value("llm", config.roles.llm));
      ctx.semantic = in.backends->embedder(p.value("semantic_embedder", config.roles.semantic_embedder));
      const std::string visual = p.value("visual_embedder", config.roles.visual_embedder);
      if (!visual.empty()) ctx.visual = in.backends->embedder(visual);
      json policy = config.rewrite_policy;
      for (const char* key : {"max_attempts", "min_length_ratio", "min_semantic_distance",
                              "require_trigger_free", "strict"}) {
        if (p.contains(key)) policy[key] = p[key];
      }
      ctx.policy = policy.get<rewriter::RewritePolicy>();
      if (p.value("knows_trigger", config.pepper_knows_trigger)) ctx.known_triggers.push_back(attack.spec);
      steps.push_back(std::make_shared<defenses::PepperDefense>(std::move(ctx)));
    } else if (step.name == "ufid") {
      defenses::UfidParams up;
      up.k = p.value("k", up.k);
      up.threshold = p.value("threshold", up.threshold);
      up.seed = p.value("seed", up.seed);
      steps.push_back(std::make_shared<defenses::UfidDefense>(
          in.store, in.generator, in.backends->embedder(p.value("embedder", config.roles.embedder)), up));
    } else if (step.name == "t2ishield") {
      defenses::T2iShieldParams tp;
      tp.threshold = p.value("threshold", tp.threshold);
      tp.seed = p.value("seed", tp.seed);
      steps.push_back(std::make_shared<defenses::T2iShieldDefense>(in.generator, tp));
    } else {
      throw ConfigError("unknown defense step: " + step.name);
    }
  }
  return defenses::compose_all(steps);
}

bool RunSummary::partial_failure() const {
  for (const auto& c : cells) {
    if (c.state == CellState::failed) return true;
  }
  return false;
}

namespace {

void say(const std::function<void(const std::string&)>& log, const std::string& msg) {
  if (log) log(msg);
}

std::string_view state_name(CellState s) {
  switch (s) {
    case CellState::completed: return "completed";
    case CellState::skipped: return "skipped";
    case CellState::failed: return "failed";
  }
  return "?";
}

json plan_json(const RunConfig& config, const std::vector<CellPlan>& plan) {
  json cells = json::array();
  for (const auto& c : plan) {
    const auto& a = config.attacks[c.attack_index];
    cells.push_back(json{{"cell_id", c.id},
                         {"attack_id", a.id},
                         {"family", to_string(a.spec.family)},
                         {"trigger", a.spec.trigger},
                         {"setting", to_string(c.setting)},
                         {"defense_id", config.defenses[c.defense_index].id},
                         {"attack_index", c.attack_index},
                         {"defense_index", c.defense_index}});
  }
  return json{{"schema_version", 1}, {"cells", cells}};
}

json provenance_json(const RunConfig& config, const std::string& run_id, const RunSummary& summary,
                     const std::string& started_at) {
  json backends = json::array();
  for (const auto& d : config.backends) backends.push_back(d);
  json cells = json::array();
  for (const auto& c : summary.cells) {
    cells.push_back(json{{"cell_id", c.id}, {"state", state_name(c.state)}, {"error", c.error}});
  }
  json defenses = json::object();
  for (const auto& d : config.defenses) {
    json steps = json::array();
    for (const auto& s : d.pipeline) steps.push_back(json{{"name", s.name}, {"params", s.params}});
    defenses[d.id] = steps;
  }
  return json{
      {"run_id", run_id},
      {"tool_version", kToolVersion},
      {"started_at", started_at},
      {"finished_at", utc_timestamp()},
      {"seeds", config.seeds},
      {"sample_seed", config.sample_seed},
      {"backends", backends},
      {"roles",
       {{"llm", config.roles.llm},
        {"embedder", config.roles.embedder},
        {"semantic_embedder", config.roles.semantic_embedder},
        {"visual_embedder", config.roles.visual_embedder},
        {"judge", config.roles.judge},
        {"fid_embedder", config.roles.fid_embedder},
        {"reference_generator", config.roles.reference_generator}}},
      {"thresholds",
       {{"rewrite_policy", config.rewrite_policy},
        {"asr_clip_rule", config.asr_clip_rule},
        {"defenses", defenses}}},
      {"templates",
       {{"rewrite_prompt_sha256", sha256_hex(rewriter::kRewriteTemplate)},
        {"asr_clip_target", eval::kTargetTemplate},
        {"judge_question", config.judge_question},
        {"judge_question_version", eval::kJudgeQuestionVersion}}},
      {"fid_reference",
       {{"generator", config.roles.reference_generator},
        {"captions", "clean captions of each cell"},
        {"seeds", config.seeds}}},
      {"substitution_site", attacks::to_string(config.substitution_site)},
      {"pepper_knows_trigger", config.pepper_knows_trigger},
      {"image_store", {{"renders", summary.renders}, {"cache_hits", summary.cache_hits}}},
      {"cells", cells},
      {"config", config.source},
  };
}

json result_json(const RunConfig& config, const CellPlan& plan, const eval::CellReport& rep) {
  const auto& a = config.attacks[plan.attack_index];
  const auto& d = config.defenses[plan.defense_index];
  json j{{"cell_id", plan.id},
         {"attack_id", a.id},
         {"attack", a.spec},
         {"trigger_display", text::display_trigger(a.spec.trigger)},
         {"setting", to_string(plan.setting)},
         {"defense_id", d.id},
         {"attack_index", plan.attack_index},
         {"defense_index", plan.defense_index},
         {"generator", a.generator},
         {"result", rep.result},
         {"refused", rep.refused},
         {"rewrite_warnings", rep.rewrite_warnings},
         {"fid_samples", rep.fid_samples}};
  j["fid_note"] = rep.fid_note ? json(*rep.fid_note) : json(nullptr);
  return j;
}

}  // namespace

RunSummary run_matrix(const RunConfig& config, BackendSet& backends, const RunOptions& options) {
  std::set<std::string> resolved;
  for (const auto& d : config.backends) {
    if (backends.has_instance(d.backend_id)) resolved.insert(d.backend_id);
  }
  validate_config(config, resolved);
  const std::string run_id = options.run_id.value_or(config.run_id);
  if (run_id.empty() || run_id.find('/') != std::string::npos || run_id == "." || run_id == "..") {
    throw ConfigError("invalid run id: " + run_id);
  }
  const auto plan = plan_cells(config);
  const auto selected = select_cells(plan, options.cell_filters);
  if (selected.empty()) throw ConfigError("no cell matches the --cells filter");

  RunSummary summary;
  summary.run_dir = config.output_dir / run_id;
  if (fs::exists(summary.run_dir) && !options.resume) {
    throw ConfigError("run directory exists: " + summary.run_dir.string() + " (pass --resume to continue it)");
  }
  fs::create_directories(summary.run_dir / "cells");
  const std::string started_at = utc_timestamp();

  std::set<PromptSetting> settings;
  for (const auto& c : selected) settings.insert(c.setting);
  std::vector<attacks::NamedAttack> named;
  for (const auto& a : config.attacks) named.push_back({a.id, a.spec});
  attacks::PromptSetOptions pso;
  pso.sample_size = config.long_sample_size;
  pso.seed = config.sample_seed;
  pso.injection.site = config.substitution_site;
  std::map<PromptSetting, attacks::PromptSet> prompt_sets;
  for (auto s : settings) {
    const auto source = s == PromptSetting::short_prompt
                            ? attacks::CaptionSource{config.short_templates}
                            : attacks::CaptionSource::from_file(*config.long_source);
    try {
      prompt_sets[s] = attacks::build_prompt_set(s, named, source, pso);
    } catch (const std::exception& e) {
      throw ConfigError(std::string("cannot build ") + std::string(to_string(s)) + " prompt set: " + e.what());
    }
    files::write_atomic(summary.run_dir / ("prompts_" + std::string(to_string(s)) + ".jsonl"),
                        attacks::to_jsonl(prompt_sets[s]));
  }
  files::write_atomic(summary.run_dir / "plan.json", plan_json(config, plan).dump(2) + "\n");

  auto store = std::make_shared<ImageStore>(summary.run_dir / "images");
  summary.cells.resize(selected.size());
  const int workers = options.workers.value_or(config.workers);
  std::mutex log_mu;
  auto log = [&](const std::string& m) {
    std::lock_guard lock(log_mu);
    say(options.log, m);
  };

  parallel_for(selected.size(), workers, [&](std::size_t i) {
    const CellPlan& cell = selected[i];
    CellStatus& status = summary.cells[i];
    status.id = cell.id;
    const fs::path dir = summary.run_dir / "cells" / cell.id;
    if (options.resume && fs::exists(dir / "result.json")) {
      status.state = CellState::skipped;
      log("cell " + cell.id + ": already complete");
      return;
    }
    try {
      fs::create_directories(dir);
      fs::remove(dir / "error.json");
      const auto& attack = config.attacks[cell.attack_index];
      const auto& defense = config.defenses[cell.defense_index];
      PipelineInputs in{store, backends.generator(attack.generator), &backends};
      const auto pipeline = build_pipeline(config, defense, attack, in);
      eval::CellBackends cb;
      cb.store = store.get();
      cb.generator = in.generator;
      if (config.metrics.asr_clip) cb.clip = backends.embedder(config.roles.embedder);
      if (config.metrics.asr_gpt) cb.judge = backends.judge(config.roles.judge);
      if (config.metrics.fid) {
        cb.reference_generator = backends.generator(config.roles.reference_generator);
        cb.fid_features = backends.embedder(config.roles.fid_embedder);
      }
      eval::CellOptions co;
      co.seeds = config.seeds;
      co.clip_rule = config.asr_clip_rule;
      co.judge_question = config.judge_question;
      co.checkpoint_dir = dir;
      co.workers = config.item_workers;
      const auto pairs = prompt_sets.at(cell.setting).for_attack(attack.id);
      const auto rep = eval::evaluate_cell(pairs, attack.spec, *pipeline, cb, config.metrics, co);
      files::write_atomic(dir / "result.json", result_json(config, cell, rep).dump(2) + "\n");
      status.state = CellState::completed;
      log("cell " + cell.id + ": done (" + std::to_string(rep.result.n_samples) + " samples, " +
          std::to_string(rep.resumed_items) + " resumed)");
    } catch (const std::exception& e) {
      status.state = CellState::failed;
      status.error = e.what();
      files::write_atomic(dir / "error.json", json{{"cell_id", cell.id}, {"error", e.what()}}.dump(2) + "\n");
      log("cell " + cell.id + ": FAILED: " + e.what());
    }
  });

  summary.renders = store->renders();
  summary.cache_hits = store->cache_hits();
  files::write_atomic(summary.run_dir / "provenance.json",
                      provenance_json(config, run_id, summary, started_at).dump(2) + "\n");
  report::write_report(summary.run_dir);
  return summary;
}

RecordSummary record_fixtures(const RunConfig& config, BackendSet& live, const RecordOptions& options) {
  if (options.samples.empty()) throw ConfigError("record-fixtures needs at least one sample caption");
  if (options.out_dir.empty()) throw ConfigError("record-fixtures needs an output directory");
  fs::create_directories(options.out_dir);

  RunConfig cfg = config;
  cfg.short_templates = options.samples;
  {
    std::string lines;
    for (const auto& s : options.samples) lines += s + "\n";
    const fs::path src = options.out_dir / "samples.txt";
    files::write_atomic(src, lines);
    cfg.long_source = src;
    cfg.long_sample_size = std::min(cfg.long_sample_size, options.samples.size());
  }
  cfg.output_dir = options.out_dir / "scratch";
  cfg.workers = 1;
  cfg.item_workers = 1;
  if (fs::exists(cfg.output_dir)) fs::remove_all(cfg.output_dir);

  RecordSummary out;
  BackendSet rec;
  std::vector<std::pair<std::string, std::shared_ptr<FixtureWriter>>> writers;
  for (const auto& d : config.backends) {
    rec.add(d);
    try {
      switch (d.kind) {
        case BackendKind::llm: {
          auto w = std::make_shared<FixtureWriter>(json{{"backend_id", d.backend_id}});
          rec.put_llm(d.backend_id, std::make_shared<RecordingLlm>(live.llm(d.backend_id), w));
          writers.emplace_back(d.backend_id, w);
          break;
        }
        case BackendKind::generator: {
          auto g = live.generator(d.backend_id);
          json header{{"backend_id", d.backend_id},
                      {"sampler", g->sampler_settings()},
                      {"attention", g->has_attention_probe()}};
          if (!d.get("checkpoint").empty()) header["checkpoint"] = d.get("checkpoint");
          auto w = std::make_shared<FixtureWriter>(header);
          rec.put_generator(d.backend_id, std::make_shared<RecordingGenerator>(g, w));
          writers.emplace_back(d.backend_id, w);
          break;
        }
        case BackendKind::embedder: {
          auto e = live.embedder(d.backend_id);
          auto w = std::make_shared<FixtureWriter>(json{{"backend_id", d.backend_id}, {"dimension", e->dimension()}});
          rec.put_embedder(d.backend_id, std::make_shared<RecordingEmbedder>(e, w));
          writers.emplace_back(d.backend_id, w);
          break;
        }
        case BackendKind::vlm_judge: {
          auto w = std::make_shared<FixtureWriter>(json{{"backend_id", d.backend_id}});
          rec.put_judge(d.backend_id, std::make_shared<RecordingJudge>(live.judge(d.backend_id), w));
          writers.emplace_back(d.backend_id, w);
          break;
        }
      }
    } catch (const std::exception& e) {
      out.failures.push_back(d.backend_id + ": " + e.what());
    }
  }

  if (out.failures.empty()) {
    RunOptions ro;
    ro.run_id = "record";
    ro.log = options.log;
    try {
      const auto summary = run_matrix(cfg, rec, ro);
      for (const auto& c : summary.cells) {
        if (c.state == CellState::failed) out.failures.push_back(c.id + ": " + c.error);
      }
    } catch (const std::exception& e) {
      out.failures.push_back(std::string("run: ") + e.what());
    }
  }
  for (const auto& [id, w] : writers) {
    const fs::path path = options.out_dir / (id + ".jsonl");
    w->write(path);
    out.fixtures[id] = path;
  }
  const fs::path manifest = options.out_dir / "failures.json";
  if (!out.failures.empty()) {
    files::write_atomic(manifest, json{{"failures", out.failures}, {"partial", true}}.dump(2) + "\n");
    out.failure_manifest = manifest;
  } else if (fs::exists(manifest)) {
    fs::remove(manifest);
  }
  fs::remove_all(cfg.output_dir);
  return out;
}

}  // namespace pepper::harness
