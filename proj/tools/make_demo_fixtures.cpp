// SPDX-License-Identifier: Apache-2.0
//
// Records the replay fixtures behind configs/mini_replay.json from the
// simulated testbed backends.
#include <iostream>

#include "CLI11.hpp"
#include "pepper/config.hpp"
#include "pepper/harness.hpp"
#include "pepper/testbed.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Record mini-matrix replay fixtures from simulated backends"};
  std::string config_path = "configs/mini_replay.json";
  std::string out = "fixtures/mini";
  app.add_option("--config", config_path, "Replay configuration to record for");
  app.add_option("--out", out, "Fixture directory");
  CLI11_PARSE(app, argc, argv);

  namespace tb = pepper::testbed;
  auto cfg = pepper::load_config(config_path);

  auto enc = std::make_shared<tb::ToyEncoder>(32, 2024);
  for (const char* w : {"a", "photo", "of", "zebra", "dog", "beautiful", "car"}) enc->add_token(w);

  // Each backdoored model owns the region around its poisoned short caption.
  const auto rr = tb::make_region(*enc, "A photଠ of", 0.3, "zebra");
  const auto ti = tb::make_region(*enc, "A photo of beautiful car", 0.2, "dog");

  pepper::BackendSet sims;
  sims.put_generator("gen-rr", std::make_shared<tb::SimGenerator>("gen-rr", enc, rr));
  sims.put_generator("gen-ti", std::make_shared<tb::SimGenerator>("gen-ti", enc, ti));
  sims.put_generator("gen-clean", std::make_shared<tb::SimGenerator>("gen-clean", enc, std::nullopt));
  sims.put_embedder("clip", std::make_shared<tb::SimEmbedder>("clip", enc));
  sims.put_llm("rewriter", std::make_shared<tb::SimLlm>("rewriter", tb::SimLlm::Mode::sensory,
                                                       std::map<std::string, std::string>{}, 2,
                                                       std::vector<std::string>{"a", "photo", "of"}));
  sims.put_judge("judge", std::make_shared<tb::SimJudge>("judge", enc, 0.5));

  pepper::harness::RecordOptions opts;
  opts.out_dir = out;
  opts.samples = cfg.short_templates;
  opts.log = [](const std::string& m) { std::cerr << m << "\n"; };
  const auto summary = pepper::harness::record_fixtures(cfg, sims, opts);
  for (const auto& [id, path] : summary.fixtures) std::cout << id << " -> " << path.string() << "\n";
  for (const auto& f : summary.failures) std::cerr << "failure: " << f << "\n";
  return summary.failures.empty() ? 0 : 3;
}
