// SPDX-License-Identifier: Apache-2.0
//
// Freezes the hand-authored rewrite corpus into replay fixtures: the
// scripted completions become llm.jsonl and the hashing embedder's vectors
// embedder.jsonl.
#include <iostream>
#include <map>

#include "CLI11.hpp"
#include "pepper/attacks.hpp"
#include "pepper/files.hpp"
#include "pepper/fixtures.hpp"
#include "pepper/live_backends.hpp"
#include "pepper/rewriter.hpp"

namespace {

using nlohmann::json;

class ScriptedLlm final : public pepper::LlmClient {
 public:
  const std::string& backend_id() const override { return id_; }
  void script(std::string prompt, std::vector<std::string> replies) { scripts_[std::move(prompt)] = std::move(replies); }
  std::string complete(std::string_view prompt, int attempt) override {
    const auto it = scripts_.find(std::string(prompt));
    if (it == scripts_.end()) throw pepper::BackendError("no scripted completion");
    const auto& v = it->second;
    return v[std::min<std::size_t>(static_cast<std::size_t>(attempt), v.size() - 1)];
  }

 private:
  std::string id_ = "corpus-llm";
  std::map<std::string, std::vector<std::string>> scripts_;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Build replay fixtures for the rewrite corpus"};
  std::string dir = "fixtures/rewrite_corpus";
  std::size_t dim = 256;
  app.add_option("--dir", dir, "Corpus directory (attacks.json, source.jsonl)");
  app.add_option("--dimension", dim, "Hashing embedder dimension");
  CLI11_PARSE(app, argc, argv);

  const std::filesystem::path root(dir);
  std::map<std::string, pepper::AttackSpec> specs;
  const json attacks_doc = json::parse(pepper::files::read_bytes(root / "attacks.json"));
  for (const auto& a : attacks_doc.at("attacks")) {
    specs[a.at("id").get<std::string>()] = a.get<pepper::AttackSpec>();
  }

  auto llm = std::make_shared<ScriptedLlm>();
  auto llm_out = std::make_shared<pepper::FixtureWriter>(json{{"backend_id", "corpus-llm"}});
  auto emb_out = std::make_shared<pepper::FixtureWriter>(json{{"backend_id", "corpus-embedder"}, {"dimension", dim}});
  pepper::RecordingLlm rec_llm(llm, llm_out);
  pepper::RecordingEmbedder rec_emb(std::make_shared<pepper::HashingEmbedder>("corpus-embedder", dim), emb_out);

  std::size_t n = 0;
  std::size_t accepted = 0;
  for (const auto& line : pepper::files::read_lines(root / "source.jsonl")) {
    if (line.empty()) continue;
    const json e = json::parse(line);
    const std::string attack_id = e.at("attack").get<std::string>();
    if (!specs.count(attack_id)) throw std::runtime_error("unknown attack in corpus: " + attack_id);
    const auto& spec = specs.at(attack_id);
    const auto setting = pepper::parse_prompt_setting(e.at("setting").get<std::string>());
    const auto clean = pepper::Caption::make(e.at("clean").get<std::string>(), pepper::CaptionRole::clean, setting);
    const auto poisoned = pepper::attacks::inject_trigger(clean, spec);
    llm->script(pepper::rewriter::build_rewrite_prompt(poisoned), e.at("rewrites").get<std::vector<std::string>>());
    const auto r = pepper::rewriter::rewrite_with_retry(poisoned, rec_llm, std::span(&spec, 1), rec_emb, nullptr,
                                                        pepper::rewriter::RewritePolicy{});
    ++n;
    accepted += r.accepted ? 1 : 0;
    std::cout << e.at("id").get<std::string>() << " attempts=" << r.attempts << (r.accepted ? " accepted" : " WARNING")
              << " ratio=" << r.quality.length_ratio << " dist=" << r.quality.semantic_distance << "\n";
  }
  llm_out->write(root / "llm.jsonl");
  emb_out->write(root / "embedder.jsonl");
  std::cout << n << " captions, " << accepted << " accepted\n";
  return 0;
}
