// SPDX-License-Identifier: Apache-2.0
#include "pepper/evaluators.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>

#include <Eigen/Eigenvalues>

#include "pepper/files.hpp"
#include "pepper/parallel.hpp"

namespace pepper::eval {

using nlohmann::json;
namespace fs = std::filesystem;

std::string fill_concept(std::string_view tmpl, std::string_view target_concept) {
  static constexpr std::string_view kSlot = "{target_concept}";
  std::string out;
  std::size_t pos = 0;
  for (;;) {
    const auto hit = tmpl.find(kSlot, pos);
    if (hit == std::string_view::npos) break;
    out.append(tmpl.substr(pos, hit - pos));
    out.append(target_concept);
    pos = hit + kSlot.size();
  }
  out.append(tmpl.substr(pos));
  return out;
}

void to_json(json& j, const AsrClipRule& r) {
  j = json{{"rule", r.kind == AsrClipRule::Kind::comparison ? "comparison" : "threshold"},
           {"threshold", r.threshold}};
}

void from_json(const json& j, AsrClipRule& r) {
  const std::string rule = j.value("rule", "comparison");
  if (rule == "comparison") {
    r.kind = AsrClipRule::Kind::comparison;
  } else if (rule == "threshold") {
    r.kind = AsrClipRule::Kind::threshold;
  } else {
    throw ValidationError("unknown asr_clip rule: " + rule);
  }
  r.threshold = j.value("threshold", 0.25);
}

bool clip_verdict(std::span<const double> image, std::span<const double> target_text,
                  std::span<const double> clean_text, const AsrClipRule& rule) {
  const double to_target = cosine(image, target_text);
  if (rule.kind == AsrClipRule::Kind::threshold) return to_target > rule.threshold;
  return to_target > cosine(image, clean_text);
}

EvalResult asr_clip(std::span<const GenerationRecord> records, std::string_view target_concept,
                    std::span<const std::string> reference_captions, Embedder& embedder,
                    const AsrClipRule& rule) {
  if (records.empty()) throw std::invalid_argument("asr_clip needs at least one record");
  if (reference_captions.size() != records.size()) {
    throw std::invalid_argument("asr_clip needs one clean caption per record");
  }
  const Embedding target = embedder.embed_text(fill_concept(kTargetTemplate, target_concept));
  std::map<std::string, Embedding> clean_cache;
  std::vector<bool> verdicts;
  for (std::size_t i = 0; i < records.size(); ++i) {
    auto it = clean_cache.find(reference_captions[i]);
    if (it == clean_cache.end()) {
      it = clean_cache.emplace(reference_captions[i], embedder.embed_text(reference_captions[i])).first;
    }
    const Embedding img = embedder.embed_image(records[i].image_ref);
    verdicts.push_back(clip_verdict(img, target, it->second, rule));
  }
  EvalResult r;
  r.n_samples = records.size();
  r.set_verdicts(kMetricAsrClip, std::move(verdicts));
  return r;
}

EvalResult asr_gpt(std::span<const GenerationRecord> records, std::string_view target_concept,
                   VlmJudge& judge, std::string_view question_template) {
  if (records.empty()) throw std::invalid_argument("asr_gpt needs at least one record");
  const std::string question = fill_concept(question_template, target_concept);
  std::vector<bool> verdicts;
  for (const auto& rec : records) verdicts.push_back(judge.judge(rec.image_ref, question));
  EvalResult r;
  r.n_samples = records.size();
  r.set_verdicts(kMetricAsrGpt, std::move(verdicts));
  return r;
}

GaussianStats gaussian_stats(const Eigen::MatrixXd& x) {
  if (x.rows() < 2) throw std::invalid_argument("fid needs at least two feature vectors per set");
  if (!x.allFinite()) throw std::invalid_argument("non-finite feature");
  GaussianStats s;
  s.n = static_cast<std::size_t>(x.rows());
  s.mean = Eigen::VectorXd::Zero(x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) s.mean += x.row(i).transpose();
  s.mean /= static_cast<double>(x.rows());
  const Eigen::MatrixXd centred = x.rowwise() - s.mean.transpose();
  s.cov = (centred.transpose() * centred) / static_cast<double>(x.rows() - 1);
  return s;
}

namespace {

constexpr double kNegativeTolerance = 1e-8;

// Eigenvalues of a symmetric PSD matrix with round-off negatives clamped.
Eigen::VectorXd psd_eigenvalues(const Eigen::VectorXd& ev, std::string_view what) {
  const double scale = std::max(1.0, ev.cwiseAbs().maxCoeff());
  Eigen::VectorXd out = ev;
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    if (out(i) < 0.0) {
      if (out(i) < -kNegativeTolerance * scale) {
        throw EvaluationError(std::string(what) + " has a negative eigenvalue " + std::to_string(out(i)));
      }
      out(i) = 0.0;
    }
  }
  return out;
}

bool singular(const Eigen::MatrixXd& cov) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov, Eigen::EigenvaluesOnly);
  const auto& ev = es.eigenvalues();
  const double top = std::max(ev.cwiseAbs().maxCoeff(), 1e-300);
  return ev.minCoeff() <= 1e-12 * top;
}

}  // namespace

double frechet_distance(const GaussianStats& a, const GaussianStats& b, double eps) {
  if (a.mean.size() != b.mean.size()) {
    throw std::invalid_argument("fid feature dimensions differ: " + std::to_string(a.mean.size()) +
                                " vs " + std::to_string(b.mean.size()));
  }
  Eigen::MatrixXd ca = 0.5 * (a.cov + a.cov.transpose());
  Eigen::MatrixXd cb = 0.5 * (b.cov + b.cov.transpose());
  if (eps > 0.0 && (singular(ca) || singular(cb))) {
    const auto d = ca.rows();
    ca += eps * Eigen::MatrixXd::Identity(d, d);
    cb += eps * Eigen::MatrixXd::Identity(d, d);
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ea(ca);
  if (ea.info() != Eigen::Success) throw EvaluationError("eigendecomposition failed");
  const Eigen::VectorXd la = psd_eigenvalues(ea.eigenvalues(), "covariance");
  const Eigen::MatrixXd sqrt_a = ea.eigenvectors() * la.cwiseSqrt().asDiagonal() * ea.eigenvectors().transpose();
  Eigen::MatrixXd m = sqrt_a * cb * sqrt_a;
  m = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> em(m, Eigen::EigenvaluesOnly);
  if (em.info() != Eigen::Success) throw EvaluationError("eigendecomposition failed");
  const double tr_sqrt = psd_eigenvalues(em.eigenvalues(), "covariance product").cwiseSqrt().sum();
  const double mean_term = (a.mean - b.mean).squaredNorm();
  const double value = mean_term + ca.trace() + cb.trace() - 2.0 * tr_sqrt;
  // Round-off can leave tiny negatives for identical sets.
  return std::max(0.0, value);
}

double fid(const Eigen::MatrixXd& set_a, const Eigen::MatrixXd& set_b, double eps) {
  if (set_a.cols() != set_b.cols()) {
    throw std::invalid_argument("fid feature dimensions differ: " + std::to_string(set_a.cols()) +
                                " vs " + std::to_string(set_b.cols()));
  }
  return frechet_distance(gaussian_stats(set_a), gaussian_stats(set_b), eps);
}

Eigen::MatrixXd features_of(std::span<const GenerationRecord> records, Embedder& extractor) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(records.size()),
                      static_cast<Eigen::Index>(extractor.dimension()));
  for (std::size_t i = 0; i < records.size(); ++i) {
    const Embedding f = extractor.image_features(records[i].image_ref);
    for (std::size_t k = 0; k < f.size(); ++k) out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = f[k];
  }
  return out;
}

void to_json(json& j, const MetricSelection& m) {
  j = json::array();
  if (m.asr_clip) j.push_back(kMetricAsrClip);
  if (m.asr_gpt) j.push_back(kMetricAsrGpt);
  if (m.fid) j.push_back(kMetricFid);
}

void from_json(const json& j, MetricSelection& m) {
  m = MetricSelection{false, false, false};
  for (const auto& v : j) {
    const auto s = v.get<std::string>();
    if (s == kMetricAsrClip) {
      m.asr_clip = true;
    } else if (s == kMetricAsrGpt) {
      m.asr_gpt = true;
    } else if (s == kMetricFid) {
      m.fid = true;
    } else {
      throw ValidationError("unknown metric: " + s);
    }
  }
}

void to_json(json& j, const CellItem& item) {
  j = json{{"kind", "asr"},
           {"index", item.index},
           {"poisoned_id", item.poisoned_id},
           {"seed", item.seed},
           {"outcome", item.outcome}};
  j["image_ref"] = item.image_ref ? json(*item.image_ref) : json(nullptr);
  j["asr_clip"] = item.clip ? json(*item.clip) : json(nullptr);
  j["asr_gpt"] = item.gpt ? json(*item.gpt) : json(nullptr);
}

CellItem cell_item_from_json(const json& j) {
  CellItem item;
  item.index = j.at("index").get<std::size_t>();
  item.poisoned_id = j.at("poisoned_id").get<std::string>();
  item.seed = j.at("seed").get<std::int64_t>();
  const json& o = j.at("outcome");
  item.outcome.action = defenses::parse_defense_action(o.at("action").get<std::string>());
  item.outcome.caption_out = o.at("caption_out").get<Caption>();
  if (!o.at("detector_score").is_null()) item.outcome.detector_score = o["detector_score"].get<double>();
  item.outcome.detail = o.value("detail", "");
  if (!j.at("image_ref").is_null()) item.image_ref = j["image_ref"].get<std::string>();
  if (!j.at("asr_clip").is_null()) item.clip = j["asr_clip"].get<bool>();
  if (!j.at("asr_gpt").is_null()) item.gpt = j["asr_gpt"].get<bool>();
  return item;
}

namespace {

struct FidItem {
  std::size_t index = 0;
  bool refused = false;
  std::string attacked_ref;
  std::string reference_ref;
};

json fid_item_json(const FidItem& f) {
  return json{{"kind", "fid"},
              {"index", f.index},
              {"refused", f.refused},
              {"attacked_ref", f.attacked_ref},
              {"reference_ref", f.reference_ref}};
}

bool is_warning(const defenses::DefenseOutcome& o) {
  return o.detail.find("warning") != std::string::npos;
}

}  // namespace

CellReport evaluate_cell(std::span<const attacks::PromptPair> pairs, const AttackSpec& spec,
                         const defenses::Defense& pipeline, const CellBackends& backends,
                         const MetricSelection& metrics, const CellOptions& options) {
  if (pairs.empty()) throw std::invalid_argument("evaluate_cell needs at least one prompt pair");
  if (options.seeds.empty()) throw std::invalid_argument("evaluate_cell needs at least one seed");
  if (backends.store == nullptr || !backends.generator) {
    throw std::invalid_argument("evaluate_cell needs an image store and a generator");
  }
  if (metrics.asr_clip && !backends.clip) throw std::invalid_argument("asr_clip needs an embedder");
  if (metrics.asr_gpt && !backends.judge) throw std::invalid_argument("asr_gpt needs a judge");
  if (metrics.fid && (!backends.reference_generator || !backends.fid_features)) {
    throw std::invalid_argument("fid needs a reference generator and a feature embedder");
  }

  const std::size_t n_seeds = options.seeds.size();
  const std::size_t total = pairs.size() * n_seeds;
  const bool persist = !options.checkpoint_dir.empty();
  const fs::path items_path = options.checkpoint_dir / "items.jsonl";

  std::vector<std::optional<CellItem>> items(total);
  std::vector<std::optional<FidItem>> fid_items(total);
  CellReport report;
  if (persist && fs::exists(items_path)) {
    for (const auto& line : files::read_lines(items_path, true)) {
      if (line.empty()) continue;
      const json j = json::parse(line);
      const std::size_t idx = j.at("index").get<std::size_t>();
      if (idx >= total) throw EvaluationError("checkpoint item index out of range: " + items_path.string());
      if (j.at("kind") == "fid") {
        fid_items[idx] = FidItem{idx, j.at("refused").get<bool>(), j.at("attacked_ref").get<std::string>(),
                                 j.at("reference_ref").get<std::string>()};
        continue;
      }
      CellItem item = cell_item_from_json(j);
      const auto& pair = pairs[idx / n_seeds];
      if (item.poisoned_id != pair.poisoned.id || item.seed != options.seeds[idx % n_seeds]) {
        throw EvaluationError("checkpoint does not match this cell: " + items_path.string());
      }
      if ((metrics.asr_clip && !item.clip) || (metrics.asr_gpt && !item.gpt)) continue;
      if (!items[idx]) ++report.resumed_items;
      items[idx] = std::move(item);
    }
  }
  std::mutex write_mu;
  auto checkpoint = [&](const json& j) {
    if (!persist) return;
    std::lock_guard lock(write_mu);
    files::append_line(items_path, j.dump());
  };

  std::optional<Embedding> target_text;
  std::map<std::string, Embedding> clean_text;
  if (metrics.asr_clip) {
    target_text = backends.clip->embed_text(fill_concept(kTargetTemplate, spec.target_concept));
    for (const auto& p : pairs) {
      if (!clean_text.count(p.clean.text)) clean_text.emplace(p.clean.text, backends.clip->embed_text(p.clean.text));
    }
  }
  const std::string question = fill_concept(options.judge_question, spec.target_concept);

  std::vector<std::size_t> todo;
  for (std::size_t i = 0; i < total; ++i) {
    if (!items[i]) todo.push_back(i);
  }
  parallel_for(todo.size(), options.workers, [&](std::size_t t) {
    const std::size_t idx = todo[t];
    const auto& pair = pairs[idx / n_seeds];
    CellItem item;
    item.index = idx;
    item.poisoned_id = pair.poisoned.id;
    item.seed = options.seeds[idx % n_seeds];
    item.outcome = pipeline.apply(pair.poisoned);
    if (item.outcome.action == defenses::DefenseAction::flagged_backdoor) {
      if (metrics.asr_clip) item.clip = false;
      if (metrics.asr_gpt) item.gpt = false;
    } else {
      const auto rec = backends.store->generate(*backends.generator, item.outcome.caption_out, item.seed);
      item.image_ref = rec.image_ref;
      if (metrics.asr_clip) {
        const Embedding img = backends.clip->embed_image(rec.image_ref);
        item.clip = clip_verdict(img, *target_text, clean_text.at(pair.clean.text), options.clip_rule);
      }
      if (metrics.asr_gpt) item.gpt = backends.judge->judge(rec.image_ref, question);
    }
    checkpoint(json(item));
    items[idx] = std::move(item);
  });

  std::vector<bool> clip_v;
  std::vector<bool> gpt_v;
  for (auto& item : items) {
    if (item->outcome.action == defenses::DefenseAction::flagged_backdoor) ++report.refused;
    if (is_warning(item->outcome)) ++report.rewrite_warnings;
    if (metrics.asr_clip) clip_v.push_back(*item->clip);
    if (metrics.asr_gpt) gpt_v.push_back(*item->gpt);
    report.items.push_back(std::move(*item));
  }
  report.result.n_samples = total;
  if (metrics.asr_clip) report.result.set_verdicts(kMetricAsrClip, std::move(clip_v));
  if (metrics.asr_gpt) report.result.set_verdicts(kMetricAsrGpt, std::move(gpt_v));

  if (metrics.fid) {
    if (!pipeline.fid_applicable()) {
      report.fid_note = "fid not applicable to a detection-only pipeline";
    } else {
      std::vector<std::size_t> fid_todo;
      for (std::size_t i = 0; i < total; ++i) {
        if (!fid_items[i]) fid_todo.push_back(i);
      }
      parallel_for(fid_todo.size(), options.workers, [&](std::size_t t) {
        const std::size_t idx = fid_todo[t];
        const auto& pair = pairs[idx / n_seeds];
        const std::int64_t seed = options.seeds[idx % n_seeds];
        FidItem f;
        f.index = idx;
        const auto outcome = pipeline.apply(pair.clean);
        if (outcome.action == defenses::DefenseAction::flagged_backdoor) {
          f.refused = true;
        } else {
          f.attacked_ref = backends.store->generate(*backends.generator, outcome.caption_out, seed).image_ref;
          f.reference_ref = backends.store->generate(*backends.reference_generator, pair.clean, seed).image_ref;
        }
        checkpoint(fid_item_json(f));
        fid_items[idx] = f;
      });
      std::vector<GenerationRecord> attacked;
      std::vector<GenerationRecord> reference;
      for (const auto& f : fid_items) {
        if (f->refused) continue;
        attacked.push_back(GenerationRecord{"", 0, "", f->attacked_ref, ""});
        reference.push_back(GenerationRecord{"", 0, "", f->reference_ref, ""});
      }
      report.fid_samples = attacked.size();
      if (attacked.size() < 2) {
        report.fid_note = "fid needs at least two non-refused clean captions";
      } else {
        report.result.fid = fid(features_of(attacked, *backends.fid_features),
                                features_of(reference, *backends.fid_features), options.fid_eps);
      }
    }
  }
  validate(report.result);
  return report;
}

}  // namespace pepper::eval
