/*
 * Copyright 2026 The cmrqc Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */


#include "cmrqc/cascade.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

#include "cmrqc/common.hpp"

namespace cmrqc::cascade {

using dataprep::Label;
using dataprep::TripletSample;

std::string to_string(Mode m) { return m == Mode::LabelFree ? "label-free" : "paper"; }

Mode parse_mode(const std::string& s) {
  if (s == "label-free") return Mode::LabelFree;
  if (s == "paper") return Mode::PaperReplication;
  throw InvalidConfig("unknown cascade mode '" + s + "' (expected label-free or paper)");
}

nlohmann::ordered_json CascadeDecision::to_json() const {
  return {{"sample_id", sample_id},
          {"label", dataprep::to_string(true_label)},
          {"initial_probability", initial_probability},
          {"initial_label", dataprep::to_string(initial_label)},
          {"reprediction_applied", reprediction_applied},
          {"final_probability", final_probability},
          {"final_label", dataprep::to_string(final_label)}};
}

CascadeDecision CascadeDecision::from_json(const nlohmann::ordered_json& j) {
  CascadeDecision d;
  d.sample_id = j.at("sample_id").get<std::string>();
  d.true_label = dataprep::parse_label(j.at("label").get<std::string>());
  d.initial_probability = j.at("initial_probability").get<double>();
  d.initial_label = dataprep::parse_label(j.at("initial_label").get<std::string>());
  d.reprediction_applied = j.at("reprediction_applied").get<bool>();
  d.final_probability = j.at("final_probability").get<double>();
  d.final_label = dataprep::parse_label(j.at("final_label").get<std::string>());
  return d;
}

std::vector<CascadeDecision> improve_predictions(std::span<const TripletSample* const> samples,
                                                 const Predictor& predict,
                                                 const Masker& salient_region, Mode mode) {
  std::vector<CascadeDecision> out(samples.size());
  if (samples.empty()) return out;
  std::vector<const Stack*> stacks;
  for (const auto* s : samples) stacks.push_back(&s->stack);
  const auto initial = predict(stacks);
  if (initial.size() != samples.size()) throw LengthMismatch("predictor returned the wrong count");

  std::vector<std::size_t> redo;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    auto& d = out[i];
    d.sample_id = samples[i]->id;
    d.true_label = samples[i]->label;
    d.initial_probability = initial[i];
    d.initial_label = baseline::classify(initial[i]);
    d.final_probability = d.initial_probability;
    d.final_label = d.initial_label;
    const bool eligible = d.initial_label == Label::Negative &&
                          (mode == Mode::LabelFree || d.true_label == Label::Positive);
    if (eligible) redo.push_back(i);
  }

  // Re-predict in small chunks to bound the number of masked copies alive.
  constexpr std::size_t kChunk = 16;
  for (std::size_t b = 0; b < redo.size(); b += kChunk) {
    const std::size_t end = std::min(redo.size(), b + kChunk);
    std::vector<const Stack*> src;
    for (std::size_t k = b; k < end; ++k) src.push_back(stacks[redo[k]]);
    const auto masks = salient_region(src);
    if (masks.size() != src.size()) throw LengthMismatch("masker returned the wrong count");
    std::vector<Stack> masked;
    for (std::size_t k = 0; k < src.size(); ++k)
      masked.push_back(segmenter::apply_salient_region(*src[k], masks[k]));
    std::vector<const Stack*> ptrs;
    for (const auto& m : masked) ptrs.push_back(&m);
    const auto second = predict(ptrs);
    if (second.size() != ptrs.size()) throw LengthMismatch("predictor returned the wrong count");
    for (std::size_t k = b; k < end; ++k) {
      auto& d = out[redo[k]];
      d.reprediction_applied = true;
      d.final_probability = second[k - b];
      d.final_label = baseline::classify(d.final_probability);
    }
  }
  return out;
}

std::vector<CascadeDecision> improve_predictions(std::span<const TripletSample* const> samples,
                                                 baseline::BaselineModel& model,
                                                 segmenter::UNet& unet, Mode mode) {
  return improve_predictions(
      samples, [&](std::span<const Stack* const> s) { return model.predict_batch(s); },
      [&](std::span<const Stack* const> s) {
        std::vector<Mask> masks;
        for (const auto& p : unet.predict_proba(s)) masks.push_back(segmenter::threshold(p));
        return masks;
      },
      mode);
}

std::vector<CascadeDecision> improve_predictions(std::span<const TripletSample* const> samples,
                                                 const ModelCheckpoint& baseline_ckpt,
                                                 const ModelCheckpoint& unet_ckpt, Mode mode) {
  if (!baseline_ckpt.task.empty() && unet_ckpt.task != baseline_ckpt.task + "-unet")
    throw CheckpointArchMismatch("segmenter checkpoint task '" + unet_ckpt.task +
                                 "' does not match baseline task '" + baseline_ckpt.task + "'");
  auto model = baseline::BaselineModel::from_checkpoint(baseline_ckpt);
  auto unet = segmenter::UNet::from_checkpoint(unet_ckpt);
  return improve_predictions(samples, model, unet, mode);
}

nlohmann::ordered_json Algorithm1Config::to_json() const {
  return {{"explainer", explainer.to_json()},
          {"unet", unet.to_json()},
          {"unet_train", unet_train.to_json()},
          {"max_corpus", max_corpus}};
}

Algorithm1Config Algorithm1Config::from_json(const nlohmann::ordered_json& j) {
  Algorithm1Config c;
  if (j.contains("explainer")) c.explainer = explainer::ExplainerConfig::from_json(j["explainer"]);
  if (j.contains("unet")) c.unet = segmenter::UNetSpec::from_json(j["unet"]);
  if (j.contains("unet_train")) c.unet_train = segmenter::UNetTrainConfig::from_json(j["unet_train"]);
  c.max_corpus = j.value("max_corpus", c.max_corpus);
  return c;
}

std::vector<const TripletSample*> select_corpus_samples(std::span<const TripletSample* const> samples,
                                                       baseline::BaselineModel& model,
                                                       const Algorithm1Config& cfg) {
  std::vector<const TripletSample*> chosen(samples.begin(), samples.end());
  if (cfg.max_corpus == 0) return chosen;
  std::vector<const TripletSample*> positives;
  for (const auto* s : samples)
    if (s->label == Label::Positive) positives.push_back(s);
  std::vector<const Stack*> stacks;
  for (const auto* s : positives) stacks.push_back(&s->stack);
  const auto probs = stacks.empty() ? std::vector<double>{} : model.predict_batch(stacks);
  chosen.clear();
  for (std::size_t i = 0; i < positives.size(); ++i)
    if (baseline::classify(probs[i]) == Label::Positive) chosen.push_back(positives[i]);
  if (chosen.size() > cfg.max_corpus) {
    Rng rng(derive_seed(cfg.explainer.seed, "corpus-cap"));
    for (std::size_t i = chosen.size(); i > 1; --i) std::swap(chosen[i - 1], chosen[rng.below(i)]);
    chosen.resize(cfg.max_corpus);
    std::sort(chosen.begin(), chosen.end(),
              [](const TripletSample* a, const TripletSample* b) { return a->id < b->id; });
  }
  return chosen;
}

Algorithm1Result run_algorithm1(std::span<const TripletSample* const> samples,
                                baseline::BaselineModel& model, const Algorithm1Config& cfg,
                                const segmenter::UNetEpochCallback& on_epoch) {
  const auto chosen = select_corpus_samples(samples, model, cfg);
  Algorithm1Result r;
  r.corpus = explainer::build_mask_corpus(chosen, model, cfg.explainer);
  if (!samples.empty()) r.corpus.task = samples.front()->task;
  auto unet = segmenter::UNet::build(cfg.unet, cfg.unet_train.seed);
  r.unet = segmenter::train_unet(unet, r.corpus, cfg.unet_train, on_epoch);
  return r;
}

nlohmann::ordered_json RecoveryReport::to_json() const {
  nlohmann::ordered_json j{{"total", total},
                           {"misclassified_before", misclassified_before},
                           {"misclassified_after", misclassified_after},
                           {"fn_before", fn_before},
                           {"fn_after", fn_after},
                           {"fp_before", fp_before},
                           {"fp_after", fp_after},
                           {"recovered", recovered},
                           {"broken", broken},
                           {"repredicted", repredicted}};
  if (recovery_defined)
    j["recovery_fraction"] = recovery_fraction;
  else
    j["recovery_fraction"] = "n/a";
  return j;
}

RecoveryReport improve_training_set_report(std::span<const CascadeDecision> decisions) {
  RecoveryReport r;
  r.total = decisions.size();
  for (const auto& d : decisions) {
    const bool pos = d.true_label == Label::Positive;
    const bool wrong_before = (d.initial_label == Label::Positive) != pos;
    const bool wrong_after = (d.final_label == Label::Positive) != pos;
    r.misclassified_before += wrong_before;
    r.misclassified_after += wrong_after;
    r.fn_before += pos && d.initial_label == Label::Negative;
    r.fn_after += pos && d.final_label == Label::Negative;
    r.fp_before += !pos && d.initial_label == Label::Positive;
    r.fp_after += !pos && d.final_label == Label::Positive;
    r.recovered += wrong_before && !wrong_after;
    r.broken += !wrong_before && wrong_after;
    r.repredicted += d.reprediction_applied;
  }
  r.recovery_defined = r.misclassified_before > 0;
  if (r.recovery_defined)
    r.recovery_fraction =
        static_cast<double>(r.recovered) / static_cast<double>(r.misclassified_before);
  return r;
}

void write_decisions(const std::string& path, std::span<const CascadeDecision> decisions) {
  std::ofstream out(path);
  if (!out) throw IOFailure("cannot write " + path);
  for (const auto& d : decisions) out << d.to_json().dump() << '\n';
  if (!out) throw IOFailure("write failed for " + path);
}

std::vector<CascadeDecision> read_decisions(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw MissingArtifact("decisions not found at " + path + " (run cascade first)");
  std::vector<CascadeDecision> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      out.push_back(CascadeDecision::from_json(nlohmann::ordered_json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw UnreadableFile(path + ": " + e.what());
    }
  }
  return out;
}

}  // namespace cmrqc::cascade
