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


#pragma once

#include <functional>
#include <nlohmann/json.hpp>
#include <span>
#include <string>
#include <vector>

#include "cmrqc/baseline.hpp"
#include "cmrqc/explainer.hpp"
#include "cmrqc/segmenter.hpp"

namespace cmrqc::cascade {

// LabelFree re-predicts every negative prediction. PaperReplication only
// re-predicts ground-truth positives that were predicted negative, which
// needs labels and is meant for evaluation only.
enum class Mode { LabelFree, PaperReplication };

std::string to_string(Mode m);  // "label-free" / "paper"
Mode parse_mode(const std::string& s);  // throws InvalidConfig

struct CascadeDecision {
  std::string sample_id;
  dataprep::Label true_label = dataprep::Label::Negative;  // audit only
  double initial_probability = 0.0;
  dataprep::Label initial_label = dataprep::Label::Negative;
  bool reprediction_applied = false;
  double final_probability = 0.0;
  dataprep::Label final_label = dataprep::Label::Negative;

  nlohmann::ordered_json to_json() const;
  static CascadeDecision from_json(const nlohmann::ordered_json& j);
  bool operator==(const CascadeDecision&) const = default;
};

using Predictor = explainer::Predictor;
using Masker = std::function<std::vector<Mask>(std::span<const Stack* const>)>;

// One decision per sample, in input order.
std::vector<CascadeDecision> improve_predictions(
    std::span<const dataprep::TripletSample* const> samples, const Predictor& predict,
    const Masker& salient_region, Mode mode = Mode::LabelFree);
std::vector<CascadeDecision> improve_predictions(
    std::span<const dataprep::TripletSample* const> samples, baseline::BaselineModel& model,
    segmenter::UNet& unet, Mode mode = Mode::LabelFree);
std::vector<CascadeDecision> improve_predictions(
    std::span<const dataprep::TripletSample* const> samples, const ModelCheckpoint& baseline_ckpt,
    const ModelCheckpoint& unet_ckpt, Mode mode = Mode::LabelFree);

struct Algorithm1Config {
  explainer::ExplainerConfig explainer;
  segmenter::UNetSpec unet;
  segmenter::UNetTrainConfig unet_train;
  // Upper bound on explained true positives; 0 keeps them all.
  std::size_t max_corpus = 0;

  nlohmann::ordered_json to_json() const;
  static Algorithm1Config from_json(const nlohmann::ordered_json& j);
};

struct Algorithm1Result {
  explainer::MaskCorpus corpus;
  segmenter::UNetTrainResult unet;
};

// With a max_corpus cap, a seeded subset of the true positives sorted by id;
// otherwise all samples (the explainer keeps the true positives itself).
std::vector<const dataprep::TripletSample*> select_corpus_samples(
    std::span<const dataprep::TripletSample* const> samples, baseline::BaselineModel& model,
    const Algorithm1Config& cfg);

// Explains the true positives among samples, then trains the segmenter on
// the resulting corpus. Throws EmptyCorpus.
Algorithm1Result run_algorithm1(std::span<const dataprep::TripletSample* const> samples,
                                baseline::BaselineModel& model, const Algorithm1Config& cfg,
                                const segmenter::UNetEpochCallback& on_epoch = {});

struct RecoveryReport {
  std::size_t total = 0;
  std::size_t misclassified_before = 0;
  std::size_t misclassified_after = 0;
  std::size_t fn_before = 0, fn_after = 0;
  std::size_t fp_before = 0, fp_after = 0;
  std::size_t recovered = 0;  // wrong before, right after
  std::size_t broken = 0;     // right before, wrong after
  std::size_t repredicted = 0;
  // recovered / misclassified_before; undefined (n/a) with no errors.
  bool recovery_defined = false;
  double recovery_fraction = 0.0;

  nlohmann::ordered_json to_json() const;
};

RecoveryReport improve_training_set_report(std::span<const CascadeDecision> decisions);

// One JSON object per line.
void write_decisions(const std::string& path, std::span<const CascadeDecision> decisions);
std::vector<CascadeDecision> read_decisions(const std::string& path);

}  // namespace cmrqc::cascade
