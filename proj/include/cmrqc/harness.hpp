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

#include <cstdint>
#include <functional>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cmrqc/baseline.hpp"
#include "cmrqc/cascade.hpp"
#include "cmrqc/dataprep.hpp"

namespace cmrqc::harness {

struct ConfusionCounts {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  std::size_t total() const { return tp + fp + fn + tn; }
  bool operator==(const ConfusionCounts&) const = default;
};

// Throws LengthMismatch.
ConfusionCounts confusion(std::span<const dataprep::Label> labels,
                          std::span<const dataprep::Label> predictions);

// Empty denominators give 0 with the matching flag set.
struct Metrics {
  double accuracy = 0, precision = 0, recall = 0, f_measure = 0, auc = 0;
  bool accuracy_undefined = false;
  bool precision_undefined = false;
  bool recall_undefined = false;
  bool f_undefined = false;
  bool auc_undefined = false;

  nlohmann::ordered_json to_json() const;
};

Metrics metrics(const ConfusionCounts& c);
// Adds the AUC of scores against labels.
Metrics metrics(const ConfusionCounts& c, std::span<const dataprep::Label> labels,
                std::span<const double> scores);

struct RocPoint {
  double fpr = 0, tpr = 0;
};

// Threshold-swept ROC from (0,0) to (1,1); tied scores form one step.
std::vector<RocPoint> roc_curve(std::span<const dataprep::Label> labels,
                                std::span<const double> scores);
// Trapezoidal area under roc_curve; nullopt when one class is absent.
std::optional<double> auc(std::span<const dataprep::Label> labels, std::span<const double> scores);

struct Summary {
  double mean = 0, sd_population = 0, sd_sample = 0;
};
Summary summarize(std::span<const double> values);

struct FoldMetrics {
  int fold = 0;
  ConfusionCounts counts;
  Metrics metrics;
  std::vector<RocPoint> roc;
};

// One model variant (baseline or a cascade mode) evaluated per fold.
struct MetricsReport {
  std::string task;
  std::string variant;  // "baseline", "cascade-label-free", "cascade-paper"
  std::vector<FoldMetrics> folds;

  // Mean and both SDs per metric over folds.
  std::map<std::string, Summary> summary() const;
  nlohmann::ordered_json to_json() const;
};

FoldMetrics score_fold(int fold, std::span<const dataprep::Label> labels,
                       std::span<const dataprep::Label> predictions, std::span<const double> scores);
// Final labels and probabilities of the decisions, or the initial ones.
FoldMetrics score_decisions(int fold, std::span<const cascade::CascadeDecision> decisions,
                            bool initial = false);

struct PipelineConfig {
  baseline::BaselineArchitectureSpec architecture;
  baseline::TrainConfig train;
  cascade::Algorithm1Config algorithm1;

  nlohmann::ordered_json to_json() const;
  static PipelineConfig from_json(const nlohmann::ordered_json& j);
};

enum class CvMode { Baseline, Cascade };
std::string to_string(CvMode m);
CvMode parse_cv_mode(const std::string& s);

// Everything a fold produced, handed to observers before it is dropped.
struct FoldArtifacts {
  int fold = 0;
  dataprep::Task task = dataprep::Task::Apex;
  std::span<const dataprep::TripletSample* const> train;
  std::span<const dataprep::TripletSample* const> test;
  const baseline::TrainResult* baseline = nullptr;
  const cascade::Algorithm1Result* algorithm1 = nullptr;  // cascade mode only
  std::span<const cascade::CascadeDecision> decisions;     // label-free, test fold
};

struct FoldRecord {
  int fold = 0;
  std::size_t train_size = 0, test_size = 0;
  std::string baseline_fingerprint;
  std::string unet_fingerprint;
  double unet_val_dice = 0.0;
  std::size_t corpus_size = 0;
  cascade::RecoveryReport test_recovery;      // label-free on the test fold
  cascade::RecoveryReport training_recovery;  // paper mode on the training folds
  ConfusionCounts training_after;             // training folds after Algorithm 2

  nlohmann::ordered_json to_json() const;
};

struct CrossValidation {
  std::string task;
  CvMode mode = CvMode::Baseline;
  std::vector<MetricsReport> reports;  // baseline first, then cascade variants
  std::vector<FoldRecord> records;
};

struct CvOptions {
  std::vector<int> folds;  // empty = all
  std::function<void(const FoldArtifacts&)> on_fold;
  std::function<void(const std::string&)> log;
};

// Trains on k-1 folds and tests on the held-out one for every fold.
// Throws InvalidSpec if a test sample or its volume appears in training.
CrossValidation crossvalidate(const dataprep::TaskDataset& dataset, const PipelineConfig& cfg,
                              CvMode mode, const CvOptions& options = {});

// Confirms that no test id or source volume occurs in the training set.
void check_no_leakage(std::span<const dataprep::TripletSample* const> train,
                      std::span<const dataprep::TripletSample* const> test);

// Writes report.json, tables.csv and roc_fold{i}.png into dir. Content is a
// pure function of the inputs. Throws IOFailure.
void emit_report(const std::string& dir, std::span<const CrossValidation> runs,
                 const nlohmann::ordered_json& run_info = {});

// Published numbers kept for context only; they come from data that is not
// available here.
nlohmann::ordered_json reference_results();

// 8-bit RGB PNG writer.
void write_png(const std::string& path, int width, int height, std::span<const std::uint8_t> rgb);
// Draws ROC curves (one colour per curve) on a square canvas.
std::vector<std::uint8_t> render_roc(std::span<const std::vector<RocPoint>> curves, int size);

}  // namespace cmrqc::harness
