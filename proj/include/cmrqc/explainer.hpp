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
#include <nlohmann/json.hpp>
#include <span>
#include <string>
#include <vector>

#include "cmrqc/baseline.hpp"
#include "cmrqc/dataprep.hpp"
#include "cmrqc/image.hpp"

namespace cmrqc::explainer {

struct SlicParams {
  int n_segments = 25;
  double compactness = 0.3;
  int max_iter = 1000;
};

// One superpixel id per pixel of a 2D plane, ids in [0, num_segments).
struct SuperpixelMap {
  int height = 0;
  int width = 0;
  std::vector<int> labels;
  int num_segments = 0;
  SlicParams params;
  // Set when the input had no intensity variation (single segment).
  bool degenerate = false;

  int at(int y, int x) const { return labels[static_cast<std::size_t>(y) * width + x]; }
  std::vector<std::size_t> segment_sizes() const;
};

// SLIC on a single grayscale plane.
SuperpixelMap slic(const Image& img, const SlicParams& params = {});
// Mean projection over the slices of the stack, then SLIC.
SuperpixelMap segment(const Stack& stack, const SlicParams& params = {});
Image mean_projection(const Stack& stack);

// B x K on/off matrix; row 0 is all ones.
struct PerturbationBatch {
  int rows = 0;
  int cols = 0;
  std::vector<std::uint8_t> matrix;
  std::uint64_t seed = 0;
  double on_probability = 0.5;

  std::span<const std::uint8_t> row(int b) const {
    return {matrix.data() + static_cast<std::size_t>(b) * cols, static_cast<std::size_t>(cols)};
  }
};

PerturbationBatch make_perturbations(int rows, int cols, std::uint64_t seed,
                                     double on_probability = 0.5);

// Off superpixels are set to fill on every slice. Throws DimensionMismatch.
Stack perturb_one(const Stack& stack, const SuperpixelMap& spmap,
                  std::span<const std::uint8_t> row, float fill);
std::vector<Stack> perturb(const Stack& stack, const SuperpixelMap& spmap,
                           const PerturbationBatch& batch, float fill);

// Cosine distance to the all-ones vector mapped through the exponential
// kernel and a square root. An all-off row gets 0 with a warning.
double perturbation_weight(std::span<const std::uint8_t> row, double kernel_width);

struct SurrogateFit {
  std::vector<double> coefficients;
  double intercept = 0.0;
  double r2 = 0.0;  // weighted; 0 when the targets have no spread
  double ridge_used = 0.0;
  bool rank_deficient = false;
};

// Weighted ridge regression with an unpenalized intercept. Weights are
// normalized to sum to one, so scaling them does not change the fit.
// Throws LengthMismatch.
SurrogateFit fit_surrogate(const PerturbationBatch& batch, std::span<const double> predictions,
                           std::span<const double> weights, double ridge = 1e-6);

struct ExplainerConfig {
  int num_perturbations = 150;
  double kernel_width = 0.25;
  float fill_value = 0.0f;
  double ridge_penalty = 1e-6;
  double on_probability = 0.5;
  SlicParams slic;
  std::uint64_t seed = 0;

  void validate() const;  // throws InvalidConfig
  nlohmann::ordered_json to_json() const;
  static ExplainerConfig from_json(const nlohmann::ordered_json& j);
};

struct ExplanationResult {
  std::vector<double> coefficients;
  double intercept = 0.0;
  int top_superpixel_id = 0;
  Mask mask;
  double surrogate_r2 = 0.0;
  SuperpixelMap superpixels;
  bool rank_deficient = false;

  nlohmann::ordered_json meta() const;
};

// Scores a batch of stacks with positive-class probabilities.
using Predictor = std::function<std::vector<double>(std::span<const Stack* const>)>;

// Lowest id among the maximal coefficients.
int top_superpixel(std::span<const double> coefficients);
Mask superpixel_mask(const SuperpixelMap& spmap, int id, int depth = kStackDepth);

ExplanationResult explain(const Stack& stack, const Predictor& predictor,
                          const ExplainerConfig& cfg);
ExplanationResult explain(const Stack& stack, baseline::BaselineModel& model,
                          const ExplainerConfig& cfg);
ExplanationResult explain(const Stack& stack, const ModelCheckpoint& ckpt,
                          const ExplainerConfig& cfg);

struct CorpusEntry {
  std::string sample_id;
  std::string source_volume_id;
  Stack stack;
  Mask mask;
  nlohmann::ordered_json meta;
};

// Aligned (true-positive stack, explanation mask) pairs for one task.
struct MaskCorpus {
  dataprep::Task task = dataprep::Task::Apex;
  std::vector<CorpusEntry> entries;
};

// Explains every positive sample the model classifies as positive. Each
// sample uses a seed derived from cfg.seed and its id. Throws EmptyCorpus.
MaskCorpus build_mask_corpus(std::span<const dataprep::TripletSample* const> samples,
                             const Predictor& predictor, const ExplainerConfig& cfg);
MaskCorpus build_mask_corpus(std::span<const dataprep::TripletSample* const> samples,
                             baseline::BaselineModel& model, const ExplainerConfig& cfg);
MaskCorpus build_mask_corpus(const dataprep::TaskDataset& dataset,
                             std::span<const std::size_t> indices,
                             baseline::BaselineModel& model, const ExplainerConfig& cfg);

// Directory layout: corpus.json index plus one directory per pair holding
// stack.raw, mask.raw (with JSON sidecars) and meta.json.
void write_corpus(const std::string& dir, const MaskCorpus& corpus);
MaskCorpus read_corpus(const std::string& dir);

}  // namespace cmrqc::explainer
