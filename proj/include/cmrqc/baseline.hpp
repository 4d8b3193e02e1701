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

#include "cmrqc/checkpoint.hpp"
#include "cmrqc/dataprep.hpp"
#include "cmrqc/nn.hpp"

namespace cmrqc::baseline {

// Three (conv -> relu -> max-pool -> batch-norm) blocks followed by three
// fully connected layers; the last one emits a single logit.
struct BaselineArchitectureSpec {
  nn::Triple input_shape{kStackDepth, kInputSize, kInputSize};  // (slices, h, w)
  std::vector<int> conv_channels{16, 32, 64};
  nn::Triple kernel{3, 3, 3};
  // (slice, row, col) pooling windows per block; the slice axis is kept.
  std::vector<nn::Triple> pools{{1, 2, 2}, {1, 2, 2}, {1, 2, 2}};
  std::vector<int> fc_sizes{256, 64, 1};

  void validate() const;  // throws InvalidSpec
  nlohmann::ordered_json to_json() const;
  static BaselineArchitectureSpec from_json(const nlohmann::ordered_json& j);
  // Flattened feature count entering the first dense layer.
  int feature_count() const;
};

// The tiny variant used for gradient checks: 8x8x3 input, 1-channel convs.
BaselineArchitectureSpec tiny_spec();

struct TrainConfig {
  std::string optimizer = "sgd";
  double learning_rate = 0.001;
  double momentum = 0.0;
  int epochs = 50;
  int batch_size = 8;
  std::uint64_t seed = 0;
  // One augmented copy per training sample, doubling the training set.
  bool augment = true;
  dataprep::AugmentationSpec augmentation;

  void validate() const;  // throws InvalidConfig
  nlohmann::ordered_json to_json() const;
  static TrainConfig from_json(const nlohmann::ordered_json& j);
};

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;  // NaN without validation samples
  double val_acc = 0.0;
};

// Converts stacks to an (N, 1, slices, h, w) tensor.
nn::Tensor stacks_to_tensor(std::span<const Stack* const> stacks);

class BaselineModel {
 public:
  // Deterministic initialization for the seed. Throws InvalidSpec.
  static BaselineModel build(const BaselineArchitectureSpec& spec, std::uint64_t seed);
  // Throws CheckpointArchMismatch for non-baseline checkpoints.
  static BaselineModel from_checkpoint(const ModelCheckpoint& ckpt);

  const BaselineArchitectureSpec& spec() const { return spec_; }
  std::size_t parameter_count();

  nn::Tensor logits(const nn::Tensor& x, nn::Mode mode);
  // Positive-class probabilities in inference mode. Throws ShapeMismatch.
  std::vector<double> predict_batch(std::span<const Stack* const> stacks);
  double predict(const Stack& stack);

  nn::Sequential& net() { return net_; }
  std::vector<double> state();
  ModelCheckpoint to_checkpoint(const std::string& task, const TrainConfig& cfg,
                                std::map<std::string, double> metrics);

 private:
  BaselineModel(BaselineArchitectureSpec spec, nn::Sequential net)
      : spec_(std::move(spec)), net_(std::move(net)) {}
  void check_input(const Stack& s) const;

  BaselineArchitectureSpec spec_;
  nn::Sequential net_;
};

struct TrainResult {
  ModelCheckpoint checkpoint;
  std::vector<EpochLog> log;
  double train_accuracy = 0.0;  // inference mode, un-augmented training samples
};

using EpochCallback = std::function<void(const EpochLog&)>;

// Trains on the samples whose fold is in train_folds; remaining samples are
// only scored for the log. The final-epoch weights are returned.
TrainResult train(BaselineModel& model, const dataprep::TaskDataset& dataset,
                  std::span<const int> train_folds, const TrainConfig& cfg,
                  const EpochCallback& on_epoch = {});
// Same loop over an explicit sample list (validation may be empty).
TrainResult train_samples(BaselineModel& model, dataprep::Task task,
                          std::span<const dataprep::TripletSample* const> train_set,
                          std::span<const dataprep::TripletSample* const> val_set,
                          const TrainConfig& cfg, const EpochCallback& on_epoch = {});

std::vector<int> training_folds(int k, int test_fold);

// Probability of P for one stack. Throws ShapeMismatch / CheckpointArchMismatch.
double predict(const ModelCheckpoint& ckpt, const Stack& stack);

// A probability >= 0.5 classifies as P.
inline dataprep::Label classify(double probability) {
  return probability >= 0.5 ? dataprep::Label::Positive : dataprep::Label::Negative;
}

void write_training_log(const std::string& path, std::span<const EpochLog> log);

}  // namespace cmrqc::baseline
