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
#include <map>
#include <nlohmann/json.hpp>
#include <span>
#include <string>
#include <vector>

#include "cmrqc/checkpoint.hpp"
#include "cmrqc/explainer.hpp"
#include "cmrqc/image.hpp"
#include "cmrqc/nn.hpp"

namespace cmrqc::segmenter {

// Encoder/decoder with one additive attention gate per skip connection.
// Pooling and upsampling never touch the slice axis by default.
struct UNetSpec {
  nn::Triple input_shape{kStackDepth, kInputSize, kInputSize};  // (slices, h, w)
  std::vector<int> channels{16, 32, 64, 128};
  int convs_per_block = 2;
  nn::Triple kernel{3, 3, 3};
  nn::Triple pool{1, 2, 2};

  void validate() const;  // throws InvalidSpec
  nlohmann::ordered_json to_json() const;
  static UNetSpec from_json(const nlohmann::ordered_json& j);
};

// 8x8x3 input, two levels, single convs; used for gradient checks.
UNetSpec tiny_unet_spec();

class AttentionGate {
 public:
  AttentionGate(int channels, int inter_channels);
  // skip and gate share shape (N, C, D, H, W); returns skip * alpha.
  nn::Tensor forward(const nn::Tensor& skip, const nn::Tensor& gate, nn::Mode mode);
  // Returns {d skip, d gate}.
  std::pair<nn::Tensor, nn::Tensor> backward(const nn::Tensor& grad_out);
  std::vector<nn::Param*> params();
  void init(Rng& rng);
  const nn::Tensor& coefficients() const { return alpha_; }

 private:
  nn::Conv3d theta_, phi_, psi_;
  nn::ReLU relu_;
  nn::Sigmoid sigmoid_;
  nn::Tensor skip_, alpha_;
};

class UNet {
 public:
  static UNet build(const UNetSpec& spec, std::uint64_t seed);
  // Throws CheckpointArchMismatch for non-unet checkpoints.
  static UNet from_checkpoint(const ModelCheckpoint& ckpt);

  UNet(UNet&&) = default;
  UNet& operator=(UNet&&) = default;

  const UNetSpec& spec() const { return spec_; }
  // (N, 1, D, H, W) logits.
  nn::Tensor forward(const nn::Tensor& x, nn::Mode mode);
  nn::Tensor backward(const nn::Tensor& grad_logits);
  std::vector<nn::Param*> params();
  std::vector<std::vector<double>*> buffers();
  std::size_t parameter_count();
  std::vector<double> state();

  // Per-voxel probabilities in inference mode. Throws ShapeMismatch.
  std::vector<Stack> predict_proba(std::span<const Stack* const> stacks);
  Mask predict_mask(const Stack& stack, double threshold = 0.5);

  ModelCheckpoint to_checkpoint(const std::string& task, const nlohmann::ordered_json& train_cfg,
                                std::map<std::string, double> metrics);

 private:
  explicit UNet(UNetSpec spec);
  void check_input(const Stack& s) const;

  struct Level {
    nn::Sequential encoder;
    nn::MaxPool3d pool{{1, 2, 2}};
    // Decoder side; unused at the deepest level.
    nn::Upsample3d up{{1, 2, 2}};
    std::unique_ptr<nn::Conv3d> up_conv;
    std::unique_ptr<AttentionGate> gate;
    nn::Sequential decoder;
  };
  UNetSpec spec_;
  std::vector<Level> levels_;
  std::unique_ptr<nn::Conv3d> head_;
  std::vector<int> channel_split_;
};

// Mean over samples of (BCE + soft Dice loss); writes d(loss)/d(logit).
double dice_bce_loss(const nn::Tensor& logits, std::span<const double> targets,
                     std::span<double> grad);

// Voxelwise overlap against b as reference; both empty counts as 1.
// Throws ShapeMismatch.
double dice(const Mask& a, const Mask& b);
double jaccard(const Mask& a, const Mask& b);

// Voxels outside the mask set to 0. Throws ShapeMismatch.
Stack apply_salient_region(const Stack& stack, const Mask& mask);

Mask threshold(const Stack& probabilities, double t = 0.5);

struct UNetTrainConfig {
  std::string optimizer = "adam";
  double learning_rate = 1e-3;
  double momentum = 0.0;
  int epochs = 50;
  int batch_size = 4;
  double val_fraction = 0.2;
  std::uint64_t seed = 0;

  void validate() const;  // throws InvalidConfig
  nlohmann::ordered_json to_json() const;
  static UNetTrainConfig from_json(const nlohmann::ordered_json& j);
};

struct UNetEpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;  // NaN without a validation split
  double val_dice = 0.0;
};

struct UNetTrainResult {
  ModelCheckpoint checkpoint;
  std::vector<UNetEpochLog> log;
  double train_dice = 0.0;    // per-stack mean
  double val_dice = 0.0;      // per-stack mean, NaN without a split
  double val_dice_global = 0.0;  // pooled voxel counts
  std::vector<std::string> val_ids;
};

using UNetEpochCallback = std::function<void(const UNetEpochLog&)>;

// Shuffled 80/20 split (by default) of the corpus, then supervised training
// toward the explanation masks. Throws EmptyCorpus / NonFiniteLoss.
UNetTrainResult train_unet(UNet& model, const explainer::MaskCorpus& corpus,
                           const UNetTrainConfig& cfg, const UNetEpochCallback& on_epoch = {});

// Mask for one stack from a stored checkpoint.
Mask predict_mask(const ModelCheckpoint& ckpt, const Stack& stack);

void write_training_log(const std::string& path, std::span<const UNetEpochLog> log);

}  // namespace cmrqc::segmenter
