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

#include "cmrqc/baseline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

namespace cmrqc::baseline {

using dataprep::Label;
using dataprep::TripletSample;
using nlohmann::ordered_json;

namespace {

constexpr std::size_t kInferenceChunk = 16;

ordered_json triple_json(const nn::Triple& t) { return {t[0], t[1], t[2]}; }
nn::Triple triple_from(const ordered_json& j) {
  if (!j.is_array() || j.size() != 3) throw InvalidSpec("expected a 3-element array");
  return {j[0].get<int>(), j[1].get<int>(), j[2].get<int>()};
}

}  // namespace

void BaselineArchitectureSpec::validate() const {
  if (conv_channels.size() != 3 || pools.size() != 3)
    throw InvalidSpec("baseline needs exactly 3 conv/pool/norm blocks, got " +
                      std::to_string(conv_channels.size()));
  if (fc_sizes.size() != 3 || fc_sizes.back() != 1)
    throw InvalidSpec("baseline head needs 3 dense layers ending in 1 unit");
  for (int c : conv_channels)
    if (c <= 0) throw InvalidSpec("conv channels must be positive");
  for (int f : fc_sizes)
    if (f <= 0) throw InvalidSpec("dense sizes must be positive");
  for (int k : kernel)
    if (k <= 0 || k % 2 == 0) throw InvalidSpec("kernel extents must be odd and positive");
  for (int s : input_shape)
    if (s <= 0) throw InvalidSpec("input shape must be positive");
  nn::Triple dims = input_shape;
  for (const auto& p : pools)
    for (int a = 0; a < 3; ++a) {
      if (p[a] <= 0) throw InvalidSpec("pool windows must be positive");
      dims[a] /= p[a];
      if (dims[a] == 0) throw InvalidSpec("pooling collapses the input to nothing");
    }
}

int BaselineArchitectureSpec::feature_count() const {
  nn::Triple dims = input_shape;
  for (const auto& p : pools)
    for (int a = 0; a < 3; ++a) dims[a] /= p[a];
  return conv_channels.back() * dims[0] * dims[1] * dims[2];
}

ordered_json BaselineArchitectureSpec::to_json() const {
  ordered_json j;
  j["input_shape"] = triple_json(input_shape);
  j["conv_channels"] = conv_channels;
  j["kernel"] = triple_json(kernel);
  j["pools"] = ordered_json::array();
  for (const auto& p : pools) j["pools"].push_back(triple_json(p));
  j["fc_sizes"] = fc_sizes;
  return j;
}

BaselineArchitectureSpec BaselineArchitectureSpec::from_json(const ordered_json& j) {
  BaselineArchitectureSpec s;
  try {
    if (j.contains("input_shape")) s.input_shape = triple_from(j["input_shape"]);
    if (j.contains("conv_channels")) s.conv_channels = j["conv_channels"].get<std::vector<int>>();
    if (j.contains("kernel")) s.kernel = triple_from(j["kernel"]);
    if (j.contains("pools")) {
      s.pools.clear();
      for (const auto& p : j["pools"]) s.pools.push_back(triple_from(p));
    }
    if (j.contains("fc_sizes")) s.fc_sizes = j["fc_sizes"].get<std::vector<int>>();
  } catch (const nlohmann::json::exception& e) {
    throw InvalidSpec(std::string("malformed baseline spec: ") + e.what());
  }
  return s;
}

BaselineArchitectureSpec tiny_spec() {
  BaselineArchitectureSpec s;
  s.input_shape = {3, 8, 8};
  s.conv_channels = {1, 1, 1};
  s.pools = {{1, 2, 2}, {1, 2, 2}, {1, 2, 2}};
  s.fc_sizes = {4, 3, 1};
  return s;
}

void TrainConfig::validate() const {
  if (learning_rate <= 0.0) throw InvalidConfig("learning_rate must be positive");
  if (momentum < 0.0 || momentum >= 1.0) throw InvalidConfig("momentum must be in [0, 1)");
  if (epochs < 1) throw InvalidConfig("epochs must be >= 1");
  if (batch_size < 1) throw InvalidConfig("batch_size must be >= 1");
  if (optimizer != "sgd" && optimizer != "adam")
    throw InvalidConfig("optimizer must be sgd or adam");
  if (augment) augmentation.validate();
}

ordered_json TrainConfig::to_json() const {
  ordered_json j;
  j["optimizer"] = optimizer;
  j["learning_rate"] = learning_rate;
  j["momentum"] = momentum;
  j["epochs"] = epochs;
  j["batch_size"] = batch_size;
  j["seed"] = seed;
  j["loss"] = "binary_cross_entropy";
  j["augment"] = augment;
  j["augmentation"] = {
      {"rotation_range", {augmentation.rotation_min, augmentation.rotation_max}},
      {"allow_hflip", augmentation.allow_hflip},
      {"allow_vflip", augmentation.allow_vflip},
      {"brightness_range", {augmentation.brightness_min, augmentation.brightness_max}},
      {"seed", augmentation.seed}};
  return j;
}

TrainConfig TrainConfig::from_json(const ordered_json& j) {
  TrainConfig c;
  try {
    c.optimizer = j.value("optimizer", c.optimizer);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.momentum = j.value("momentum", c.momentum);
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.seed = j.value("seed", c.seed);
    c.augment = j.value("augment", c.augment);
    if (j.contains("augmentation")) {
      const auto& a = j["augmentation"];
      if (a.contains("rotation_range")) {
        c.augmentation.rotation_min = a["rotation_range"][0].get<double>();
        c.augmentation.rotation_max = a["rotation_range"][1].get<double>();
      }
      c.augmentation.allow_hflip = a.value("allow_hflip", c.augmentation.allow_hflip);
      c.augmentation.allow_vflip = a.value("allow_vflip", c.augmentation.allow_vflip);
      if (a.contains("brightness_range")) {
        c.augmentation.brightness_min = a["brightness_range"][0].get<double>();
        c.augmentation.brightness_max = a["brightness_range"][1].get<double>();
      }
      c.augmentation.seed = a.value("seed", c.augmentation.seed);
    }
  } catch (const nlohmann::json::exception& e) {
    throw InvalidConfig(std::string("malformed train config: ") + e.what());
  }
  return c;
}

nn::Tensor stacks_to_tensor(std::span<const Stack* const> stacks) {
  if (stacks.empty()) throw ShapeMismatch("empty batch");
  const Stack& first = *stacks.front();
  nn::Tensor t({static_cast<int>(stacks.size()), 1, first.depth, first.height, first.width});
  const std::size_t per = first.size();
  for (std::size_t i = 0; i < stacks.size(); ++i) {
    if (!stacks[i]->same_shape(first)) throw ShapeMismatch("batch stacks differ in shape");
    std::copy(stacks[i]->data.begin(), stacks[i]->data.end(), t.data() + i * per);
  }
  return t;
}

// ---------------------------------------------------------------------------

BaselineModel BaselineModel::build(const BaselineArchitectureSpec& spec, std::uint64_t seed) {
  spec.validate();
  nn::Sequential net;
  int in = 1;
  for (std::size_t b = 0; b < 3; ++b) {
    net.add<nn::Conv3d>(in, spec.conv_channels[b], spec.kernel);
    net.add<nn::ReLU>();
    net.add<nn::MaxPool3d>(spec.pools[b]);
    net.add<nn::BatchNorm3d>(spec.conv_channels[b]);
    in = spec.conv_channels[b];
  }
  net.add<nn::Flatten>();
  int features = spec.feature_count();
  for (std::size_t f = 0; f < 3; ++f) {
    net.add<nn::Dense>(features, spec.fc_sizes[f]);
    if (f < 2) net.add<nn::ReLU>();
    features = spec.fc_sizes[f];
  }
  Rng rng(derive_seed(seed, "baseline-init"));
  net.init(rng);
  return BaselineModel(spec, std::move(net));
}

BaselineModel BaselineModel::from_checkpoint(const ModelCheckpoint& ckpt) {
  if (ckpt.kind != "baseline")
    throw CheckpointArchMismatch("expected a baseline checkpoint, got kind '" + ckpt.kind + "'");
  if (architecture_fingerprint(ckpt.kind, ckpt.architecture) != ckpt.arch_fingerprint)
    throw CheckpointArchMismatch("checkpoint fingerprint does not match its architecture");
  BaselineModel m = build(BaselineArchitectureSpec::from_json(ckpt.architecture), 0);
  auto params = m.net_.params();
  auto buffers = m.net_.buffers();
  nn::import_state(ckpt.weights, params, buffers);
  return m;
}

std::size_t BaselineModel::parameter_count() {
  auto p = net_.params();
  return nn::parameter_count(p);
}

void BaselineModel::check_input(const Stack& s) const {
  if (s.depth != spec_.input_shape[0] || s.height != spec_.input_shape[1] ||
      s.width != spec_.input_shape[2])
    throw ShapeMismatch("baseline expects " + std::to_string(spec_.input_shape[1]) + "x" +
                        std::to_string(spec_.input_shape[2]) + "x" +
                        std::to_string(spec_.input_shape[0]) + " stacks, got " +
                        std::to_string(s.height) + "x" + std::to_string(s.width) + "x" +
                        std::to_string(s.depth));
}

nn::Tensor BaselineModel::logits(const nn::Tensor& x, nn::Mode mode) {
  return net_.forward(x, mode);
}

std::vector<double> BaselineModel::predict_batch(std::span<const Stack* const> stacks) {
  std::vector<double> out;
  out.reserve(stacks.size());
  for (const Stack* s : stacks) check_input(*s);
  for (std::size_t i = 0; i < stacks.size(); i += kInferenceChunk) {
    const auto chunk = stacks.subspan(i, std::min(kInferenceChunk, stacks.size() - i));
    const nn::Tensor z = net_.forward(stacks_to_tensor(chunk), nn::Mode::Eval);
    for (std::size_t j = 0; j < z.numel(); ++j) out.push_back(nn::sigmoid(z[j]));
  }
  return out;
}

double BaselineModel::predict(const Stack& stack) {
  const Stack* p = &stack;
  return predict_batch(std::span(&p, 1)).front();
}

std::vector<double> BaselineModel::state() {
  auto params = net_.params();
  auto buffers = net_.buffers();
  return nn::export_state(params, buffers);
}

ModelCheckpoint BaselineModel::to_checkpoint(const std::string& task, const TrainConfig& cfg,
                                             std::map<std::string, double> metrics) {
  ModelCheckpoint c;
  c.kind = "baseline";
  c.task = task;
  c.architecture = spec_.to_json();
  c.arch_fingerprint = architecture_fingerprint(c.kind, c.architecture);
  c.train_config = cfg.to_json();
  c.metrics_at_save = std::move(metrics);
  c.created = creation_stamp();
  c.weights = state();
  return c;
}

double predict(const ModelCheckpoint& ckpt, const Stack& stack) {
  return BaselineModel::from_checkpoint(ckpt).predict(stack);
}

// ---------------------------------------------------------------------------

std::vector<int> training_folds(int k, int test_fold) {
  std::vector<int> folds;
  for (int f = 0; f < k; ++f)
    if (f != test_fold) folds.push_back(f);
  return folds;
}

namespace {

struct Evaluation {
  double loss = std::numeric_limits<double>::quiet_NaN();
  double accuracy = std::numeric_limits<double>::quiet_NaN();
};

Evaluation evaluate(BaselineModel& model, std::span<const TripletSample* const> set) {
  Evaluation e;
  if (set.empty()) return e;
  std::vector<const Stack*> stacks;
  for (const auto* t : set) stacks.push_back(&t->stack);
  const auto probs = model.predict_batch(stacks);
  double loss = 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < set.size(); ++i) {
    const bool pos = set[i]->label == Label::Positive;
    const double p = std::clamp(probs[i], 1e-12, 1.0 - 1e-12);
    loss -= pos ? std::log(p) : std::log(1.0 - p);
    if ((classify(probs[i]) == Label::Positive) == pos) ++correct;
  }
  e.loss = loss / static_cast<double>(set.size());
  e.accuracy = static_cast<double>(correct) / static_cast<double>(set.size());
  return e;
}

}  // namespace

TrainResult train_samples(BaselineModel& model, dataprep::Task task,
                          std::span<const TripletSample* const> train_set,
                          std::span<const TripletSample* const> val_set, const TrainConfig& cfg,
                          const EpochCallback& on_epoch) {
  cfg.validate();
  if (train_set.empty()) throw EmptyTrainingSet("no training samples for task " + to_string(task));
  for (const auto* t : train_set)
    if (t->task != task)
      throw InvalidConfig("sample " + t->id + " does not belong to task " + to_string(task));

  std::vector<TripletSample> augmented;
  std::vector<const TripletSample*> pool(train_set.begin(), train_set.end());
  if (cfg.augment) {
    dataprep::AugmentationSpec aug = cfg.augmentation;
    aug.seed = derive_seed(cfg.seed, "augment") ^ cfg.augmentation.seed;
    augmented.reserve(train_set.size());
    for (const auto* t : train_set) augmented.push_back(dataprep::augment(*t, aug));
    for (const auto& t : augmented) pool.push_back(&t);
  }

  auto params = model.net().params();
  auto optimizer = nn::make_optimizer(cfg.optimizer, cfg.learning_rate, cfg.momentum);
  Rng shuffle(derive_seed(cfg.seed, "shuffle"));
  std::vector<std::size_t> order(pool.size());
  std::iota(order.begin(), order.end(), 0);

  TrainResult result;
  double best_val = std::numeric_limits<double>::infinity();
  int best_epoch = 0;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);
    double loss_sum = 0.0;
    for (std::size_t b = 0; b < order.size(); b += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), b + static_cast<std::size_t>(cfg.batch_size));
      std::vector<const Stack*> stacks;
      std::vector<double> targets;
      for (std::size_t i = b; i < end; ++i) {
        stacks.push_back(&pool[order[i]]->stack);
        targets.push_back(pool[order[i]]->label == Label::Positive ? 1.0 : 0.0);
      }
      nn::zero_grad(params);
      const nn::Tensor z = model.logits(stacks_to_tensor(stacks), nn::Mode::Train);
      nn::Tensor grad(z.shape());
      const double loss = nn::bce_with_logits(z.values(), targets, grad.values());
      if (!std::isfinite(loss))
        throw NonFiniteLoss("epoch " + std::to_string(epoch) + ", batch starting at " +
                            std::to_string(b) + ": loss=" + std::to_string(loss) +
                            " (lr=" + std::to_string(cfg.learning_rate) + ")");
      model.net().backward(grad);
      optimizer->step(params);
      loss_sum += loss * static_cast<double>(end - b);
    }
    EpochLog entry;
    entry.epoch = epoch;
    entry.train_loss = loss_sum / static_cast<double>(pool.size());
    const Evaluation val = evaluate(model, val_set);
    entry.val_loss = val.loss;
    entry.val_acc = val.accuracy;
    if (std::isfinite(val.loss) && val.loss < best_val) {
      best_val = val.loss;
      best_epoch = epoch;
    }
    result.log.push_back(entry);
    if (on_epoch) on_epoch(entry);
  }

  const Evaluation train_eval = evaluate(model, train_set);
  result.train_accuracy = train_eval.accuracy;
  std::map<std::string, double> metrics{{"train_loss", result.log.back().train_loss},
                                        {"train_accuracy", train_eval.accuracy},
                                        {"epochs", static_cast<double>(cfg.epochs)}};
  if (!val_set.empty()) {
    metrics["val_loss"] = result.log.back().val_loss;
    metrics["val_accuracy"] = result.log.back().val_acc;
    metrics["best_epoch"] = best_epoch;
    metrics["best_val_loss"] = best_val;
  }
  result.checkpoint = model.to_checkpoint(to_string(task), cfg, std::move(metrics));
  return result;
}

TrainResult train(BaselineModel& model, const dataprep::TaskDataset& dataset,
                  std::span<const int> train_folds, const TrainConfig& cfg,
                  const EpochCallback& on_epoch) {
  std::vector<const TripletSample*> train_set;
  std::vector<const TripletSample*> val_set;
  for (std::size_t i = 0; i < dataset.samples.size(); ++i) {
    const bool in_train = std::find(train_folds.begin(), train_folds.end(), dataset.fold_of[i]) !=
                          train_folds.end();
    (in_train ? train_set : val_set).push_back(&dataset.samples[i]);
  }
  return train_samples(model, dataset.task, train_set, val_set, cfg, on_epoch);
}

void write_training_log(const std::string& path, std::span<const EpochLog> log) {
  std::ofstream out(path);
  if (!out) throw IOFailure("cannot write " + path);
  out << "epoch,train_loss,val_loss,val_acc\n";
  out.precision(8);
  for (const auto& e : log) {
    out << e.epoch << ',' << e.train_loss << ',';
    if (std::isfinite(e.val_loss)) out << e.val_loss;
    out << ',';
    if (std::isfinite(e.val_acc)) out << e.val_acc;
    out << '\n';
  }
}

}  // namespace cmrqc::baseline
