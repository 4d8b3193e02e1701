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


#include "cmrqc/segmenter.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "cmrqc/common.hpp"

namespace cmrqc::segmenter {

namespace {

constexpr std::size_t kInferenceChunk = 8;

nn::Tensor add(nn::Tensor a, const nn::Tensor& b) {
  if (a.shape() != b.shape()) throw ShapeMismatch("add: " + a.shape_string() + " vs " + b.shape_string());
  for (std::size_t i = 0; i < a.numel(); ++i) a[i] += b[i];
  return a;
}

// Channel concatenation of two (N, C, D, H, W) tensors.
nn::Tensor concat_channels(const nn::Tensor& a, const nn::Tensor& b) {
  const int n = a.dim(0), ca = a.dim(1), cb = b.dim(1);
  nn::Tensor out({n, ca + cb, a.dim(2), a.dim(3), a.dim(4)});
  const std::size_t sa = a.sample_size(), sb = b.sample_size();
  for (int i = 0; i < n; ++i) {
    std::copy_n(a.data() + i * sa, sa, out.data() + i * (sa + sb));
    std::copy_n(b.data() + i * sb, sb, out.data() + i * (sa + sb) + sa);
  }
  return out;
}

std::pair<nn::Tensor, nn::Tensor> split_channels(const nn::Tensor& x, int ca) {
  const int n = x.dim(0), cb = x.dim(1) - ca;
  nn::Tensor a({n, ca, x.dim(2), x.dim(3), x.dim(4)});
  nn::Tensor b({n, cb, x.dim(2), x.dim(3), x.dim(4)});
  const std::size_t sa = a.sample_size(), sb = b.sample_size();
  for (int i = 0; i < n; ++i) {
    std::copy_n(x.data() + i * (sa + sb), sa, a.data() + i * sa);
    std::copy_n(x.data() + i * (sa + sb) + sa, sb, b.data() + i * sb);
  }
  return {std::move(a), std::move(b)};
}

void add_block(nn::Sequential& seq, int cin, int cout, const UNetSpec& spec) {
  for (int k = 0; k < spec.convs_per_block; ++k) {
    seq.add<nn::Conv3d>(k == 0 ? cin : cout, cout, spec.kernel);
    seq.add<nn::BatchNorm3d>(cout);
    seq.add<nn::ReLU>();
  }
}

nn::Tensor stacks_to_tensor(std::span<const Stack* const> stacks) {
  const Stack& f = *stacks.front();
  nn::Tensor t({static_cast<int>(stacks.size()), 1, f.depth, f.height, f.width});
  for (std::size_t i = 0; i < stacks.size(); ++i)
    std::copy(stacks[i]->data.begin(), stacks[i]->data.end(), t.data() + i * f.size());
  return t;
}

}  // namespace

// ---------------------------------------------------------------------------

void UNetSpec::validate() const {
  if (channels.size() < 2) throw InvalidSpec("unet needs at least two levels");
  for (int c : channels)
    if (c <= 0) throw InvalidSpec("unet channel counts must be positive");
  if (convs_per_block < 1) throw InvalidSpec("unet blocks need at least one convolution");
  for (int k : kernel)
    if (k <= 0 || k % 2 == 0) throw InvalidSpec("unet kernel extents must be odd");
  for (int a = 0; a < 3; ++a) {
    if (pool[a] < 1) throw InvalidSpec("unet pool windows must be positive");
    long long div = 1;
    for (std::size_t l = 1; l < channels.size(); ++l) div *= pool[a];
    if (input_shape[a] < 1 || input_shape[a] % div != 0)
      throw InvalidSpec("unet input extent " + std::to_string(input_shape[a]) +
                        " is not divisible by the total pooling " + std::to_string(div));
  }
}

nlohmann::ordered_json UNetSpec::to_json() const {
  return {{"input_shape", input_shape},
          {"channels", channels},
          {"convs_per_block", convs_per_block},
          {"kernel", kernel},
          {"pool", pool},
          {"attention", "additive"},
          {"output", "sigmoid"}};
}

UNetSpec UNetSpec::from_json(const nlohmann::ordered_json& j) {
  UNetSpec s;
  try {
    s.input_shape = j.value("input_shape", s.input_shape);
    s.channels = j.value("channels", s.channels);
    s.convs_per_block = j.value("convs_per_block", s.convs_per_block);
    s.kernel = j.value("kernel", s.kernel);
    s.pool = j.value("pool", s.pool);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidSpec(std::string("unet spec: ") + e.what());
  }
  s.validate();
  return s;
}

UNetSpec tiny_unet_spec() {
  UNetSpec s;
  s.input_shape = {3, 8, 8};
  s.channels = {2, 3};
  s.convs_per_block = 1;
  return s;
}

// ---------------------------------------------------------------------------

AttentionGate::AttentionGate(int channels, int inter_channels)
    : theta_(channels, inter_channels, {1, 1, 1}),
      phi_(channels, inter_channels, {1, 1, 1}),
      psi_(inter_channels, 1, {1, 1, 1}) {}

std::vector<nn::Param*> AttentionGate::params() {
  std::vector<nn::Param*> out;
  for (nn::Layer* l : std::initializer_list<nn::Layer*>{&theta_, &phi_, &psi_})
    for (auto* p : l->params()) out.push_back(p);
  return out;
}

void AttentionGate::init(Rng& rng) {
  theta_.init(rng);
  phi_.init(rng);
  psi_.init(rng);
}

nn::Tensor AttentionGate::forward(const nn::Tensor& skip, const nn::Tensor& gate, nn::Mode mode) {
  if (skip.shape() != gate.shape())
    throw ShapeMismatch("attention gate: skip " + skip.shape_string() + " vs gate " +
                        gate.shape_string());
  skip_ = skip;
  const nn::Tensor a = relu_.forward(add(theta_.forward(skip, mode), phi_.forward(gate, mode)), mode);
  alpha_ = sigmoid_.forward(psi_.forward(a, mode), mode);
  nn::Tensor out = skip;
  const int n = skip.dim(0), c = skip.dim(1);
  const std::size_t vox = skip.sample_size() / static_cast<std::size_t>(c);
  for (int i = 0; i < n; ++i)
    for (int ch = 0; ch < c; ++ch) {
      double* o = out.data() + (static_cast<std::size_t>(i) * c + ch) * vox;
      const double* al = alpha_.data() + static_cast<std::size_t>(i) * vox;
      for (std::size_t v = 0; v < vox; ++v) o[v] *= al[v];
    }
  return out;
}

std::pair<nn::Tensor, nn::Tensor> AttentionGate::backward(const nn::Tensor& g) {
  const int n = skip_.dim(0), c = skip_.dim(1);
  const std::size_t vox = skip_.sample_size() / static_cast<std::size_t>(c);
  nn::Tensor d_skip(skip_.shape());
  nn::Tensor d_alpha(alpha_.shape());
  for (int i = 0; i < n; ++i)
    for (int ch = 0; ch < c; ++ch) {
      const std::size_t off = (static_cast<std::size_t>(i) * c + ch) * vox;
      const double* al = alpha_.data() + static_cast<std::size_t>(i) * vox;
      double* da = d_alpha.data() + static_cast<std::size_t>(i) * vox;
      for (std::size_t v = 0; v < vox; ++v) {
        d_skip[off + v] = g[off + v] * al[v];
        da[v] += g[off + v] * skip_[off + v];
      }
    }
  const nn::Tensor d_sum = relu_.backward(psi_.backward(sigmoid_.backward(d_alpha)));
  d_skip = add(std::move(d_skip), theta_.backward(d_sum));
  return {std::move(d_skip), phi_.backward(d_sum)};
}

// ---------------------------------------------------------------------------

UNet::UNet(UNetSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  const auto& ch = spec_.channels;
  const std::size_t depth = ch.size();
  levels_.resize(depth);
  for (std::size_t l = 0; l < depth; ++l) {
    Level& lv = levels_[l];
    add_block(lv.encoder, l == 0 ? 1 : ch[l - 1], ch[l], spec_);
    lv.pool = nn::MaxPool3d(spec_.pool);
    lv.up = nn::Upsample3d(spec_.pool);
    if (l + 1 < depth) {
      lv.up_conv = std::make_unique<nn::Conv3d>(ch[l + 1], ch[l], nn::Triple{1, 1, 1});
      lv.gate = std::make_unique<AttentionGate>(ch[l], std::max(1, ch[l] / 2));
      add_block(lv.decoder, 2 * ch[l], ch[l], spec_);
    }
  }
  head_ = std::make_unique<nn::Conv3d>(ch[0], 1, nn::Triple{1, 1, 1});
}

UNet UNet::build(const UNetSpec& spec, std::uint64_t seed) {
  UNet net(spec);
  Rng rng(derive_seed(seed, "unet-init"));
  for (auto& lv : net.levels_) {
    lv.encoder.init(rng);
    if (lv.up_conv) {
      lv.up_conv->init(rng);
      lv.gate->init(rng);
      lv.decoder.init(rng);
    }
  }
  net.head_->init(rng);
  return net;
}

UNet UNet::from_checkpoint(const ModelCheckpoint& ckpt) {
  if (ckpt.kind != "unet")
    throw CheckpointArchMismatch("expected a unet checkpoint, got kind '" + ckpt.kind + "'");
  if (architecture_fingerprint(ckpt.kind, ckpt.architecture) != ckpt.arch_fingerprint)
    throw CheckpointArchMismatch("checkpoint fingerprint does not match its architecture");
  UNet net(UNetSpec::from_json(ckpt.architecture));
  auto p = net.params();
  auto b = net.buffers();
  nn::import_state(ckpt.weights, p, b);
  return net;
}

std::vector<nn::Param*> UNet::params() {
  std::vector<nn::Param*> out;
  auto append = [&](std::vector<nn::Param*> v) { out.insert(out.end(), v.begin(), v.end()); };
  for (auto& lv : levels_) {
    append(lv.encoder.params());
    if (lv.up_conv) {
      append(lv.up_conv->params());
      append(lv.gate->params());
      append(lv.decoder.params());
    }
  }
  append(head_->params());
  return out;
}

std::vector<std::vector<double>*> UNet::buffers() {
  std::vector<std::vector<double>*> out;
  for (auto& lv : levels_) {
    for (auto* b : lv.encoder.buffers()) out.push_back(b);
    for (auto* b : lv.decoder.buffers()) out.push_back(b);
  }
  return out;
}

std::size_t UNet::parameter_count() {
  auto p = params();
  return nn::parameter_count(p);
}

std::vector<double> UNet::state() {
  auto p = params();
  auto b = buffers();
  return nn::export_state(p, b);
}

nn::Tensor UNet::forward(const nn::Tensor& x, nn::Mode mode) {
  const auto& in = spec_.input_shape;
  if (x.rank() != 5 || x.dim(1) != 1 || x.dim(2) != in[0] || x.dim(3) != in[1] || x.dim(4) != in[2])
    throw ShapeMismatch("unet expects (N,1," + std::to_string(in[0]) + "," + std::to_string(in[1]) +
                        "," + std::to_string(in[2]) + "), got " + x.shape_string());
  const std::size_t depth = levels_.size();
  std::vector<nn::Tensor> skips(depth);
  nn::Tensor h = x;
  for (std::size_t l = 0; l < depth; ++l) {
    skips[l] = levels_[l].encoder.forward(h, mode);
    if (l + 1 < depth) h = levels_[l].pool.forward(skips[l], mode);
  }
  h = std::move(skips[depth - 1]);
  for (std::size_t l = depth - 1; l-- > 0;) {
    Level& lv = levels_[l];
    const nn::Tensor g = lv.up_conv->forward(lv.up.forward(h, mode), mode);
    const nn::Tensor gated = lv.gate->forward(skips[l], g, mode);
    h = lv.decoder.forward(concat_channels(gated, g), mode);
  }
  return head_->forward(h, mode);
}

nn::Tensor UNet::backward(const nn::Tensor& grad_logits) {
  const std::size_t depth = levels_.size();
  std::vector<nn::Tensor> d_skip(depth);
  nn::Tensor d = head_->backward(grad_logits);
  for (std::size_t l = 0; l + 1 < depth; ++l) {
    Level& lv = levels_[l];
    auto [d_gated, d_g] = split_channels(lv.decoder.backward(d), spec_.channels[l]);
    auto [ds, dg] = lv.gate->backward(d_gated);
    d_skip[l] = std::move(ds);
    d = lv.up.backward(lv.up_conv->backward(add(std::move(d_g), dg)));
  }
  for (std::size_t l = depth; l-- > 0;) {
    if (l + 1 < depth) d = add(levels_[l].pool.backward(d), d_skip[l]);
    d = levels_[l].encoder.backward(d);
  }
  return d;
}

void UNet::check_input(const Stack& s) const {
  const auto& in = spec_.input_shape;
  if (s.depth != in[0] || s.height != in[1] || s.width != in[2])
    throw ShapeMismatch("unet expects " + std::to_string(in[1]) + "x" + std::to_string(in[2]) +
                        "x" + std::to_string(in[0]) + " stacks, got " + std::to_string(s.height) +
                        "x" + std::to_string(s.width) + "x" + std::to_string(s.depth));
}

std::vector<Stack> UNet::predict_proba(std::span<const Stack* const> stacks) {
  for (const Stack* s : stacks) check_input(*s);
  std::vector<Stack> out;
  for (std::size_t i = 0; i < stacks.size(); i += kInferenceChunk) {
    const auto chunk = stacks.subspan(i, std::min(kInferenceChunk, stacks.size() - i));
    const nn::Tensor z = forward(stacks_to_tensor(chunk), nn::Mode::Eval);
    const std::size_t per = z.sample_size();
    for (std::size_t j = 0; j < chunk.size(); ++j) {
      Stack p(chunk[j]->depth, chunk[j]->height, chunk[j]->width);
      for (std::size_t v = 0; v < per; ++v)
        p.data[v] = static_cast<float>(nn::sigmoid(z[j * per + v]));
      out.push_back(std::move(p));
    }
  }
  return out;
}

Mask UNet::predict_mask(const Stack& stack, double t) {
  const Stack* p = &stack;
  return threshold(predict_proba(std::span(&p, 1)).front(), t);
}

ModelCheckpoint UNet::to_checkpoint(const std::string& task, const nlohmann::ordered_json& train_cfg,
                                    std::map<std::string, double> metrics) {
  ModelCheckpoint c;
  c.kind = "unet";
  c.task = task;
  c.architecture = spec_.to_json();
  c.arch_fingerprint = architecture_fingerprint(c.kind, c.architecture);
  c.train_config = train_cfg;
  c.metrics_at_save = std::move(metrics);
  c.created = creation_stamp();
  c.weights = state();
  return c;
}

// ---------------------------------------------------------------------------

double dice_bce_loss(const nn::Tensor& logits, std::span<const double> targets,
                     std::span<double> grad) {
  if (targets.size() != logits.numel() || grad.size() != logits.numel())
    throw LengthMismatch("dice_bce_loss: logits, targets and grad differ in size");
  const double bce = nn::bce_with_logits(logits.values(), targets, grad);
  const int n = logits.dim(0);
  const std::size_t per = logits.sample_size();
  constexpr double kSmooth = 1.0;
  double dice_loss = 0.0;
  std::vector<double> p(per);
  for (int i = 0; i < n; ++i) {
    const std::size_t off = static_cast<std::size_t>(i) * per;
    double inter = 0, sp = 0, st = 0;
    for (std::size_t v = 0; v < per; ++v) {
      p[v] = nn::sigmoid(logits[off + v]);
      inter += p[v] * targets[off + v];
      sp += p[v];
      st += targets[off + v];
    }
    const double num = 2 * inter + kSmooth, den = sp + st + kSmooth;
    dice_loss += 1.0 - num / den;
    for (std::size_t v = 0; v < per; ++v) {
      const double d_p = -(2 * targets[off + v] * den - num) / (den * den);
      grad[off + v] += d_p * p[v] * (1 - p[v]) / n;
    }
  }
  return bce + dice_loss / n;
}

namespace {

struct Overlap {
  std::size_t tp = 0, fp = 0, fn = 0;
};

Overlap overlap(const Mask& a, const Mask& b) {
  if (!a.same_shape(b)) throw ShapeMismatch("masks differ in shape");
  Overlap o;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const bool x = a.data[i] != 0, y = b.data[i] != 0;
    o.tp += x && y;
    o.fp += x && !y;
    o.fn += !x && y;
  }
  return o;
}

}  // namespace

double dice(const Mask& a, const Mask& b) {
  const auto o = overlap(a, b);
  if (o.tp + o.fp + o.fn == 0) return 1.0;
  return 2.0 * o.tp / static_cast<double>(o.fn + 2 * o.tp + o.fp);
}

double jaccard(const Mask& a, const Mask& b) {
  const auto o = overlap(a, b);
  if (o.tp + o.fp + o.fn == 0) return 1.0;
  return static_cast<double>(o.tp) / static_cast<double>(o.tp + o.fn + o.fp);
}

Stack apply_salient_region(const Stack& stack, const Mask& mask) {
  if (!stack.same_shape(mask)) throw ShapeMismatch("stack and mask differ in shape");
  Stack out = stack;
  for (std::size_t i = 0; i < out.size(); ++i)
    if (!mask.data[i]) out.data[i] = 0.0f;
  return out;
}

Mask threshold(const Stack& probabilities, double t) {
  Mask m(probabilities.depth, probabilities.height, probabilities.width);
  for (std::size_t i = 0; i < m.size(); ++i) m.data[i] = probabilities.data[i] >= t ? 1 : 0;
  return m;
}

// ---------------------------------------------------------------------------

void UNetTrainConfig::validate() const {
  if (optimizer != "sgd" && optimizer != "adam")
    throw InvalidConfig("unknown optimizer '" + optimizer + "'");
  if (!(learning_rate > 0)) throw InvalidConfig("learning rate must be positive");
  if (epochs < 1) throw InvalidConfig("epochs must be >= 1");
  if (batch_size < 1) throw InvalidConfig("batch size must be >= 1");
  if (!(val_fraction >= 0 && val_fraction < 1)) throw InvalidConfig("val fraction outside [0,1)");
}

nlohmann::ordered_json UNetTrainConfig::to_json() const {
  return {{"optimizer", optimizer},   {"learning_rate", learning_rate},
          {"momentum", momentum},     {"epochs", epochs},
          {"batch_size", batch_size}, {"val_fraction", val_fraction},
          {"seed", seed}};
}

UNetTrainConfig UNetTrainConfig::from_json(const nlohmann::ordered_json& j) {
  UNetTrainConfig c;
  c.optimizer = j.value("optimizer", c.optimizer);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.momentum = j.value("momentum", c.momentum);
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.val_fraction = j.value("val_fraction", c.val_fraction);
  c.seed = j.value("seed", c.seed);
  c.validate();
  return c;
}

namespace {

struct SegEval {
  double loss = std::numeric_limits<double>::quiet_NaN();
  double mean_dice = std::numeric_limits<double>::quiet_NaN();
  double global_dice = std::numeric_limits<double>::quiet_NaN();
};

SegEval evaluate(UNet& model, std::span<const explainer::CorpusEntry* const> set) {
  SegEval e;
  if (set.empty()) return e;
  double loss = 0, dsum = 0;
  Overlap pooled;
  for (std::size_t i = 0; i < set.size(); i += kInferenceChunk) {
    const std::size_t end = std::min(set.size(), i + kInferenceChunk);
    std::vector<const Stack*> stacks;
    std::vector<double> targets;
    for (std::size_t j = i; j < end; ++j) {
      stacks.push_back(&set[j]->stack);
      targets.insert(targets.end(), set[j]->mask.data.begin(), set[j]->mask.data.end());
    }
    const nn::Tensor z = model.forward(stacks_to_tensor(stacks), nn::Mode::Eval);
    std::vector<double> grad(z.numel());
    loss += dice_bce_loss(z, targets, grad) * static_cast<double>(end - i);
    const std::size_t per = z.sample_size();
    for (std::size_t j = i; j < end; ++j) {
      Mask pred(set[j]->mask.depth, set[j]->mask.height, set[j]->mask.width);
      for (std::size_t v = 0; v < per; ++v) pred.data[v] = z[(j - i) * per + v] >= 0.0 ? 1 : 0;
      dsum += dice(pred, set[j]->mask);
      const auto o = overlap(pred, set[j]->mask);
      pooled.tp += o.tp;
      pooled.fp += o.fp;
      pooled.fn += o.fn;
    }
  }
  e.loss = loss / static_cast<double>(set.size());
  e.mean_dice = dsum / static_cast<double>(set.size());
  const std::size_t all = pooled.tp + pooled.fp + pooled.fn;
  e.global_dice = all == 0 ? 1.0 : 2.0 * pooled.tp / static_cast<double>(pooled.fn + 2 * pooled.tp + pooled.fp);
  return e;
}

}  // namespace

UNetTrainResult train_unet(UNet& model, const explainer::MaskCorpus& corpus,
                           const UNetTrainConfig& cfg, const UNetEpochCallback& on_epoch) {
  cfg.validate();
  if (corpus.entries.empty()) throw EmptyCorpus("mask corpus is empty");
  for (const auto& e : corpus.entries)
    if (!e.stack.same_shape(e.mask))
      throw ShapeMismatch("corpus pair " + e.sample_id + " has misaligned stack and mask");

  std::vector<std::size_t> order(corpus.entries.size());
  std::iota(order.begin(), order.end(), 0);
  Rng split_rng(derive_seed(cfg.seed, "unet-split"));
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[split_rng.below(i)]);
  const auto n_val = static_cast<std::size_t>(
      std::floor(cfg.val_fraction * static_cast<double>(order.size()) + 0.5));
  const std::size_t n_train = order.size() - std::min(n_val, order.size() - 1);
  std::vector<const explainer::CorpusEntry*> train_set, val_set;
  for (std::size_t i = 0; i < order.size(); ++i)
    (i < n_train ? train_set : val_set).push_back(&corpus.entries[order[i]]);

  auto params = model.params();
  auto optimizer = nn::make_optimizer(cfg.optimizer, cfg.learning_rate, cfg.momentum);
  Rng shuffle(derive_seed(cfg.seed, "unet-shuffle"));
  std::vector<std::size_t> idx(train_set.size());
  std::iota(idx.begin(), idx.end(), 0);
  UNetTrainResult result;
  for (const auto* e : val_set) result.val_ids.push_back(e->sample_id);
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[shuffle.below(i)]);
    double loss_sum = 0;
    for (std::size_t b = 0; b < idx.size(); b += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(idx.size(), b + static_cast<std::size_t>(cfg.batch_size));
      std::vector<const Stack*> stacks;
      std::vector<double> targets;
      for (std::size_t i = b; i < end; ++i) {
        stacks.push_back(&train_set[idx[i]]->stack);
        const auto& m = train_set[idx[i]]->mask.data;
        targets.insert(targets.end(), m.begin(), m.end());
      }
      nn::zero_grad(params);
      const nn::Tensor z = model.forward(stacks_to_tensor(stacks), nn::Mode::Train);
      nn::Tensor grad(z.shape());
      const double loss = dice_bce_loss(z, targets, grad.values());
      if (!std::isfinite(loss))
        throw NonFiniteLoss("unet epoch " + std::to_string(epoch) + ", batch starting at " +
                            std::to_string(b) + ": loss=" + std::to_string(loss));
      model.backward(grad);
      optimizer->step(params);
      loss_sum += loss * static_cast<double>(end - b);
    }
    UNetEpochLog entry;
    entry.epoch = epoch;
    entry.train_loss = loss_sum / static_cast<double>(train_set.size());
    const SegEval v = evaluate(model, val_set);
    entry.val_loss = v.loss;
    entry.val_dice = v.mean_dice;
    result.log.push_back(entry);
    if (on_epoch) on_epoch(entry);
  }
  const SegEval tr = evaluate(model, train_set);
  const SegEval va = evaluate(model, val_set);
  result.train_dice = tr.mean_dice;
  result.val_dice = va.mean_dice;
  result.val_dice_global = va.global_dice;
  std::map<std::string, double> metrics{{"train_loss", result.log.back().train_loss},
                                        {"train_dice", tr.mean_dice},
                                        {"epochs", static_cast<double>(cfg.epochs)},
                                        {"train_pairs", static_cast<double>(train_set.size())},
                                        {"val_pairs", static_cast<double>(val_set.size())}};
  if (!val_set.empty()) {
    metrics["val_loss"] = va.loss;
    metrics["val_dice"] = va.mean_dice;
    metrics["val_dice_global"] = va.global_dice;
  }
  result.checkpoint = model.to_checkpoint(dataprep::to_string(corpus.task) + "-unet", cfg.to_json(),
                                          std::move(metrics));
  return result;
}

Mask predict_mask(const ModelCheckpoint& ckpt, const Stack& stack) {
  return UNet::from_checkpoint(ckpt).predict_mask(stack);
}

void write_training_log(const std::string& path, std::span<const UNetEpochLog> log) {
  std::ofstream out(path);
  if (!out) throw IOFailure("cannot write " + path);
  out << "epoch,train_loss,val_loss,val_dice\n";
  out.precision(8);
  for (const auto& e : log) {
    out << e.epoch << ',' << e.train_loss << ',';
    if (std::isfinite(e.val_loss)) out << e.val_loss;
    out << ',';
    if (std::isfinite(e.val_dice)) out << e.val_dice;
    out << '\n';
  }
}

}  // namespace cmrqc::segmenter
