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

#include <array>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "cmrqc/common.hpp"

namespace cmrqc::nn {

// Storage for anything Eigen maps over. A fixed alignment keeps vectorized
// reductions in the same order on every run.
using Buffer = std::vector<double, Eigen::aligned_allocator<double>>;

// Dense row-major tensor. Rank 5 tensors are (N, C, D, H, W); rank 2
// tensors are (N, F).
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape, double fill = 0.0);

  const std::vector<int>& shape() const { return shape_; }
  int dim(std::size_t i) const { return shape_.at(i); }
  std::size_t rank() const { return shape_.size(); }
  std::size_t numel() const { return data_.size(); }
  // Elements per leading (batch) index.
  std::size_t sample_size() const { return shape_.empty() ? 0 : numel() / shape_[0]; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  Buffer& values() { return data_; }
  const Buffer& values() const { return data_; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  Tensor reshaped(std::vector<int> shape) const;
  std::string shape_string() const;

 private:
  std::vector<int> shape_;
  Buffer data_;
};

struct Param {
  std::string name;
  Buffer value;
  Buffer grad;

  Param() = default;
  Param(std::string n, std::size_t size) : name(std::move(n)), value(size, 0.0), grad(size, 0.0) {}
};

enum class Mode { Train, Eval };

class Layer {
 public:
  virtual ~Layer() = default;
  virtual Tensor forward(const Tensor& x, Mode mode) = 0;
  // Accumulates parameter gradients; returns d(loss)/d(input).
  virtual Tensor backward(const Tensor& grad_out) = 0;
  virtual std::vector<Param*> params() { return {}; }
  // Non-trainable state that must be checkpointed (running statistics).
  virtual std::vector<std::vector<double>*> buffers() { return {}; }
  virtual void init(Rng&) {}
  virtual std::string describe() const = 0;
};

using Triple = std::array<int, 3>;  // (depth, height, width)

// 3D convolution, stride 1, zero "same" padding for odd kernels.
class Conv3d final : public Layer {
 public:
  Conv3d(int in_channels, int out_channels, Triple kernel);
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;
  std::vector<Param*> params() override { return {&weight_, &bias_}; }
  void init(Rng& rng) override;
  std::string describe() const override;

 private:
  int cin_, cout_;
  Triple k_;
  Param weight_;  // (cout, cin * kd * kh * kw)
  Param bias_;
  Tensor input_;
};

// Non-overlapping max pooling; trailing remainders are dropped.
class MaxPool3d final : public Layer {
 public:
  explicit MaxPool3d(Triple window);
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;
  std::string describe() const override;

 private:
  Triple win_;
  std::vector<int> in_shape_;
  std::vector<std::size_t> argmax_;
};

// Nearest-neighbour upsampling by integer factors.
class Upsample3d final : public Layer {
 public:
  explicit Upsample3d(Triple factor);
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;
  std::string describe() const override;

 private:
  Triple f_;
  std::vector<int> in_shape_;
};

// Per-channel batch normalization over (N, D, H, W). Train mode uses batch
// statistics and updates the running estimates; Eval mode uses the latter.
class BatchNorm3d final : public Layer {
 public:
  explicit BatchNorm3d(int channels, double momentum = 0.1, double eps = 1e-5);
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;
  std::vector<Param*> params() override { return {&gamma_, &beta_}; }
  std::vector<std::vector<double>*> buffers() override { return {&running_mean_, &running_var_}; }
  void init(Rng& rng) override;
  std::string describe() const override;

 private:
  int c_;
  double momentum_, eps_;
  Param gamma_, beta_;
  std::vector<double> running_mean_, running_var_;
  Tensor xhat_;
  std::vector<double> inv_std_;
  Mode last_mode_ = Mode::Eval;
};

class Dense final : public Layer {
 public:
  Dense(int in_features, int out_features);
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;
  std::vector<Param*> params() override { return {&weight_, &bias_}; }
  void init(Rng& rng) override;
  std::string describe() const override;

 private:
  int in_, out_;
  Param weight_;  // (out, in)
  Param bias_;
  Tensor input_;
};

class ReLU final : public Layer {
 public:
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;
  std::string describe() const override { return "relu"; }

 private:
  Tensor output_;
};

class Sigmoid final : public Layer {
 public:
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;
  std::string describe() const override { return "sigmoid"; }

 private:
  Tensor output_;
};

// (N, ...) -> (N, F)
class Flatten final : public Layer {
 public:
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;
  std::string describe() const override { return "flatten"; }

 private:
  std::vector<int> in_shape_;
};

class Sequential {
 public:
  Sequential() = default;
  Sequential(Sequential&&) = default;
  Sequential& operator=(Sequential&&) = default;

  template <class L, class... Args>
  L& add(Args&&... args) {
    auto layer = std::make_unique<L>(std::forward<Args>(args)...);
    L& ref = *layer;
    layers_.push_back(std::move(layer));
    return ref;
  }

  Tensor forward(const Tensor& x, Mode mode);
  Tensor backward(const Tensor& grad_out);
  std::vector<Param*> params();
  std::vector<std::vector<double>*> buffers();
  void init(Rng& rng);
  std::string describe() const;
  std::size_t size() const { return layers_.size(); }

 private:
  std::vector<std::unique_ptr<Layer>> layers_;
};

void zero_grad(std::span<Param* const> params);
std::size_t parameter_count(std::span<Param* const> params);

// Flat state = all parameter values followed by all buffers.
std::vector<double> export_state(std::span<Param* const> params,
                                 std::span<std::vector<double>* const> buffers);
// Throws CheckpointArchMismatch on a size mismatch.
void import_state(std::span<const double> state, std::span<Param* const> params,
                  std::span<std::vector<double>* const> buffers);

class Optimizer {
 public:
  virtual ~Optimizer() = default;
  virtual void step(std::span<Param* const> params) = 0;
};

class Sgd final : public Optimizer {
 public:
  explicit Sgd(double lr, double momentum = 0.0) : lr_(lr), momentum_(momentum) {}
  void step(std::span<Param* const> params) override;

 private:
  double lr_, momentum_;
  std::vector<std::vector<double>> velocity_;
};

class Adam final : public Optimizer {
 public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {}
  void step(std::span<Param* const> params) override;

 private:
  double lr_, b1_, b2_, eps_;
  long t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

std::unique_ptr<Optimizer> make_optimizer(const std::string& name, double lr, double momentum);

double sigmoid(double z);

// Mean binary cross-entropy over logits; writes d(loss)/d(logit) into grad.
double bce_with_logits(std::span<const double> logits, std::span<const double> targets,
                       std::span<double> grad);

}  // namespace cmrqc::nn
