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

#include "cmrqc/nn.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace cmrqc::nn {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

void require_rank5(const Tensor& x, int channels, const char* who) {
  if (x.rank() != 5 || x.dim(1) != channels)
    throw ShapeMismatch(std::string(who) + " expects (N," + std::to_string(channels) +
                        ",D,H,W), got " + x.shape_string());
}

std::string triple_string(const Triple& t) {
  return std::to_string(t[0]) + "x" + std::to_string(t[1]) + "x" + std::to_string(t[2]);
}

// Unfolds one sample (C, D, H, W) into a (C*kd*kh*kw, D*H*W) matrix.
void im2col(const double* src, int c_in, int d, int h, int w, const Triple& k, double* cols) {
  const int pd = k[0] / 2, ph = k[1] / 2, pw = k[2] / 2;
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  const std::size_t p = plane * d;
  std::size_t row = 0;
  for (int c = 0; c < c_in; ++c) {
    const double* sc = src + c * p;
    for (int kz = 0; kz < k[0]; ++kz)
      for (int ky = 0; ky < k[1]; ++ky)
        for (int kx = 0; kx < k[2]; ++kx, ++row) {
          double* dst = cols + row * p;
          const int x_lo = std::max(0, pw - kx);
          const int x_hi = std::min(w, w + pw - kx);
          for (int z = 0; z < d; ++z) {
            const int iz = z + kz - pd;
            double* dz = dst + z * plane;
            if (iz < 0 || iz >= d) {
              std::fill_n(dz, plane, 0.0);
              continue;
            }
            for (int y = 0; y < h; ++y) {
              const int iy = y + ky - ph;
              double* dy = dz + static_cast<std::size_t>(y) * w;
              if (iy < 0 || iy >= h) {
                std::fill_n(dy, w, 0.0);
                continue;
              }
              const double* s = sc + iz * plane + static_cast<std::size_t>(iy) * w + (kx - pw);
              std::fill(dy, dy + x_lo, 0.0);
              std::copy(s + x_lo, s + x_hi, dy + x_lo);
              std::fill(dy + x_hi, dy + w, 0.0);
            }
          }
        }
  }
}

// Adjoint of im2col: scatters column gradients back onto the sample.
void col2im(const double* cols, int c_in, int d, int h, int w, const Triple& k, double* dst) {
  const int pd = k[0] / 2, ph = k[1] / 2, pw = k[2] / 2;
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  const std::size_t p = plane * d;
  std::size_t row = 0;
  for (int c = 0; c < c_in; ++c) {
    double* dc = dst + c * p;
    for (int kz = 0; kz < k[0]; ++kz)
      for (int ky = 0; ky < k[1]; ++ky)
        for (int kx = 0; kx < k[2]; ++kx, ++row) {
          const double* src = cols + row * p;
          const int x_lo = std::max(0, pw - kx);
          const int x_hi = std::min(w, w + pw - kx);
          for (int z = 0; z < d; ++z) {
            const int iz = z + kz - pd;
            if (iz < 0 || iz >= d) continue;
            for (int y = 0; y < h; ++y) {
              const int iy = y + ky - ph;
              if (iy < 0 || iy >= h) continue;
              const double* s = src + z * plane + static_cast<std::size_t>(y) * w;
              double* t = dc + iz * plane + static_cast<std::size_t>(iy) * w + (kx - pw);
              for (int x = x_lo; x < x_hi; ++x) t[x] += s[x];
            }
          }
        }
  }
}

void he_uniform(Buffer& v, std::size_t fan_in, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  for (double& x : v) x = rng.uniform(-bound, bound);
}

}  // namespace

// ---------------------------------------------------------------------------

Tensor::Tensor(std::vector<int> shape, double fill) : shape_(std::move(shape)) {
  std::size_t n = 1;
  for (int s : shape_) {
    if (s < 0) throw ShapeMismatch("negative tensor extent");
    n *= static_cast<std::size_t>(s);
  }
  data_.assign(n, fill);
}

Tensor Tensor::reshaped(std::vector<int> shape) const {
  Tensor t;
  t.shape_ = std::move(shape);
  std::size_t n = 1;
  for (int s : t.shape_) n *= static_cast<std::size_t>(s);
  if (n != numel()) throw ShapeMismatch("reshape changes element count");
  t.data_ = data_;
  return t;
}

std::string Tensor::shape_string() const {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape_.size(); ++i) os << (i ? "," : "") << shape_[i];
  os << ')';
  return os.str();
}

// ---------------------------------------------------------------------------

Conv3d::Conv3d(int in_channels, int out_channels, Triple kernel)
    : cin_(in_channels), cout_(out_channels), k_(kernel) {
  if (cin_ <= 0 || cout_ <= 0) throw InvalidSpec("conv channels must be positive");
  for (int v : k_)
    if (v <= 0 || v % 2 == 0) throw InvalidSpec("conv kernel extents must be odd");
  const std::size_t fan = static_cast<std::size_t>(cin_) * k_[0] * k_[1] * k_[2];
  weight_ = Param("conv.weight", static_cast<std::size_t>(cout_) * fan);
  bias_ = Param("conv.bias", static_cast<std::size_t>(cout_));
}

void Conv3d::init(Rng& rng) {
  he_uniform(weight_.value, static_cast<std::size_t>(cin_) * k_[0] * k_[1] * k_[2], rng);
  std::fill(bias_.value.begin(), bias_.value.end(), 0.0);
}

std::string Conv3d::describe() const {
  return "conv3d(" + std::to_string(cin_) + "->" + std::to_string(cout_) + "," +
         triple_string(k_) + ")";
}

Tensor Conv3d::forward(const Tensor& x, Mode) {
  require_rank5(x, cin_, "conv3d");
  input_ = x;
  const int n = x.dim(0), d = x.dim(2), h = x.dim(3), w = x.dim(4);
  const auto p = static_cast<Eigen::Index>(d) * h * w;
  const auto kk = static_cast<Eigen::Index>(cin_) * k_[0] * k_[1] * k_[2];
  const bool pointwise = k_ == Triple{1, 1, 1};
  Tensor y({n, cout_, d, h, w});
  Buffer cols(pointwise ? 0 : static_cast<std::size_t>(kk * p));
  ConstMatMap wm(weight_.value.data(), cout_, kk);
  const Eigen::Map<const Eigen::VectorXd> b(bias_.value.data(), cout_);
  for (int i = 0; i < n; ++i) {
    const double* xi = x.data() + static_cast<std::size_t>(i) * cin_ * p;
    if (!pointwise) im2col(xi, cin_, d, h, w, k_, cols.data());
    ConstMatMap c(pointwise ? xi : cols.data(), kk, p);
    MatMap yi(y.data() + static_cast<std::size_t>(i) * cout_ * p, cout_, p);
    yi.noalias() = wm * c;
    yi.colwise() += b;
  }
  return y;
}

Tensor Conv3d::backward(const Tensor& g) {
  const Tensor& x = input_;
  const int n = x.dim(0), d = x.dim(2), h = x.dim(3), w = x.dim(4);
  const auto p = static_cast<Eigen::Index>(d) * h * w;
  const auto kk = static_cast<Eigen::Index>(cin_) * k_[0] * k_[1] * k_[2];
  const bool pointwise = k_ == Triple{1, 1, 1};
  Tensor dx(x.shape());
  Buffer cols(pointwise ? 0 : static_cast<std::size_t>(kk * p));
  Buffer dcols(pointwise ? 0 : static_cast<std::size_t>(kk * p));
  ConstMatMap wm(weight_.value.data(), cout_, kk);
  MatMap dw(weight_.grad.data(), cout_, kk);
  Eigen::Map<Eigen::VectorXd> db(bias_.grad.data(), cout_);
  for (int i = 0; i < n; ++i) {
    const double* xi = x.data() + static_cast<std::size_t>(i) * cin_ * p;
    double* dxi = dx.data() + static_cast<std::size_t>(i) * cin_ * p;
    ConstMatMap gi(g.data() + static_cast<std::size_t>(i) * cout_ * p, cout_, p);
    if (!pointwise) im2col(xi, cin_, d, h, w, k_, cols.data());
    ConstMatMap c(pointwise ? xi : cols.data(), kk, p);
    dw.noalias() += gi * c.transpose();
    db += gi.rowwise().sum();
    if (pointwise) {
      MatMap(dxi, kk, p).noalias() = wm.transpose() * gi;
    } else {
      MatMap(dcols.data(), kk, p).noalias() = wm.transpose() * gi;
      col2im(dcols.data(), cin_, d, h, w, k_, dxi);
    }
  }
  return dx;
}

// ---------------------------------------------------------------------------

MaxPool3d::MaxPool3d(Triple window) : win_(window) {
  for (int v : win_)
    if (v <= 0) throw InvalidSpec("pool window extents must be positive");
}

std::string MaxPool3d::describe() const { return "maxpool3d(" + triple_string(win_) + ")"; }

Tensor MaxPool3d::forward(const Tensor& x, Mode) {
  if (x.rank() != 5) throw ShapeMismatch("maxpool3d expects rank 5, got " + x.shape_string());
  in_shape_ = x.shape();
  const int n = x.dim(0), c = x.dim(1), d = x.dim(2), h = x.dim(3), w = x.dim(4);
  const int od = d / win_[0], oh = h / win_[1], ow = w / win_[2];
  if (od == 0 || oh == 0 || ow == 0)
    throw ShapeMismatch("maxpool3d window larger than input " + x.shape_string());
  Tensor y({n, c, od, oh, ow});
  argmax_.assign(y.numel(), 0);
  std::size_t o = 0;
  for (int nc = 0; nc < n * c; ++nc) {
    const std::size_t base = static_cast<std::size_t>(nc) * d * h * w;
    for (int z = 0; z < od; ++z)
      for (int yy = 0; yy < oh; ++yy)
        for (int xx = 0; xx < ow; ++xx, ++o) {
          double best = -INFINITY;
          std::size_t arg = 0;
          for (int a = 0; a < win_[0]; ++a)
            for (int b = 0; b < win_[1]; ++b)
              for (int e = 0; e < win_[2]; ++e) {
                const std::size_t idx =
                    base + (static_cast<std::size_t>(z * win_[0] + a) * h + (yy * win_[1] + b)) * w +
                    (xx * win_[2] + e);
                if (x[idx] > best || std::isnan(x[idx])) {
                  best = x[idx];
                  arg = idx;
                }
              }
          y[o] = best;
          argmax_[o] = arg;
        }
  }
  return y;
}

Tensor MaxPool3d::backward(const Tensor& g) {
  Tensor dx(in_shape_);
  for (std::size_t o = 0; o < g.numel(); ++o) dx[argmax_[o]] += g[o];
  return dx;
}

// ---------------------------------------------------------------------------

Upsample3d::Upsample3d(Triple factor) : f_(factor) {
  for (int v : f_)
    if (v <= 0) throw InvalidSpec("upsample factors must be positive");
}

std::string Upsample3d::describe() const { return "upsample3d(" + triple_string(f_) + ")"; }

Tensor Upsample3d::forward(const Tensor& x, Mode) {
  if (x.rank() != 5) throw ShapeMismatch("upsample3d expects rank 5, got " + x.shape_string());
  in_shape_ = x.shape();
  const int n = x.dim(0), c = x.dim(1), d = x.dim(2), h = x.dim(3), w = x.dim(4);
  const int od = d * f_[0], oh = h * f_[1], ow = w * f_[2];
  Tensor y({n, c, od, oh, ow});
  std::size_t o = 0;
  for (int nc = 0; nc < n * c; ++nc) {
    const std::size_t base = static_cast<std::size_t>(nc) * d * h * w;
    for (int z = 0; z < od; ++z)
      for (int yy = 0; yy < oh; ++yy)
        for (int xx = 0; xx < ow; ++xx, ++o)
          y[o] = x[base + (static_cast<std::size_t>(z / f_[0]) * h + yy / f_[1]) * w + xx / f_[2]];
  }
  return y;
}

Tensor Upsample3d::backward(const Tensor& g) {
  Tensor dx(in_shape_);
  const int n = dx.dim(0), c = dx.dim(1), d = dx.dim(2), h = dx.dim(3), w = dx.dim(4);
  const int od = d * f_[0], oh = h * f_[1], ow = w * f_[2];
  std::size_t o = 0;
  for (int nc = 0; nc < n * c; ++nc) {
    const std::size_t base = static_cast<std::size_t>(nc) * d * h * w;
    for (int z = 0; z < od; ++z)
      for (int yy = 0; yy < oh; ++yy)
        for (int xx = 0; xx < ow; ++xx, ++o)
          dx[base + (static_cast<std::size_t>(z / f_[0]) * h + yy / f_[1]) * w + xx / f_[2]] += g[o];
  }
  return dx;
}

// ---------------------------------------------------------------------------

BatchNorm3d::BatchNorm3d(int channels, double momentum, double eps)
    : c_(channels), momentum_(momentum), eps_(eps),
      gamma_("bn.gamma", static_cast<std::size_t>(channels)),
      beta_("bn.beta", static_cast<std::size_t>(channels)),
      running_mean_(static_cast<std::size_t>(channels), 0.0),
      running_var_(static_cast<std::size_t>(channels), 1.0) {
  std::fill(gamma_.value.begin(), gamma_.value.end(), 1.0);
}

void BatchNorm3d::init(Rng&) {
  std::fill(gamma_.value.begin(), gamma_.value.end(), 1.0);
  std::fill(beta_.value.begin(), beta_.value.end(), 0.0);
  std::fill(running_mean_.begin(), running_mean_.end(), 0.0);
  std::fill(running_var_.begin(), running_var_.end(), 1.0);
}

std::string BatchNorm3d::describe() const { return "batchnorm3d(" + std::to_string(c_) + ")"; }

Tensor BatchNorm3d::forward(const Tensor& x, Mode mode) {
  require_rank5(x, c_, "batchnorm3d");
  last_mode_ = mode;
  const int n = x.dim(0);
  const std::size_t s = static_cast<std::size_t>(x.dim(2)) * x.dim(3) * x.dim(4);
  const double m = static_cast<double>(n) * static_cast<double>(s);
  Tensor y(x.shape());
  xhat_ = Tensor(x.shape());
  inv_std_.assign(static_cast<std::size_t>(c_), 0.0);
  for (int c = 0; c < c_; ++c) {
    double mean = 0.0;
    double var = 0.0;
    if (mode == Mode::Train) {
      for (int i = 0; i < n; ++i) {
        const double* p = x.data() + (static_cast<std::size_t>(i) * c_ + c) * s;
        for (std::size_t j = 0; j < s; ++j) mean += p[j];
      }
      mean /= m;
      for (int i = 0; i < n; ++i) {
        const double* p = x.data() + (static_cast<std::size_t>(i) * c_ + c) * s;
        for (std::size_t j = 0; j < s; ++j) var += (p[j] - mean) * (p[j] - mean);
      }
      var /= m;
      const double unbiased = m > 1 ? var * m / (m - 1) : var;
      running_mean_[c] = (1 - momentum_) * running_mean_[c] + momentum_ * mean;
      running_var_[c] = (1 - momentum_) * running_var_[c] + momentum_ * unbiased;
    } else {
      mean = running_mean_[c];
      var = running_var_[c];
    }
    const double inv = 1.0 / std::sqrt(var + eps_);
    inv_std_[c] = inv;
    for (int i = 0; i < n; ++i) {
      const std::size_t off = (static_cast<std::size_t>(i) * c_ + c) * s;
      for (std::size_t j = 0; j < s; ++j) {
        const double xh = (x[off + j] - mean) * inv;
        xhat_[off + j] = xh;
        y[off + j] = gamma_.value[c] * xh + beta_.value[c];
      }
    }
  }
  return y;
}

Tensor BatchNorm3d::backward(const Tensor& g) {
  const int n = g.dim(0);
  const std::size_t s = static_cast<std::size_t>(g.dim(2)) * g.dim(3) * g.dim(4);
  const double m = static_cast<double>(n) * static_cast<double>(s);
  Tensor dx(g.shape());
  for (int c = 0; c < c_; ++c) {
    double sum_g = 0.0;
    double sum_gx = 0.0;
    for (int i = 0; i < n; ++i) {
      const std::size_t off = (static_cast<std::size_t>(i) * c_ + c) * s;
      for (std::size_t j = 0; j < s; ++j) {
        sum_g += g[off + j];
        sum_gx += g[off + j] * xhat_[off + j];
      }
    }
    gamma_.grad[c] += sum_gx;
    beta_.grad[c] += sum_g;
    const double scale = gamma_.value[c] * inv_std_[c];
    for (int i = 0; i < n; ++i) {
      const std::size_t off = (static_cast<std::size_t>(i) * c_ + c) * s;
      for (std::size_t j = 0; j < s; ++j) {
        if (last_mode_ == Mode::Train)
          dx[off + j] = scale * (g[off + j] - sum_g / m - xhat_[off + j] * sum_gx / m);
        else
          dx[off + j] = scale * g[off + j];
      }
    }
  }
  return dx;
}

// ---------------------------------------------------------------------------

Dense::Dense(int in_features, int out_features)
    : in_(in_features), out_(out_features),
      weight_("dense.weight", static_cast<std::size_t>(in_features) * out_features),
      bias_("dense.bias", static_cast<std::size_t>(out_features)) {
  if (in_ <= 0 || out_ <= 0) throw InvalidSpec("dense sizes must be positive");
}

void Dense::init(Rng& rng) {
  he_uniform(weight_.value, static_cast<std::size_t>(in_), rng);
  std::fill(bias_.value.begin(), bias_.value.end(), 0.0);
}

std::string Dense::describe() const {
  return "dense(" + std::to_string(in_) + "->" + std::to_string(out_) + ")";
}

Tensor Dense::forward(const Tensor& x, Mode) {
  if (x.rank() != 2 || x.dim(1) != in_)
    throw ShapeMismatch("dense expects (N," + std::to_string(in_) + "), got " + x.shape_string());
  input_ = x;
  const int n = x.dim(0);
  Tensor y({n, out_});
  ConstMatMap xm(x.data(), n, in_);
  ConstMatMap wm(weight_.value.data(), out_, in_);
  MatMap ym(y.data(), n, out_);
  ym.noalias() = xm * wm.transpose();
  ym.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(bias_.value.data(), out_);
  return y;
}

Tensor Dense::backward(const Tensor& g) {
  const int n = input_.dim(0);
  ConstMatMap xm(input_.data(), n, in_);
  ConstMatMap gm(g.data(), n, out_);
  ConstMatMap wm(weight_.value.data(), out_, in_);
  MatMap(weight_.grad.data(), out_, in_).noalias() += gm.transpose() * xm;
  Eigen::Map<Eigen::RowVectorXd>(bias_.grad.data(), out_) += gm.colwise().sum();
  Tensor dx({n, in_});
  MatMap(dx.data(), n, in_).noalias() = gm * wm;
  return dx;
}

// ---------------------------------------------------------------------------

Tensor ReLU::forward(const Tensor& x, Mode) {
  output_ = x;
  for (double& v : output_.values()) v = v < 0.0 ? 0.0 : v;
  return output_;
}

Tensor ReLU::backward(const Tensor& g) {
  Tensor dx = g;
  for (std::size_t i = 0; i < dx.numel(); ++i)
    if (output_[i] <= 0.0) dx[i] = 0.0;
  return dx;
}

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

Tensor Sigmoid::forward(const Tensor& x, Mode) {
  output_ = x;
  for (double& v : output_.values()) v = sigmoid(v);
  return output_;
}

Tensor Sigmoid::backward(const Tensor& g) {
  Tensor dx = g;
  for (std::size_t i = 0; i < dx.numel(); ++i) dx[i] *= output_[i] * (1.0 - output_[i]);
  return dx;
}

Tensor Flatten::forward(const Tensor& x, Mode) {
  in_shape_ = x.shape();
  return x.reshaped({x.dim(0), static_cast<int>(x.sample_size())});
}

Tensor Flatten::backward(const Tensor& g) { return g.reshaped(in_shape_); }

// ---------------------------------------------------------------------------

Tensor Sequential::forward(const Tensor& x, Mode mode) {
  Tensor h = x;
  for (auto& l : layers_) h = l->forward(h, mode);
  return h;
}

Tensor Sequential::backward(const Tensor& grad_out) {
  Tensor g = grad_out;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
  return g;
}

std::vector<Param*> Sequential::params() {
  std::vector<Param*> out;
  for (auto& l : layers_)
    for (Param* p : l->params()) out.push_back(p);
  return out;
}

std::vector<std::vector<double>*> Sequential::buffers() {
  std::vector<std::vector<double>*> out;
  for (auto& l : layers_)
    for (auto* b : l->buffers()) out.push_back(b);
  return out;
}

void Sequential::init(Rng& rng) {
  for (auto& l : layers_) l->init(rng);
}

std::string Sequential::describe() const {
  std::string s;
  for (const auto& l : layers_) s += (s.empty() ? "" : " | ") + l->describe();
  return s;
}

// ---------------------------------------------------------------------------

void zero_grad(std::span<Param* const> params) {
  for (Param* p : params) std::fill(p->grad.begin(), p->grad.end(), 0.0);
}

std::size_t parameter_count(std::span<Param* const> params) {
  std::size_t n = 0;
  for (const Param* p : params) n += p->value.size();
  return n;
}

std::vector<double> export_state(std::span<Param* const> params,
                                 std::span<std::vector<double>* const> buffers) {
  std::vector<double> out;
  for (const Param* p : params) out.insert(out.end(), p->value.begin(), p->value.end());
  for (const auto* b : buffers) out.insert(out.end(), b->begin(), b->end());
  return out;
}

void import_state(std::span<const double> state, std::span<Param* const> params,
                  std::span<std::vector<double>* const> buffers) {
  std::size_t need = parameter_count(params);
  for (const auto* b : buffers) need += b->size();
  if (need != state.size())
    throw CheckpointArchMismatch("weight blob holds " + std::to_string(state.size()) +
                                 " values, architecture needs " + std::to_string(need));
  std::size_t o = 0;
  for (Param* p : params) {
    std::copy_n(state.begin() + static_cast<std::ptrdiff_t>(o), p->value.size(), p->value.begin());
    o += p->value.size();
  }
  for (auto* b : buffers) {
    std::copy_n(state.begin() + static_cast<std::ptrdiff_t>(o), b->size(), b->begin());
    o += b->size();
  }
}

void Sgd::step(std::span<Param* const> params) {
  if (momentum_ == 0.0) {
    for (Param* p : params)
      for (std::size_t i = 0; i < p->value.size(); ++i) p->value[i] -= lr_ * p->grad[i];
    return;
  }
  if (velocity_.size() != params.size()) {
    velocity_.clear();
    for (const Param* p : params) velocity_.emplace_back(p->value.size(), 0.0);
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    Param* p = params[k];
    auto& v = velocity_[k];
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      v[i] = momentum_ * v[i] + p->grad[i];
      p->value[i] -= lr_ * v[i];
    }
  }
}

void Adam::step(std::span<Param* const> params) {
  if (m_.size() != params.size()) {
    m_.clear();
    v_.clear();
    for (const Param* p : params) {
      m_.emplace_back(p->value.size(), 0.0);
      v_.emplace_back(p->value.size(), 0.0);
    }
  }
  ++t_;
  const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Param* p = params[k];
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double g = p->grad[i];
      m_[k][i] = b1_ * m_[k][i] + (1 - b1_) * g;
      v_[k][i] = b2_ * v_[k][i] + (1 - b2_) * g * g;
      p->value[i] -= lr_ * (m_[k][i] / c1) / (std::sqrt(v_[k][i] / c2) + eps_);
    }
  }
}

std::unique_ptr<Optimizer> make_optimizer(const std::string& name, double lr, double momentum) {
  if (lr <= 0.0) throw InvalidConfig("learning rate must be positive");
  if (name == "sgd") return std::make_unique<Sgd>(lr, momentum);
  if (name == "adam") return std::make_unique<Adam>(lr);
  throw InvalidConfig("unknown optimizer '" + name + "'");
}

double bce_with_logits(std::span<const double> logits, std::span<const double> targets,
                       std::span<double> grad) {
  if (logits.size() != targets.size() || grad.size() != logits.size())
    throw LengthMismatch("bce_with_logits size mismatch");
  const double n = static_cast<double>(logits.size());
  double loss = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double z = logits[i];
    const double y = targets[i];
    loss += std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
    grad[i] = (sigmoid(z) - y) / n;
  }
  return loss / n;
}

}  // namespace cmrqc::nn
