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


#include "cmrqc/explainer.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <set>

#include "cmrqc/common.hpp"
#include "cmrqc/volume_io.hpp"

namespace cmrqc::explainer {

namespace fs = std::filesystem;
using dataprep::Label;

namespace {

struct Center {
  double y = 0, x = 0, v = 0;
};

double gradient_at(const Image& img, int y, int x) {
  auto px = [&](int yy, int xx) {
    yy = std::clamp(yy, 0, img.height - 1);
    xx = std::clamp(xx, 0, img.width - 1);
    return static_cast<double>(img.at(yy, xx));
  };
  const double gy = px(y + 1, x) - px(y - 1, x);
  const double gx = px(y, x + 1) - px(y, x - 1);
  return gy * gy + gx * gx;
}

// Renumbers labels 0..n-1 in raster order of first appearance.
int relabel_sequential(std::vector<int>& labels) {
  std::map<int, int> remap;
  for (int& l : labels) {
    auto [it, inserted] = remap.try_emplace(l, static_cast<int>(remap.size()));
    l = it->second;
  }
  return static_cast<int>(remap.size());
}

// Splits disconnected clusters into separate segments and absorbs
// fragments smaller than min_size into an already visited neighbour.
int enforce_connectivity(std::vector<int>& labels, int h, int w, std::size_t min_size) {
  const std::size_t n = labels.size();
  std::vector<int> out(n, -1);
  std::vector<std::size_t> component;
  int next = 0;
  const int dy[4] = {-1, 0, 1, 0};
  const int dx[4] = {0, -1, 0, 1};
  for (std::size_t start = 0; start < n; ++start) {
    if (out[start] >= 0) continue;
    const int src = labels[start];
    int adjacent = -1;
    {
      const int y = static_cast<int>(start / w), x = static_cast<int>(start % w);
      for (int k = 0; k < 4 && adjacent < 0; ++k) {
        const int yy = y + dy[k], xx = x + dx[k];
        if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
        const int o = out[static_cast<std::size_t>(yy) * w + xx];
        if (o >= 0) adjacent = o;
      }
    }
    component.assign(1, start);
    out[start] = next;
    for (std::size_t head = 0; head < component.size(); ++head) {
      const std::size_t p = component[head];
      const int y = static_cast<int>(p / w), x = static_cast<int>(p % w);
      for (int k = 0; k < 4; ++k) {
        const int yy = y + dy[k], xx = x + dx[k];
        if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
        const std::size_t q = static_cast<std::size_t>(yy) * w + xx;
        if (out[q] < 0 && labels[q] == src) {
          out[q] = next;
          component.push_back(q);
        }
      }
    }
    if (component.size() < min_size && adjacent >= 0) {
      for (std::size_t p : component) out[p] = adjacent;
    } else {
      ++next;
    }
  }
  labels = std::move(out);
  return next;
}

// Merges the smallest segment into its most similar neighbour until at most
// max_segments remain.
int cap_segments(std::vector<int>& labels, const Image& img, int count, int max_segments) {
  const int h = img.height, w = img.width;
  while (count > max_segments) {
    std::vector<std::size_t> size(count, 0);
    std::vector<double> sum(count, 0.0);
    for (std::size_t i = 0; i < labels.size(); ++i) {
      ++size[labels[i]];
      sum[labels[i]] += img.pixels[i];
    }
    const int victim = static_cast<int>(std::min_element(size.begin(), size.end()) - size.begin());
    std::set<int> neighbours;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const int l = labels[static_cast<std::size_t>(y) * w + x];
        if (x + 1 < w) {
          const int r = labels[static_cast<std::size_t>(y) * w + x + 1];
          if (l == victim && r != victim) neighbours.insert(r);
          if (r == victim && l != victim) neighbours.insert(l);
        }
        if (y + 1 < h) {
          const int d = labels[static_cast<std::size_t>(y + 1) * w + x];
          if (l == victim && d != victim) neighbours.insert(d);
          if (d == victim && l != victim) neighbours.insert(l);
        }
      }
    if (neighbours.empty()) break;
    const double mean_v = sum[victim] / static_cast<double>(size[victim]);
    int target = *neighbours.begin();
    double best = std::numeric_limits<double>::infinity();
    for (int nb : neighbours) {
      const double diff = std::abs(sum[nb] / static_cast<double>(size[nb]) - mean_v);
      if (diff < best) {
        best = diff;
        target = nb;
      }
    }
    for (int& l : labels)
      if (l == victim) l = target;
    count = relabel_sequential(labels);
  }
  return count;
}

}  // namespace

std::vector<std::size_t> SuperpixelMap::segment_sizes() const {
  std::vector<std::size_t> sizes(static_cast<std::size_t>(num_segments), 0);
  for (int l : labels) ++sizes[static_cast<std::size_t>(l)];
  return sizes;
}

SuperpixelMap slic(const Image& img, const SlicParams& params) {
  if (params.n_segments < 1 || params.compactness <= 0 || params.max_iter < 1)
    throw InvalidConfig("slic parameters must be positive");
  if (img.height < 1 || img.width < 1) throw ShapeMismatch("slic on an empty image");
  SuperpixelMap map;
  map.height = img.height;
  map.width = img.width;
  map.params = params;
  const int h = img.height, w = img.width;
  const std::size_t n = img.pixels.size();
  map.labels.assign(n, 0);

  const auto [lo, hi] = std::minmax_element(img.pixels.begin(), img.pixels.end());
  if (*hi - *lo <= 1e-9f) {
    map.num_segments = 1;
    map.degenerate = true;
    warn("segment: constant image, using a single superpixel");
    return map;
  }

  const double step = std::sqrt(static_cast<double>(n) / params.n_segments);
  const int ny = std::max(1, static_cast<int>(std::lround(h / step)));
  const int nx = std::max(1, static_cast<int>(std::lround(w / step)));
  std::vector<Center> centers;
  for (int i = 0; i < ny; ++i)
    for (int j = 0; j < nx; ++j) {
      int cy = static_cast<int>((i + 0.5) * h / ny);
      int cx = static_cast<int>((j + 0.5) * w / nx);
      // Move the seed to the flattest pixel of its 3x3 neighbourhood.
      int by = cy, bx = cx;
      double best = gradient_at(img, cy, cx);
      for (int a = -1; a <= 1; ++a)
        for (int b = -1; b <= 1; ++b) {
          const int yy = cy + a, xx = cx + b;
          if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
          const double g = gradient_at(img, yy, xx);
          if (g < best) {
            best = g;
            by = yy;
            bx = xx;
          }
        }
      centers.push_back({static_cast<double>(by), static_cast<double>(bx), img.at(by, bx)});
    }

  const double spatial = params.compactness / step;
  const int radius = static_cast<int>(std::ceil(step));
  std::vector<double> dist(n);
  std::vector<int> prev(n, -1);
  std::vector<Center> acc(centers.size());
  std::vector<std::size_t> counts(centers.size());
  for (int iter = 0; iter < params.max_iter; ++iter) {
    std::fill(dist.begin(), dist.end(), std::numeric_limits<double>::infinity());
    for (std::size_t c = 0; c < centers.size(); ++c) {
      const Center& ct = centers[c];
      const int y0 = std::max(0, static_cast<int>(ct.y) - radius);
      const int y1 = std::min(h - 1, static_cast<int>(ct.y) + radius);
      const int x0 = std::max(0, static_cast<int>(ct.x) - radius);
      const int x1 = std::min(w - 1, static_cast<int>(ct.x) + radius);
      for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
          const std::size_t p = static_cast<std::size_t>(y) * w + x;
          const double dv = img.pixels[p] - ct.v;
          const double sy = (y - ct.y) * spatial, sx = (x - ct.x) * spatial;
          const double d = dv * dv + sy * sy + sx * sx;
          if (d < dist[p]) {
            dist[p] = d;
            map.labels[p] = static_cast<int>(c);
          }
        }
    }
    // Pixels outside every window go to the spatially nearest centre.
    for (std::size_t p = 0; p < n; ++p) {
      if (std::isfinite(dist[p])) continue;
      const double y = static_cast<double>(p / w), x = static_cast<double>(p % w);
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < centers.size(); ++c) {
        const double d = (y - centers[c].y) * (y - centers[c].y) + (x - centers[c].x) * (x - centers[c].x);
        if (d < best) {
          best = d;
          map.labels[p] = static_cast<int>(c);
        }
      }
    }
    if (map.labels == prev) break;
    prev = map.labels;
    std::fill(acc.begin(), acc.end(), Center{});
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t p = 0; p < n; ++p) {
      const int c = map.labels[p];
      acc[c].y += static_cast<double>(p / w);
      acc[c].x += static_cast<double>(p % w);
      acc[c].v += img.pixels[p];
      ++counts[c];
    }
    for (std::size_t c = 0; c < centers.size(); ++c) {
      if (counts[c] == 0) continue;
      const double k = static_cast<double>(counts[c]);
      centers[c] = {acc[c].y / k, acc[c].x / k, acc[c].v / k};
    }
  }

  const auto min_size = static_cast<std::size_t>(0.5 * static_cast<double>(n) / params.n_segments);
  int count = enforce_connectivity(map.labels, h, w, std::max<std::size_t>(1, min_size));
  const int cap = static_cast<int>(std::floor(1.4 * params.n_segments));
  count = cap_segments(map.labels, img, count, std::max(1, cap));
  map.num_segments = relabel_sequential(map.labels);
  return map;
}

Image mean_projection(const Stack& stack) {
  Image out(stack.height, stack.width);
  const std::size_t plane = stack.plane();
  for (std::size_t i = 0; i < plane; ++i) {
    double s = 0;
    for (int z = 0; z < stack.depth; ++z) s += stack.data[z * plane + i];
    out.pixels[i] = static_cast<float>(s / stack.depth);
  }
  return out;
}

SuperpixelMap segment(const Stack& stack, const SlicParams& params) {
  if (stack.depth < 1) throw ShapeMismatch("segment: empty stack");
  return slic(mean_projection(stack), params);
}

PerturbationBatch make_perturbations(int rows, int cols, std::uint64_t seed, double on_probability) {
  if (rows < 1 || cols < 1) throw InvalidConfig("perturbation batch needs rows and columns");
  if (!(on_probability >= 0.0 && on_probability <= 1.0))
    throw InvalidConfig("on probability outside [0,1]");
  PerturbationBatch batch;
  batch.rows = rows;
  batch.cols = cols;
  batch.seed = seed;
  batch.on_probability = on_probability;
  batch.matrix.assign(static_cast<std::size_t>(rows) * cols, 1);
  Rng rng(seed);
  for (std::size_t i = static_cast<std::size_t>(cols); i < batch.matrix.size(); ++i)
    batch.matrix[i] = rng.bernoulli(on_probability) ? 1 : 0;
  return batch;
}

Stack perturb_one(const Stack& stack, const SuperpixelMap& spmap,
                  std::span<const std::uint8_t> row, float fill) {
  if (spmap.height != stack.height || spmap.width != stack.width)
    throw DimensionMismatch("superpixel map does not match the stack plane");
  if (row.size() != static_cast<std::size_t>(spmap.num_segments))
    throw DimensionMismatch("perturbation length " + std::to_string(row.size()) +
                            " != superpixel count " + std::to_string(spmap.num_segments));
  Stack out = stack;
  const std::size_t plane = stack.plane();
  for (std::size_t i = 0; i < plane; ++i) {
    if (row[static_cast<std::size_t>(spmap.labels[i])]) continue;
    for (int z = 0; z < stack.depth; ++z) out.data[z * plane + i] = fill;
  }
  return out;
}

std::vector<Stack> perturb(const Stack& stack, const SuperpixelMap& spmap,
                           const PerturbationBatch& batch, float fill) {
  if (batch.cols != spmap.num_segments)
    throw DimensionMismatch("batch has " + std::to_string(batch.cols) + " columns, map has " +
                            std::to_string(spmap.num_segments) + " superpixels");
  std::vector<Stack> out;
  out.reserve(static_cast<std::size_t>(batch.rows));
  for (int b = 0; b < batch.rows; ++b) out.push_back(perturb_one(stack, spmap, batch.row(b), fill));
  return out;
}

double perturbation_weight(std::span<const std::uint8_t> row, double kernel_width) {
  if (!(kernel_width > 0)) throw InvalidConfig("kernel width must be positive");
  if (row.empty()) throw DimensionMismatch("empty perturbation");
  std::size_t on = 0;
  for (auto v : row) on += v ? 1 : 0;
  if (on == 0) {
    warn("perturbation_weight: all-off perturbation has no cosine, weight set to 0");
    return 0.0;
  }
  // cos(1, x) for a boolean x reduces to sqrt(|x| / K).
  const double cosine = std::sqrt(static_cast<double>(on) / static_cast<double>(row.size()));
  const double d = 1.0 - cosine;
  return std::sqrt(std::exp(-(d * d) / (kernel_width * kernel_width)));
}

SurrogateFit fit_surrogate(const PerturbationBatch& batch, std::span<const double> predictions,
                           std::span<const double> weights, double ridge) {
  const int rows = batch.rows, k = batch.cols;
  if (predictions.size() != static_cast<std::size_t>(rows) ||
      weights.size() != static_cast<std::size_t>(rows))
    throw LengthMismatch("surrogate fit needs one prediction and weight per perturbation");
  if (ridge < 0) throw InvalidConfig("ridge penalty must be nonnegative");
  double wsum = 0;
  int active = 0;
  for (double v : weights) {
    if (!(v >= 0) || !std::isfinite(v)) throw InvalidConfig("weights must be finite and nonnegative");
    wsum += v;
    active += v > 0 ? 1 : 0;
  }
  if (wsum <= 0) throw LengthMismatch("all surrogate weights are zero");

  Eigen::VectorXd w(rows), y(rows);
  Eigen::MatrixXd x(rows, k);
  for (int b = 0; b < rows; ++b) {
    w[b] = weights[b] / wsum;
    y[b] = predictions[b];
    for (int j = 0; j < k; ++j) x(b, j) = batch.matrix[static_cast<std::size_t>(b) * k + j];
  }
  const Eigen::RowVectorXd x_mean = w.transpose() * x;
  const double y_mean = w.dot(y);
  const Eigen::MatrixXd xc = x.rowwise() - x_mean;
  // Exactly flat targets carry no signal; avoid rounding residue in yc.
  const bool flat = y.maxCoeff() == y.minCoeff();
  const Eigen::VectorXd yc = flat ? Eigen::VectorXd::Zero(rows) : Eigen::VectorXd(y.array() - y_mean);
  const Eigen::MatrixXd gram = xc.transpose() * w.asDiagonal() * xc;
  const Eigen::VectorXd rhs = xc.transpose() * (w.array() * yc.array()).matrix();

  SurrogateFit fit;
  fit.rank_deficient = active < k + 1;
  double lambda = ridge;
  const double scale = std::max(gram.diagonal().maxCoeff(), 1e-12);
  Eigen::VectorXd beta;
  for (int attempt = 0;; ++attempt) {
    Eigen::MatrixXd a = gram;
    a.diagonal().array() += lambda;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(a);
    const Eigen::VectorXd d = ldlt.vectorD();
    const bool ok = ldlt.info() == Eigen::Success && d.minCoeff() > 1e-12 * scale;
    if (ok) {
      beta = ldlt.solve(rhs);
      if (beta.allFinite()) break;
    }
    if (attempt > 30) throw NonFiniteLoss("surrogate regression failed to stabilize");
    fit.rank_deficient = true;
    lambda = std::max(lambda * 10.0, 1e-10 * scale);
  }
  if (fit.rank_deficient)
    warn("fit_surrogate: rank-deficient design, ridge raised to " + std::to_string(lambda));
  fit.ridge_used = lambda;
  fit.coefficients.assign(beta.data(), beta.data() + k);
  fit.intercept = y_mean - x_mean.dot(beta);
  const Eigen::VectorXd resid = yc - xc * beta;
  const double ss_res = w.dot(resid.cwiseAbs2());
  const double ss_tot = w.dot(yc.cwiseAbs2());
  fit.r2 = ss_tot > 0 ? 1.0 - ss_res / ss_tot : 0.0;
  return fit;
}

void ExplainerConfig::validate() const {
  if (num_perturbations < 2) throw InvalidConfig("explainer needs at least 2 perturbations");
  if (!(kernel_width > 0)) throw InvalidConfig("kernel width must be positive");
  if (!(ridge_penalty >= 0)) throw InvalidConfig("ridge penalty must be nonnegative");
  if (!(on_probability > 0 && on_probability < 1)) throw InvalidConfig("on probability outside (0,1)");
  if (slic.n_segments < 1 || slic.compactness <= 0 || slic.max_iter < 1)
    throw InvalidConfig("slic parameters must be positive");
}

nlohmann::ordered_json ExplainerConfig::to_json() const {
  return {{"num_perturbations", num_perturbations},
          {"kernel_width", kernel_width},
          {"fill_value", fill_value},
          {"ridge_penalty", ridge_penalty},
          {"on_probability", on_probability},
          {"n_segments", slic.n_segments},
          {"compactness", slic.compactness},
          {"max_iter", slic.max_iter},
          {"seed", seed}};
}

ExplainerConfig ExplainerConfig::from_json(const nlohmann::ordered_json& j) {
  ExplainerConfig c;
  c.num_perturbations = j.value("num_perturbations", c.num_perturbations);
  c.kernel_width = j.value("kernel_width", c.kernel_width);
  c.fill_value = j.value("fill_value", c.fill_value);
  c.ridge_penalty = j.value("ridge_penalty", c.ridge_penalty);
  c.on_probability = j.value("on_probability", c.on_probability);
  c.slic.n_segments = j.value("n_segments", c.slic.n_segments);
  c.slic.compactness = j.value("compactness", c.slic.compactness);
  c.slic.max_iter = j.value("max_iter", c.slic.max_iter);
  c.seed = j.value("seed", c.seed);
  c.validate();
  return c;
}

nlohmann::ordered_json ExplanationResult::meta() const {
  return {{"top_id", top_superpixel_id},
          {"num_segments", superpixels.num_segments},
          {"coefficients", coefficients},
          {"intercept", intercept},
          {"r2", surrogate_r2},
          {"degenerate_image", superpixels.degenerate},
          {"rank_deficient", rank_deficient}};
}

int top_superpixel(std::span<const double> coefficients) {
  if (coefficients.empty()) throw DimensionMismatch("no coefficients");
  int best = 0;
  for (std::size_t i = 1; i < coefficients.size(); ++i)
    if (coefficients[i] > coefficients[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
  return best;
}

Mask superpixel_mask(const SuperpixelMap& spmap, int id, int depth) {
  Mask m(depth, spmap.height, spmap.width, 0);
  const std::size_t plane = m.plane();
  for (std::size_t i = 0; i < plane; ++i)
    if (spmap.labels[i] == id)
      for (int z = 0; z < depth; ++z) m.data[z * plane + i] = 1;
  return m;
}

ExplanationResult explain(const Stack& stack, const Predictor& predictor,
                          const ExplainerConfig& cfg) {
  cfg.validate();
  ExplanationResult r;
  r.superpixels = segment(stack, cfg.slic);
  const int k = r.superpixels.num_segments;
  if (cfg.num_perturbations < k)
    warn("explain: " + std::to_string(cfg.num_perturbations) + " perturbations for " +
         std::to_string(k) + " superpixels");
  const auto batch = make_perturbations(cfg.num_perturbations, k, derive_seed(cfg.seed, "perturb"),
                                        cfg.on_probability);
  std::vector<double> predictions;
  predictions.reserve(static_cast<std::size_t>(batch.rows));
  // Score in chunks so only a few perturbed stacks are alive at once.
  constexpr int kChunk = 16;
  for (int b0 = 0; b0 < batch.rows; b0 += kChunk) {
    std::vector<Stack> chunk;
    for (int b = b0; b < std::min(batch.rows, b0 + kChunk); ++b)
      chunk.push_back(perturb_one(stack, r.superpixels, batch.row(b), cfg.fill_value));
    std::vector<const Stack*> ptrs;
    for (const auto& s : chunk) ptrs.push_back(&s);
    const auto p = predictor(ptrs);
    if (p.size() != ptrs.size()) throw LengthMismatch("predictor returned the wrong count");
    predictions.insert(predictions.end(), p.begin(), p.end());
  }
  std::vector<double> weights(static_cast<std::size_t>(batch.rows));
  for (int b = 0; b < batch.rows; ++b) weights[b] = perturbation_weight(batch.row(b), cfg.kernel_width);
  const auto fit = fit_surrogate(batch, predictions, weights, cfg.ridge_penalty);
  r.coefficients = fit.coefficients;
  r.intercept = fit.intercept;
  r.surrogate_r2 = fit.r2;
  r.rank_deficient = fit.rank_deficient;
  r.top_superpixel_id = top_superpixel(r.coefficients);
  r.mask = superpixel_mask(r.superpixels, r.top_superpixel_id, stack.depth);
  return r;
}

ExplanationResult explain(const Stack& stack, baseline::BaselineModel& model,
                          const ExplainerConfig& cfg) {
  return explain(
      stack, [&](std::span<const Stack* const> s) { return model.predict_batch(s); }, cfg);
}

ExplanationResult explain(const Stack& stack, const ModelCheckpoint& ckpt,
                          const ExplainerConfig& cfg) {
  auto model = baseline::BaselineModel::from_checkpoint(ckpt);
  return explain(stack, model, cfg);
}

MaskCorpus build_mask_corpus(std::span<const dataprep::TripletSample* const> samples,
                             const Predictor& predictor, const ExplainerConfig& cfg) {
  MaskCorpus corpus;
  std::vector<const dataprep::TripletSample*> positives;
  for (const auto* s : samples)
    if (s->label == Label::Positive) positives.push_back(s);
  if (!samples.empty()) corpus.task = samples.front()->task;
  std::vector<const Stack*> stacks;
  for (const auto* s : positives) stacks.push_back(&s->stack);
  const auto probs = stacks.empty() ? std::vector<double>{} : predictor(stacks);
  for (std::size_t i = 0; i < positives.size(); ++i) {
    if (baseline::classify(probs[i]) != Label::Positive) continue;
    const auto* s = positives[i];
    ExplainerConfig c = cfg;
    c.seed = derive_seed(cfg.seed, s->id);
    const auto r = explain(s->stack, predictor, c);
    auto meta = r.meta();
    meta["probability"] = probs[i];
    corpus.entries.push_back({s->id, s->source_volume_id, s->stack, r.mask, std::move(meta)});
  }
  if (corpus.entries.empty()) throw EmptyCorpus("no true-positive stacks to explain");
  return corpus;
}

MaskCorpus build_mask_corpus(std::span<const dataprep::TripletSample* const> samples,
                             baseline::BaselineModel& model, const ExplainerConfig& cfg) {
  return build_mask_corpus(
      samples, [&](std::span<const Stack* const> s) { return model.predict_batch(s); }, cfg);
}

MaskCorpus build_mask_corpus(const dataprep::TaskDataset& dataset,
                             std::span<const std::size_t> indices,
                             baseline::BaselineModel& model, const ExplainerConfig& cfg) {
  std::vector<const dataprep::TripletSample*> samples;
  for (std::size_t i : indices) samples.push_back(&dataset.samples.at(i));
  auto corpus = build_mask_corpus(samples, model, cfg);
  corpus.task = dataset.task;
  return corpus;
}

namespace {

std::string entry_dir_name(std::size_t index, const std::string& id) {
  std::string safe;
  for (char c : id) safe += (std::isalnum(static_cast<unsigned char>(c)) || c == '-') ? c : '_';
  char prefix[16];
  std::snprintf(prefix, sizeof prefix, "%05zu_", index);
  return prefix + safe;
}

}  // namespace

void write_corpus(const std::string& dir, const MaskCorpus& corpus) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IOFailure("cannot create " + dir + ": " + ec.message());
  nlohmann::ordered_json index;
  index["task"] = dataprep::to_string(corpus.task);
  index["entries"] = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < corpus.entries.size(); ++i) {
    const auto& e = corpus.entries[i];
    const std::string name = entry_dir_name(i, e.sample_id);
    const fs::path sub = fs::path(dir) / name;
    fs::create_directories(sub, ec);
    if (ec) throw IOFailure("cannot create " + sub.string() + ": " + ec.message());
    io::write_stack((sub / "stack.raw").string(), e.stack);
    io::write_mask((sub / "mask.raw").string(), e.mask);
    std::ofstream meta(sub / "meta.json");
    meta << e.meta.dump(2) << '\n';
    if (!meta) throw IOFailure("cannot write " + (sub / "meta.json").string());
    index["entries"].push_back(
        {{"id", e.sample_id}, {"source_volume", e.source_volume_id}, {"dir", name}});
  }
  std::ofstream out(fs::path(dir) / "corpus.json");
  out << index.dump(2) << '\n';
  if (!out) throw IOFailure("cannot write corpus index in " + dir);
}

MaskCorpus read_corpus(const std::string& dir) {
  const fs::path idx = fs::path(dir) / "corpus.json";
  std::ifstream in(idx);
  if (!in) throw MissingArtifact("mask corpus not found at " + dir + " (run explain first)");
  nlohmann::ordered_json index;
  try {
    index = nlohmann::ordered_json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw UnreadableFile(idx.string() + ": " + e.what());
  }
  MaskCorpus corpus;
  corpus.task = dataprep::parse_task(index.at("task").get<std::string>());
  for (const auto& e : index.at("entries")) {
    const fs::path sub = fs::path(dir) / e.at("dir").get<std::string>();
    CorpusEntry entry;
    entry.sample_id = e.at("id").get<std::string>();
    entry.source_volume_id = e.at("source_volume").get<std::string>();
    entry.stack = io::read_stack((sub / "stack.raw").string());
    entry.mask = io::read_mask((sub / "mask.raw").string());
    std::ifstream meta(sub / "meta.json");
    if (!meta) throw UnreadableFile((sub / "meta.json").string());
    entry.meta = nlohmann::ordered_json::parse(meta);
    corpus.entries.push_back(std::move(entry));
  }
  return corpus;
}

}  // namespace cmrqc::explainer
