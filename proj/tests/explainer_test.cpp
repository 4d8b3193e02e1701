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


#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "cmrqc/explainer.hpp"
#include "test_util.hpp"

namespace cmrqc::explainer {
namespace {

using dataprep::Label;
using dataprep::Task;
using dataprep::TripletSample;

Stack noise_stack(std::uint64_t seed, int size = 64) {
  Rng rng(seed);
  Stack s(3, size, size);
  for (float& v : s.data) v = static_cast<float>(rng.uniform());
  return s;
}

// Smooth blobs so SLIC has real structure to follow.
Stack blob_stack(int size = 128) {
  Stack s(3, size, size);
  for (int z = 0; z < 3; ++z)
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x)
        s.at(z, y, x) = static_cast<float>(0.5 + 0.25 * std::sin(y / 9.0) * std::cos(x / 13.0) +
                                           0.02 * z);
  return s;
}

// Plain Gaussian elimination on [1 | X] without weights or ridge.
std::vector<double> ols_with_intercept(const std::vector<std::vector<double>>& x,
                                       const std::vector<double>& y) {
  const std::size_t p = x[0].size() + 1;
  std::vector<std::vector<double>> a(p, std::vector<double>(p + 1, 0.0));
  for (std::size_t r = 0; r < x.size(); ++r) {
    std::vector<double> row{1.0};
    row.insert(row.end(), x[r].begin(), x[r].end());
    for (std::size_t i = 0; i < p; ++i) {
      for (std::size_t j = 0; j < p; ++j) a[i][j] += row[i] * row[j];
      a[i][p] += row[i] * y[r];
    }
  }
  for (std::size_t c = 0; c < p; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < p; ++r)
      if (std::abs(a[r][c]) > std::abs(a[piv][c])) piv = r;
    std::swap(a[c], a[piv]);
    for (std::size_t r = 0; r < p; ++r) {
      if (r == c) continue;
      const double f = a[r][c] / a[c][c];
      for (std::size_t k = c; k <= p; ++k) a[r][k] -= f * a[c][k];
    }
  }
  std::vector<double> beta(p);
  for (std::size_t i = 0; i < p; ++i) beta[i] = a[i][p] / a[i][i];
  return beta;
}

PerturbationBatch batch_from_rows(const std::vector<std::vector<int>>& rows) {
  PerturbationBatch b;
  b.rows = static_cast<int>(rows.size());
  b.cols = static_cast<int>(rows[0].size());
  for (const auto& r : rows)
    for (int v : r) b.matrix.push_back(static_cast<std::uint8_t>(v));
  return b;
}

TEST(Weight, HandEvaluatedValues) {
  const std::vector<std::uint8_t> all{1, 1, 1, 1}, half{1, 1, 0, 0}, one{1, 0, 0, 0};
  EXPECT_NEAR(perturbation_weight(all, 0.25), 1.0, 1e-4);
  EXPECT_NEAR(perturbation_weight(half, 0.25), 0.50344, 1e-4);
  EXPECT_NEAR(perturbation_weight(one, 0.25), 0.13534, 1e-4);
}

TEST(Weight, AllOffIsZero) {
  const std::vector<std::uint8_t> none(6, 0);
  EXPECT_EQ(perturbation_weight(none, 0.25), 0.0);
  EXPECT_THROW(perturbation_weight(std::vector<std::uint8_t>{1}, 0.0), InvalidConfig);
}

TEST(WeightProperty, BoundsAndIdentity) {
  Rng rng(11);
  for (int c = 0; c < 1000; ++c) {
    const int k = 1 + static_cast<int>(rng.below(40));
    std::vector<std::uint8_t> row(k);
    for (auto& v : row) v = rng.bernoulli(0.6);
    const double w = perturbation_weight(row, 0.05 + rng.uniform());
    const bool all_on = std::all_of(row.begin(), row.end(), [](auto v) { return v == 1; });
    ASSERT_GE(w, 0.0);
    ASSERT_LE(w, 1.0);
    ASSERT_EQ(w == 1.0, all_on) << "k=" << k;
  }
}

TEST(WeightProperty, NestedOnSetsAreMonotone) {
  Rng rng(12);
  for (int c = 0; c < 1000; ++c) {
    const int k = 2 + static_cast<int>(rng.below(40));
    std::vector<std::uint8_t> a(k, 0), b(k, 0);
    for (int i = 0; i < k; ++i) {
      b[i] = rng.bernoulli(0.5);
      a[i] = b[i] && rng.bernoulli(0.5);
    }
    a[0] = b[0] = 1;
    const double sigma = 0.05 + rng.uniform();
    ASSERT_LE(perturbation_weight(a, sigma), perturbation_weight(b, sigma) + 1e-15);
  }
}

TEST(Segment, ConstantImageIsOneFlaggedSegment) {
  Stack s(3, 128, 128, 0.4f);
  const auto map = segment(s);
  EXPECT_EQ(map.num_segments, 1);
  EXPECT_TRUE(map.degenerate);
  EXPECT_TRUE(std::all_of(map.labels.begin(), map.labels.end(), [](int l) { return l == 0; }));
}

TEST(Segment, IdsPartitionThePlane) {
  const auto map = segment(blob_stack());
  ASSERT_EQ(map.labels.size(), 128u * 128u);
  std::set<int> ids(map.labels.begin(), map.labels.end());
  EXPECT_EQ(static_cast<int>(ids.size()), map.num_segments);
  EXPECT_EQ(*ids.begin(), 0);
  EXPECT_EQ(*ids.rbegin(), map.num_segments - 1);
  EXPECT_FALSE(map.degenerate);
}

TEST(Segment, SquaresOnBlackGrid) {
  // 5x5 bright squares of side 16 centred in 25.6-pixel cells.
  Stack s(3, 128, 128, 0.0f);
  auto inside = [](double y, double x, int& cell) {
    const int r = static_cast<int>(y / 25.6), c = static_cast<int>(x / 25.6);
    const double cy = (r + 0.5) * 25.6, cx = (c + 0.5) * 25.6;
    cell = r * 5 + c;
    return std::abs(y - cy) < 8 && std::abs(x - cx) < 8;
  };
  for (int y = 0; y < 128; ++y)
    for (int x = 0; x < 128; ++x) {
      int cell;
      if (inside(y, x, cell))
        for (int z = 0; z < 3; ++z) s.at(z, y, x) = 1.0f;
    }
  // At compactness 0.3 intensity swamps the spatial term on a binary image
  // and clusters straddle the grid lines (the reference SLIC does the same).
  SlicParams p;
  p.compactness = 1.0;
  const auto map = segment(s, p);
  std::vector<double> sy(map.num_segments), sx(map.num_segments), n(map.num_segments);
  for (int y = 0; y < 128; ++y)
    for (int x = 0; x < 128; ++x) {
      const int l = map.at(y, x);
      sy[l] += y;
      sx[l] += x;
      n[l] += 1;
    }
  std::set<int> squares;
  for (int l = 0; l < map.num_segments; ++l) {
    int cell;
    if (inside(sy[l] / n[l], sx[l] / n[l], cell)) squares.insert(cell);
  }
  EXPECT_GE(map.num_segments, 20);
  EXPECT_GE(squares.size(), 20u);
}

TEST(SegmentProperty, PartitionAndCountOnRandomImages) {
  // Smooth random fields at 32x32 keep the suite fast while exercising
  // the connectivity and merge passes.
  Rng rng(21);
  for (int c = 0; c < 1000; ++c) {
    const int size = 32;
    Stack s(3, size, size);
    const double fy = 0.05 + 0.5 * rng.uniform(), fx = 0.05 + 0.5 * rng.uniform();
    const double noise = 0.2 * rng.uniform();
    for (int z = 0; z < 3; ++z)
      for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x)
          s.at(z, y, x) = static_cast<float>(0.5 + 0.3 * std::sin(fy * y) * std::cos(fx * x) +
                                             noise * rng.uniform());
    SlicParams p;
    p.n_segments = 4 + static_cast<int>(rng.below(22));
    const auto map = segment(s, p);
    std::vector<int> count(map.num_segments, 0);
    for (int l : map.labels) {
      ASSERT_GE(l, 0);
      ASSERT_LT(l, map.num_segments);
      ++count[l];
    }
    for (int v : count) ASSERT_GT(v, 0);
    ASSERT_LE(map.num_segments, static_cast<int>(std::floor(1.4 * p.n_segments)));
    ASSERT_GE(map.num_segments, 1);
  }
}

TEST(Segment, CountNearRequestOnStructuredImage) {
  const auto map = segment(blob_stack());
  EXPECT_GE(map.num_segments, 15);
  EXPECT_LE(map.num_segments, 35);
}

TEST(Segment, Deterministic) {
  const auto s = noise_stack(3, 128);
  EXPECT_EQ(segment(s).labels, segment(s).labels);
}

TEST(Perturb, IdentityAndFullOcclusion) {
  const auto s = blob_stack();
  const auto map = segment(s);
  const std::vector<std::uint8_t> on(map.num_segments, 1), off(map.num_segments, 0);
  EXPECT_EQ(perturb_one(s, map, on, 0.0f), s);
  const auto z = perturb_one(s, map, off, 0.25f);
  EXPECT_TRUE(std::all_of(z.data.begin(), z.data.end(), [](float v) { return v == 0.25f; }));
}

TEST(Perturb, SingleSuperpixelOffChangesExactlyItsPixels) {
  const auto s = blob_stack();
  const auto map = segment(s);
  ASSERT_GT(map.num_segments, 3);
  std::vector<std::uint8_t> row(map.num_segments, 1);
  row[3] = 0;
  const auto out = perturb_one(s, map, row, 0.0f);
  for (int z = 0; z < 3; ++z)
    for (int y = 0; y < 128; ++y)
      for (int x = 0; x < 128; ++x) {
        if (map.at(y, x) == 3)
          ASSERT_EQ(out.at(z, y, x), 0.0f);
        else
          ASSERT_EQ(out.at(z, y, x), s.at(z, y, x));
      }
}

TEST(Perturb, LengthMismatchRejected) {
  const auto s = blob_stack();
  const auto map = segment(s);
  const std::vector<std::uint8_t> row(map.num_segments + 1, 1);
  EXPECT_THROW(perturb_one(s, map, row, 0.0f), DimensionMismatch);
  const auto batch = make_perturbations(4, map.num_segments + 2, 1);
  EXPECT_THROW(perturb(s, map, batch, 0.0f), DimensionMismatch);
}

TEST(Perturbations, FirstRowAllOnesRestBernoulli) {
  const auto b = make_perturbations(2001, 25, 5);
  for (int j = 0; j < 25; ++j) EXPECT_EQ(b.matrix[j], 1);
  double on = 0;
  for (std::size_t i = 25; i < b.matrix.size(); ++i) on += b.matrix[i];
  const double n = static_cast<double>(b.matrix.size() - 25);
  // Five standard deviations of a binomial proportion.
  EXPECT_NEAR(on / n, 0.5, 5 * std::sqrt(0.25 / n));
  EXPECT_EQ(make_perturbations(2001, 25, 5).matrix, b.matrix);
}

TEST(Surrogate, ColumnTargetMatchesNormalEquations) {
  const std::vector<std::vector<int>> rows{{1, 1, 0}, {1, 0, 1}, {0, 1, 1},
                                           {1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
  const auto batch = batch_from_rows(rows);
  for (int j = 0; j < 3; ++j) {
    std::vector<std::vector<double>> x;
    std::vector<double> y;
    for (const auto& r : rows) {
      x.push_back({double(r[0]), double(r[1]), double(r[2])});
      y.push_back(r[j]);
    }
    const auto oracle = ols_with_intercept(x, y);
    const std::vector<double> w(6, 1.0);
    const auto fit = fit_surrogate(batch, y, w);
    for (int i = 0; i < 3; ++i) EXPECT_NEAR(fit.coefficients[i], oracle[i + 1], 1e-5);
    EXPECT_NEAR(fit.intercept, oracle[0], 1e-5);
    EXPECT_EQ(top_superpixel(fit.coefficients), j);
  }
}

TEST(Surrogate, ConstantPredictionsGiveZeroCoefficients) {
  const auto batch = make_perturbations(150, 25, 2);
  const std::vector<double> y(150, 0.7), w(150, 1.0);
  const auto fit = fit_surrogate(batch, y, w);
  for (double b : fit.coefficients) EXPECT_LE(std::abs(b), 1e-6);
  EXPECT_EQ(fit.r2, 0.0);
}

TEST(Surrogate, WeightScaleInvariance) {
  const auto batch = make_perturbations(60, 8, 3);
  Rng rng(4);
  std::vector<double> y(60), w(60), w2(60);
  for (int i = 0; i < 60; ++i) {
    y[i] = rng.uniform();
    w[i] = rng.uniform();
    w2[i] = 2 * w[i];
  }
  EXPECT_EQ(fit_surrogate(batch, y, w).coefficients, fit_surrogate(batch, y, w2).coefficients);
}

TEST(Surrogate, AffineBlackBoxRecovered) {
  Rng rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    const auto batch = make_perturbations(150, 25, 100 + trial);
    std::vector<double> beta(25);
    for (double& b : beta) b = rng.uniform(-1, 1);
    const double b0 = rng.uniform(-0.5, 0.5);
    std::vector<double> y(150), w(150);
    for (int r = 0; r < 150; ++r) {
      y[r] = b0;
      for (int j = 0; j < 25; ++j) y[r] += beta[j] * batch.matrix[r * 25 + j];
      w[r] = perturbation_weight(batch.row(r), 0.25);
    }
    const auto fit = fit_surrogate(batch, y, w);
    for (int j = 0; j < 25; ++j) ASSERT_NEAR(fit.coefficients[j], beta[j], 1e-4);
    ASSERT_EQ(top_superpixel(fit.coefficients), top_superpixel(beta));
    ASSERT_NEAR(fit.r2, 1.0, 1e-6);
  }
}

TEST(Surrogate, RankDeficientDesignFallsBack) {
  // Column 2 duplicates column 1.
  const auto batch = batch_from_rows({{1, 1, 1}, {0, 1, 1}, {1, 0, 0}, {1, 1, 1}, {0, 0, 0}});
  const std::vector<double> y{1, 0.5, 0.5, 1, 0}, w(5, 1.0);
  const auto fit = fit_surrogate(batch, y, w, 0.0);
  EXPECT_TRUE(fit.rank_deficient);
  for (double b : fit.coefficients) EXPECT_TRUE(std::isfinite(b));
}

TEST(Surrogate, LengthMismatchRejected) {
  const auto batch = make_perturbations(10, 4, 1);
  const std::vector<double> y(9, 0.0), w(10, 1.0);
  EXPECT_THROW(fit_surrogate(batch, y, w), LengthMismatch);
}

TEST(TopSuperpixel, TiesGoToLowestId) {
  const std::vector<double> c{0.1, 0.5, 0.2, 0.5};
  EXPECT_EQ(top_superpixel(c), 1);
}

TEST(Explain, ConstantModelIsSafe) {
  const auto s = blob_stack();
  Predictor constant = [](std::span<const Stack* const> b) {
    return std::vector<double>(b.size(), 0.7);
  };
  ExplainerConfig cfg;
  const auto r = explain(s, constant, cfg);
  for (double b : r.coefficients) EXPECT_LE(std::abs(b), 1e-6);
  EXPECT_EQ(r.top_superpixel_id, 0);
  EXPECT_EQ(r.surrogate_r2, 0.0);
  EXPECT_EQ(r.mask, superpixel_mask(r.superpixels, 0));
}

TEST(Explain, RecoversTheInformativeSuperpixel) {
  // The black box answers with the mean intensity inside a fixed disk.
  const auto s = blob_stack();
  Predictor disk = [](std::span<const Stack* const> b) {
    std::vector<double> out;
    for (const Stack* st : b) {
      double sum = 0, n = 0;
      for (int y = 54; y < 74; ++y)
        for (int x = 54; x < 74; ++x) {
          sum += st->at(1, y, x);
          n += 1;
        }
      out.push_back(sum / n);
    }
    return out;
  };
  const auto r = explain(s, disk, ExplainerConfig{});
  const auto sizes = r.superpixels.segment_sizes();
  std::size_t overlap = 0;
  for (int y = 54; y < 74; ++y)
    for (int x = 54; x < 74; ++x) overlap += r.mask.at(0, y, x);
  EXPECT_GT(overlap, 0u);
  // Mask is one superpixel replicated over the three slices.
  std::size_t on = 0;
  for (auto v : r.mask.data) on += v;
  EXPECT_EQ(on, 3 * sizes[r.top_superpixel_id]);
  EXPECT_GT(r.surrogate_r2, 0.9);
}

TEST(Explain, DeterministicForSeed) {
  const auto s = noise_stack(9, 128);
  Predictor p = [](std::span<const Stack* const> b) {
    std::vector<double> out;
    for (const Stack* st : b) out.push_back(st->at(0, 10, 10) * 0.5 + st->at(2, 100, 90) * 0.3);
    return out;
  };
  ExplainerConfig cfg;
  cfg.seed = 77;
  const auto a = explain(s, p, cfg), b = explain(s, p, cfg);
  EXPECT_EQ(a.coefficients, b.coefficients);
  EXPECT_EQ(a.mask, b.mask);
  EXPECT_EQ(a.meta().dump(), b.meta().dump());
}

std::vector<TripletSample> marked_samples(int positives, int negatives) {
  std::vector<TripletSample> out;
  for (int i = 0; i < positives + negatives; ++i) {
    TripletSample t;
    t.label = i < positives ? Label::Positive : Label::Negative;
    t.task = Task::Basal;
    t.id = "v" + std::to_string(i) + "/basal/" + (i < positives ? "P" : "N");
    t.source_volume_id = "v" + std::to_string(i);
    t.stack = blob_stack(32);
    t.stack.at(0, 0, 0) = static_cast<float>(i) / 100.0f;  // identity marker
    t.slice_indices = {1, 2, 3};
    out.push_back(std::move(t));
  }
  return out;
}

// Classifies sample i as positive unless i is in missed; negatives always P.
Predictor marker_predictor(std::set<int> missed) {
  return [missed](std::span<const Stack* const> b) {
    std::vector<double> out;
    for (const Stack* s : b) {
      const int i = static_cast<int>(std::lround(s->at(0, 0, 0) * 100.0f));
      out.push_back(missed.count(i) ? 0.1 : 0.9);
    }
    return out;
  };
}

ExplainerConfig quick_cfg() {
  ExplainerConfig cfg;
  cfg.num_perturbations = 30;
  cfg.slic.n_segments = 9;
  return cfg;
}

TEST(Corpus, PerfectClassifierKeepsAllPositives) {
  const auto samples = marked_samples(10, 10);
  std::vector<const TripletSample*> ptrs;
  for (const auto& s : samples) ptrs.push_back(&s);
  const auto corpus = build_mask_corpus(ptrs, marker_predictor({}), quick_cfg());
  ASSERT_EQ(corpus.entries.size(), 10u);
  for (const auto& e : corpus.entries) EXPECT_NE(e.sample_id.find("/P"), std::string::npos);
}

TEST(Corpus, MissedPositivesAreDropped) {
  const auto samples = marked_samples(10, 5);
  std::vector<const TripletSample*> ptrs;
  for (const auto& s : samples) ptrs.push_back(&s);
  const auto corpus = build_mask_corpus(ptrs, marker_predictor({1, 4, 7}), quick_cfg());
  EXPECT_EQ(corpus.entries.size(), 7u);
}

TEST(Corpus, NoTruePositivesIsAnError) {
  const auto samples = marked_samples(2, 3);
  std::vector<const TripletSample*> ptrs;
  for (const auto& s : samples) ptrs.push_back(&s);
  EXPECT_THROW(build_mask_corpus(ptrs, marker_predictor({0, 1}), quick_cfg()), EmptyCorpus);
}

TEST(Corpus, DiskRoundTrip) {
  const auto dir = testing::scratch_dir("corpus");
  const auto samples = marked_samples(3, 1);
  std::vector<const TripletSample*> ptrs;
  for (const auto& s : samples) ptrs.push_back(&s);
  const auto corpus = build_mask_corpus(ptrs, marker_predictor({}), quick_cfg());
  write_corpus(dir.string(), corpus);
  const auto back = read_corpus(dir.string());
  ASSERT_EQ(back.entries.size(), corpus.entries.size());
  EXPECT_EQ(back.task, Task::Basal);
  for (std::size_t i = 0; i < back.entries.size(); ++i) {
    EXPECT_EQ(back.entries[i].sample_id, corpus.entries[i].sample_id);
    EXPECT_EQ(back.entries[i].stack, corpus.entries[i].stack);
    EXPECT_EQ(back.entries[i].mask, corpus.entries[i].mask);
    EXPECT_EQ(back.entries[i].meta.dump(), corpus.entries[i].meta.dump());
  }
  EXPECT_THROW(read_corpus((dir / "missing").string()), MissingArtifact);
}

}  // namespace
}  // namespace cmrqc::explainer
