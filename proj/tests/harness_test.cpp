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
#include <zlib.h>

#include <cmath>
#include <fstream>
#include <iterator>
#include <random>
#include <sstream>

#include "cmrqc/harness.hpp"
#include "test_util.hpp"

namespace cmrqc::harness {
namespace {

using dataprep::Label;
using dataprep::TripletSample;
constexpr Label P = Label::Positive, N = Label::Negative;

// Pairwise (Mann-Whitney) AUC, ties count half.
double pairwise_auc(const std::vector<Label>& y, const std::vector<double>& s) {
  double wins = 0, pairs = 0;
  for (std::size_t i = 0; i < y.size(); ++i)
    for (std::size_t j = 0; j < y.size(); ++j)
      if (y[i] == P && y[j] == N) {
        pairs += 1;
        wins += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
      }
  return wins / pairs;
}

TEST(Harness, ConfusionHandExample) {
  const std::vector<Label> y{P, P, N, N, P, N}, p{P, P, P, N, N, N};
  const auto c = confusion(y, p);
  EXPECT_EQ(c, (ConfusionCounts{2, 1, 1, 2}));
  const auto m = metrics(c);
  EXPECT_NEAR(m.accuracy, 4.0 / 6.0, 1e-12);
  EXPECT_NEAR(m.precision, 2.0 / 3.0, 1e-12);
  EXPECT_NEAR(m.recall, 2.0 / 3.0, 1e-12);
  EXPECT_NEAR(m.f_measure, 2.0 / 3.0, 1e-12);
}

TEST(Harness, MetricsFromCounts) {
  const auto m = metrics(ConfusionCounts{3, 1, 0, 2});
  EXPECT_NEAR(m.accuracy, 5.0 / 6.0, 1e-5);
  EXPECT_NEAR(m.precision, 0.75, 1e-12);
  EXPECT_NEAR(m.recall, 1.0, 1e-12);
  EXPECT_NEAR(m.f_measure, 0.85714, 1e-5);
}

TEST(Harness, UndefinedMetricsAreFlagged) {
  const auto m = metrics(ConfusionCounts{0, 0, 0, 5});
  EXPECT_TRUE(m.precision_undefined);
  EXPECT_TRUE(m.recall_undefined);
  EXPECT_TRUE(m.f_undefined);
  EXPECT_EQ(m.precision, 0.0);
  EXPECT_FALSE(m.accuracy_undefined);
  EXPECT_FALSE(metrics(ConfusionCounts{}).accuracy_undefined == false);
}

TEST(Harness, ConfusionLengthMismatch) {
  const std::vector<Label> y{P, N}, p{P};
  EXPECT_THROW(confusion(y, p), LengthMismatch);
}

TEST(Harness, AucPerfectAndSingleClass) {
  const std::vector<Label> y{P, P, N, N};
  const std::vector<double> s{0.9, 0.8, 0.2, 0.1};
  EXPECT_DOUBLE_EQ(*auc(y, s), 1.0);
  const std::vector<double> rev{0.1, 0.2, 0.8, 0.9};
  EXPECT_DOUBLE_EQ(*auc(y, rev), 0.0);
  const std::vector<Label> all{P, P};
  const std::vector<double> s2{0.3, 0.4};
  EXPECT_FALSE(auc(all, s2).has_value());
  EXPECT_TRUE(metrics(confusion(all, all), all, s2).auc_undefined);
}

TEST(Harness, AucTiesCountHalf) {
  const std::vector<Label> y{P, N};
  const std::vector<double> s{0.5, 0.5};
  EXPECT_DOUBLE_EQ(*auc(y, s), 0.5);
}

TEST(Harness, AucCoinFlipNearHalf) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<Label> y;
  std::vector<double> s;
  for (int i = 0; i < 20000; ++i) {
    y.push_back(u(rng) < 0.5 ? P : N);
    s.push_back(u(rng));
  }
  EXPECT_NEAR(*auc(y, s), 0.5, 0.05);
}

TEST(HarnessProperty, AucMatchesPairwiseAndInvariances) {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> len(2, 30), level(0, 6);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<Label> y;
    std::vector<double> s;
    const int n = len(rng);
    for (int i = 0; i < n; ++i) {
      y.push_back(i == 0 ? P : i == 1 ? N : (rng() & 1 ? P : N));
      s.push_back(level(rng) / 6.0);  // coarse levels give ties
    }
    const double a = *auc(y, s);
    ASSERT_NEAR(a, pairwise_auc(y, s), 1e-12);
    std::vector<double> t, neg;
    for (double v : s) {
      t.push_back(std::exp(3 * v) - 7);
      neg.push_back(-v);
    }
    ASSERT_NEAR(*auc(y, t), a, 1e-12);
    ASSERT_NEAR(*auc(y, neg), 1 - a, 1e-12);
    const auto roc = roc_curve(y, s);
    ASSERT_EQ(roc.front().fpr, 0.0);
    ASSERT_EQ(roc.back().tpr, 1.0);
    for (std::size_t i = 1; i < roc.size(); ++i) {
      ASSERT_GE(roc[i].fpr, roc[i - 1].fpr);
      ASSERT_GE(roc[i].tpr, roc[i - 1].tpr);
    }
  }
}

TEST(HarnessProperty, MetricIdentities) {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<std::size_t> d(0, 50);
  for (int trial = 0; trial < 1000; ++trial) {
    const ConfusionCounts c{d(rng), d(rng), d(rng), d(rng)};
    const auto m = metrics(c);
    for (double v : {m.accuracy, m.precision, m.recall, m.f_measure}) {
      ASSERT_GE(v, 0.0);
      ASSERT_LE(v, 1.0);
    }
    if (c.tp > 0) {
      ASSERT_NEAR(m.f_measure,
                  2.0 * c.tp / (2.0 * c.tp + static_cast<double>(c.fp) + static_cast<double>(c.fn)),
                  1e-12);
      ASSERT_LE(std::min(m.precision, m.recall), m.f_measure + 1e-12);
      ASSERT_LE(m.f_measure, std::max(m.precision, m.recall) + 1e-12);
    }
  }
}

TEST(Harness, SummaryReproducesPublishedDeviation) {
  // Accuracy over five folds, apical and basal.
  const std::vector<double> apex{96.00, 94.25, 94.02, 94.76, 93.52};
  const std::vector<double> basal{95.68, 96.87, 95.86, 96.64, 96.18};
  const auto a = summarize(apex), b = summarize(basal);
  EXPECT_NEAR(a.mean, 94.51, 0.005);
  // Fold values are printed to two decimals, which bounds the error at ~0.01.
  EXPECT_NEAR(a.sd_sample, 0.95, 0.01);
  EXPECT_NEAR(b.mean, 96.25, 0.005);
  EXPECT_NEAR(b.sd_sample, 0.51, 0.01);
  EXPECT_GT(std::abs(a.sd_population - 0.95), 0.05);
  EXPECT_GT(std::abs(b.sd_population - 0.51), 0.05);
  const std::vector<double> one{0.7};
  EXPECT_EQ(summarize(one).sd_sample, 0.0);
}

TEST(Harness, ReferenceTablesAreConsistent) {
  const auto ref = reference_results();
  EXPECT_DOUBLE_EQ(ref["baseline"]["apex"]["accuracy"][0].get<double>(), 94.51);
  EXPECT_DOUBLE_EQ(ref["cascade"]["basal"]["recall"][0].get<double>(), 97.80);
  EXPECT_DOUBLE_EQ(ref["segmenter"]["apex"]["dice"].get<double>(), 66.10);
  const auto& t5 = ref["training_set_after_cascade"]["apex"];
  const double b = t5["misclassified_before"].get<int>(), a = t5["misclassified_after"].get<int>();
  EXPECT_NEAR(100 * (b - a) / b, 35.94, 0.005);
}

std::vector<TripletSample> leakage_samples(int n) {
  std::vector<TripletSample> out(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    out[i].id = "s" + std::to_string(i);
    out[i].source_volume_id = "v" + std::to_string(i / 2);
  }
  return out;
}

TEST(HarnessProperty, LeakageDetectedExactlyWhenVolumesShared) {
  std::mt19937_64 rng(17);
  const auto samples = leakage_samples(40);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<const TripletSample*> train, test;
    for (int v = 0; v < 20; ++v) {
      const int r = static_cast<int>(rng() % 3);
      auto& dst = r == 0 ? train : test;
      dst.push_back(&samples[2 * v]);
      dst.push_back(&samples[2 * v + 1]);
    }
    const bool leak = rng() % 2 == 0 && !train.empty() && !test.empty();
    if (leak) test.push_back(train[rng() % train.size()]);
    if (leak)
      ASSERT_THROW(check_no_leakage(train, test), InvalidSpec);
    else
      ASSERT_NO_THROW(check_no_leakage(train, test));
  }
}

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::uint32_t be32(const std::uint8_t* p) {
  return (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) | (std::uint32_t{p[2]} << 8) | p[3];
}

TEST(Harness, PngRoundTrip) {
  const auto dir = testing::scratch_dir("png");
  const int w = 7, h = 5;
  std::vector<std::uint8_t> rgb(w * h * 3);
  for (std::size_t i = 0; i < rgb.size(); ++i) rgb[i] = static_cast<std::uint8_t>(i * 37);
  write_png((dir / "a.png").string(), w, h, rgb);
  const auto bytes = read_bytes(dir / "a.png");
  const std::uint8_t sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  ASSERT_GT(bytes.size(), 8u);
  ASSERT_TRUE(std::equal(sig, sig + 8, bytes.begin()));
  std::size_t pos = 8;
  std::vector<std::uint8_t> idat;
  std::vector<std::string> types;
  while (pos + 12 <= bytes.size()) {
    const std::uint32_t len = be32(&bytes[pos]);
    const std::string type(bytes.begin() + pos + 4, bytes.begin() + pos + 8);
    types.push_back(type);
    const std::uint32_t crc = be32(&bytes[pos + 8 + len]);
    ASSERT_EQ(crc, crc32(0L, &bytes[pos + 4], len + 4)) << type;
    if (type == "IHDR") {
      EXPECT_EQ(be32(&bytes[pos + 8]), static_cast<std::uint32_t>(w));
      EXPECT_EQ(be32(&bytes[pos + 12]), static_cast<std::uint32_t>(h));
    }
    if (type == "IDAT") idat.insert(idat.end(), bytes.begin() + pos + 8, bytes.begin() + pos + 8 + len);
    pos += 12 + len;
  }
  EXPECT_EQ(types, (std::vector<std::string>{"IHDR", "IDAT", "IEND"}));
  std::vector<std::uint8_t> raw(h * (w * 3 + 1));
  uLongf rlen = raw.size();
  ASSERT_EQ(uncompress(raw.data(), &rlen, idat.data(), idat.size()), Z_OK);
  ASSERT_EQ(rlen, raw.size());
  for (int y = 0; y < h; ++y) {
    EXPECT_EQ(raw[y * (w * 3 + 1)], 0);
    for (int i = 0; i < w * 3; ++i) ASSERT_EQ(raw[y * (w * 3 + 1) + 1 + i], rgb[y * w * 3 + i]);
  }
  EXPECT_THROW(write_png((dir / "b.png").string(), 2, 2, rgb), ShapeMismatch);
}

TEST(Harness, RenderRocDrawsCurve) {
  const std::vector<std::vector<RocPoint>> curves{{{0, 0}, {0, 1}, {1, 1}}};
  const auto rgb = render_roc(curves, 100);
  ASSERT_EQ(rgb.size(), 100u * 100 * 3);
  std::size_t colored = 0;
  for (std::size_t i = 0; i < rgb.size(); i += 3)
    colored += rgb[i] == 31 && rgb[i + 1] == 119 && rgb[i + 2] == 180;
  EXPECT_GT(colored, 100u);
}

PipelineConfig small_config() {
  PipelineConfig c;
  c.architecture.input_shape = {3, 16, 16};
  c.architecture.conv_channels = {2, 4, 4};
  c.architecture.pools = {{1, 2, 2}, {1, 2, 2}, {1, 2, 2}};
  c.architecture.fc_sizes = {8, 4, 1};
  c.train.learning_rate = 0.05;
  c.train.momentum = 0.9;
  c.train.epochs = 3;
  c.train.batch_size = 4;
  c.algorithm1.unet.input_shape = {3, 16, 16};
  c.algorithm1.unet.channels = {2, 4};
  c.algorithm1.unet.convs_per_block = 1;
  c.algorithm1.unet_train.epochs = 2;
  c.algorithm1.explainer.num_perturbations = 20;
  c.algorithm1.explainer.slic.n_segments = 9;
  c.algorithm1.max_corpus = 4;
  return c;
}

dataprep::TaskDataset small_dataset() {
  std::vector<dataprep::VolumeStack> volumes;
  for (int v = 0; v < 6; ++v) {
    dataprep::PhantomOptions o;
    o.size = 32;
    volumes.push_back(dataprep::generate_phantom(100 + v, 8 + v % 3, o));
  }
  return dataprep::make_folds(dataprep::task_samples(volumes, dataprep::Task::Basal, 16), 3, 9);
}

TEST(Harness, CrossValidationFoldsAreDisjointAndReported) {
  const auto ds = small_dataset();
  const auto cfg = small_config();
  int seen = 0;
  CvOptions opt;
  opt.on_fold = [&](const FoldArtifacts& a) {
    ++seen;
    EXPECT_NE(a.baseline, nullptr);
    EXPECT_EQ(a.train.size() + a.test.size(), ds.samples.size());
    EXPECT_NO_THROW(check_no_leakage(a.train, a.test));
  };
  const auto cv = crossvalidate(ds, cfg, CvMode::Baseline, opt);
  EXPECT_EQ(seen, 3);
  ASSERT_EQ(cv.reports.size(), 1u);
  ASSERT_EQ(cv.reports[0].folds.size(), 3u);
  std::size_t total = 0;
  for (const auto& f : cv.reports[0].folds) total += f.counts.total();
  EXPECT_EQ(total, ds.samples.size());
  EXPECT_THROW(crossvalidate(ds, cfg, CvMode::Baseline, {{7}, {}, {}}), InvalidConfig);
}

TEST(Harness, CascadeReportIsDeterministic) {
  const auto ds = small_dataset();
  const auto cfg = small_config();
  CvOptions opt;
  opt.folds = {0};
  const auto dir = testing::scratch_dir("report");
  std::vector<std::string> files{"report.json", "tables.csv", "roc_fold1.png"};
  std::vector<std::vector<std::uint8_t>> first;
  for (int run = 0; run < 2; ++run) {
    const auto cv = crossvalidate(ds, cfg, CvMode::Cascade, opt);
    ASSERT_EQ(cv.reports.size(), 3u);
    EXPECT_EQ(cv.reports[1].variant, "cascade-label-free");
    EXPECT_FALSE(cv.records[0].unet_fingerprint.empty());
    const std::vector<CrossValidation> runs{cv};
    const auto out = dir / std::to_string(run);
    emit_report(out.string(), runs, {{"id", "test"}});
    for (std::size_t i = 0; i < files.size(); ++i) {
      const auto bytes = read_bytes(out / files[i]);
      ASSERT_FALSE(bytes.empty()) << files[i];
      if (run == 0)
        first.push_back(bytes);
      else
        EXPECT_EQ(bytes, first[i]) << files[i];
    }
  }
  std::ifstream csv(dir / "0" / "tables.csv");
  std::stringstream ss;
  ss << csv.rdbuf();
  EXPECT_NE(ss.str().find("table1-baseline,Fold #1"), std::string::npos);
  EXPECT_NE(ss.str().find("Avg±SD"), std::string::npos);
  EXPECT_NE(ss.str().find("table5-training-set,basal"), std::string::npos);
  const auto j = nlohmann::ordered_json::parse(read_bytes(dir / "0" / "report.json"));
  EXPECT_EQ(j["evaluations"][0]["mode"], "cascade");
  EXPECT_TRUE(j.contains("reference"));
}

TEST(Harness, ModeNames) {
  EXPECT_EQ(parse_cv_mode("cascade"), CvMode::Cascade);
  EXPECT_EQ(to_string(CvMode::Baseline), "baseline");
  EXPECT_THROW(parse_cv_mode("other"), InvalidConfig);
}

}  // namespace
}  // namespace cmrqc::harness
