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


#include "cmrqc/harness.hpp"

#include <zlib.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "cmrqc/common.hpp"

namespace cmrqc::harness {

namespace fs = std::filesystem;
using dataprep::Label;
using dataprep::TripletSample;

ConfusionCounts confusion(std::span<const Label> labels, std::span<const Label> predictions) {
  if (labels.size() != predictions.size())
    throw LengthMismatch("confusion: " + std::to_string(labels.size()) + " labels vs " +
                         std::to_string(predictions.size()) + " predictions");
  ConfusionCounts c;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool y = labels[i] == Label::Positive, p = predictions[i] == Label::Positive;
    if (y && p) ++c.tp;
    else if (!y && p) ++c.fp;
    else if (y && !p) ++c.fn;
    else ++c.tn;
  }
  return c;
}

nlohmann::ordered_json Metrics::to_json() const {
  nlohmann::ordered_json j{{"accuracy", accuracy}, {"precision", precision}, {"recall", recall},
                           {"f_measure", f_measure}, {"auc", auc}};
  nlohmann::ordered_json flags = nlohmann::ordered_json::array();
  if (accuracy_undefined) flags.push_back("accuracy");
  if (precision_undefined) flags.push_back("precision");
  if (recall_undefined) flags.push_back("recall");
  if (f_undefined) flags.push_back("f_measure");
  if (auc_undefined) flags.push_back("auc");
  j["undefined"] = flags;
  return j;
}

Metrics metrics(const ConfusionCounts& c) {
  Metrics m;
  const auto ratio = [](std::size_t num, std::size_t den, bool& undefined) {
    undefined = den == 0;
    return undefined ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
  };
  m.accuracy = ratio(c.tp + c.tn, c.total(), m.accuracy_undefined);
  m.precision = ratio(c.tp, c.tp + c.fp, m.precision_undefined);
  m.recall = ratio(c.tp, c.tp + c.fn, m.recall_undefined);
  m.f_undefined = m.precision + m.recall <= 0.0;
  m.f_measure = m.f_undefined ? 0.0 : 2 * m.precision * m.recall / (m.precision + m.recall);
  m.auc_undefined = true;
  return m;
}

Metrics metrics(const ConfusionCounts& c, std::span<const Label> labels,
                std::span<const double> scores) {
  Metrics m = metrics(c);
  const auto a = auc(labels, scores);
  m.auc_undefined = !a.has_value();
  m.auc = a.value_or(0.0);
  return m;
}

std::vector<RocPoint> roc_curve(std::span<const Label> labels, std::span<const double> scores) {
  if (labels.size() != scores.size()) throw LengthMismatch("roc: labels and scores differ in length");
  std::size_t pos = 0;
  for (auto l : labels) pos += l == Label::Positive;
  const std::size_t neg = labels.size() - pos;
  std::vector<std::size_t> order(labels.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::vector<RocPoint> roc{{0.0, 0.0}};
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double s = scores[order[i]];
    for (; i < order.size() && scores[order[i]] == s; ++i)
      (labels[order[i]] == Label::Positive ? tp : fp)++;
    roc.push_back({neg ? static_cast<double>(fp) / static_cast<double>(neg) : 0.0,
                   pos ? static_cast<double>(tp) / static_cast<double>(pos) : 0.0});
  }
  if (roc.back().fpr != 1.0 || roc.back().tpr != 1.0) roc.push_back({1.0, 1.0});
  return roc;
}

std::optional<double> auc(std::span<const Label> labels, std::span<const double> scores) {
  const auto roc = roc_curve(labels, scores);
  std::size_t pos = 0;
  for (auto l : labels) pos += l == Label::Positive;
  if (pos == 0 || pos == labels.size()) return std::nullopt;
  double area = 0.0;
  for (std::size_t i = 1; i < roc.size(); ++i)
    area += (roc[i].fpr - roc[i - 1].fpr) * (roc[i].tpr + roc[i - 1].tpr) / 2.0;
  return area;
}

Summary summarize(std::span<const double> values) {
  Summary s;
  if (values.empty()) return s;
  const double n = static_cast<double>(values.size());
  for (double v : values) s.mean += v;
  s.mean /= n;
  double ss = 0;
  for (double v : values) ss += (v - s.mean) * (v - s.mean);
  s.sd_population = std::sqrt(ss / n);
  s.sd_sample = values.size() > 1 ? std::sqrt(ss / (n - 1)) : 0.0;
  return s;
}

namespace {

const std::array<std::pair<const char*, double Metrics::*>, 5> kMetricFields{{
    {"accuracy", &Metrics::accuracy},
    {"precision", &Metrics::precision},
    {"recall", &Metrics::recall},
    {"f_measure", &Metrics::f_measure},
    {"auc", &Metrics::auc},
}};

nlohmann::ordered_json counts_json(const ConfusionCounts& c) {
  return {{"tp", c.tp}, {"fp", c.fp}, {"fn", c.fn}, {"tn", c.tn}};
}

}  // namespace

std::map<std::string, Summary> MetricsReport::summary() const {
  std::map<std::string, Summary> out;
  for (const auto& [name, field] : kMetricFields) {
    std::vector<double> v;
    for (const auto& f : folds) v.push_back(f.metrics.*field);
    out[name] = summarize(v);
  }
  return out;
}

nlohmann::ordered_json MetricsReport::to_json() const {
  nlohmann::ordered_json j{{"task", task}, {"variant", variant}};
  j["folds"] = nlohmann::ordered_json::array();
  for (const auto& f : folds) {
    nlohmann::ordered_json roc = nlohmann::ordered_json::array();
    for (const auto& p : f.roc) roc.push_back({p.fpr, p.tpr});
    j["folds"].push_back({{"fold", f.fold},
                          {"counts", counts_json(f.counts)},
                          {"metrics", f.metrics.to_json()},
                          {"roc", roc}});
  }
  const auto s = summary();
  nlohmann::ordered_json sj;
  for (const auto& [name, field] : kMetricFields) {
    const auto& v = s.at(name);
    sj[name] = {{"mean", v.mean}, {"sd_population", v.sd_population}, {"sd_sample", v.sd_sample}};
  }
  j["summary"] = sj;
  return j;
}

nlohmann::ordered_json PipelineConfig::to_json() const {
  return {{"architecture", architecture.to_json()},
          {"train", train.to_json()},
          {"algorithm1", algorithm1.to_json()}};
}

PipelineConfig PipelineConfig::from_json(const nlohmann::ordered_json& j) {
  PipelineConfig c;
  if (j.contains("architecture"))
    c.architecture = baseline::BaselineArchitectureSpec::from_json(j["architecture"]);
  if (j.contains("train")) c.train = baseline::TrainConfig::from_json(j["train"]);
  if (j.contains("algorithm1")) c.algorithm1 = cascade::Algorithm1Config::from_json(j["algorithm1"]);
  return c;
}

std::string to_string(CvMode m) { return m == CvMode::Baseline ? "baseline" : "cascade"; }

CvMode parse_cv_mode(const std::string& s) {
  if (s == "baseline") return CvMode::Baseline;
  if (s == "cascade") return CvMode::Cascade;
  throw InvalidConfig("unknown evaluation mode '" + s + "' (expected baseline or cascade)");
}

nlohmann::ordered_json FoldRecord::to_json() const {
  nlohmann::ordered_json j{{"fold", fold},
                           {"train_size", train_size},
                           {"test_size", test_size},
                           {"baseline_fingerprint", baseline_fingerprint}};
  if (!unet_fingerprint.empty()) {
    j["unet_fingerprint"] = unet_fingerprint;
    j["corpus_size"] = corpus_size;
    j["unet_val_dice"] = std::isfinite(unet_val_dice) ? nlohmann::ordered_json(unet_val_dice)
                                                      : nlohmann::ordered_json("n/a");
    j["test_recovery"] = test_recovery.to_json();
    j["training_recovery"] = training_recovery.to_json();
    j["training_after"] = counts_json(training_after);
  }
  return j;
}

void check_no_leakage(std::span<const TripletSample* const> train,
                      std::span<const TripletSample* const> test) {
  std::set<std::string> ids, volumes;
  for (const auto* s : train) {
    ids.insert(s->id);
    volumes.insert(s->source_volume_id);
  }
  for (const auto* s : test) {
    if (ids.count(s->id)) throw InvalidSpec("fold leakage: sample " + s->id + " is in both splits");
    if (volumes.count(s->source_volume_id))
      throw InvalidSpec("fold leakage: volume " + s->source_volume_id + " is in both splits");
  }
}

FoldMetrics score_fold(int fold, std::span<const Label> labels, std::span<const Label> preds,
                       std::span<const double> scores) {
  FoldMetrics f;
  f.fold = fold;
  f.counts = confusion(labels, preds);
  f.metrics = metrics(f.counts, labels, scores);
  f.roc = roc_curve(labels, scores);
  return f;
}

FoldMetrics score_decisions(int fold, std::span<const cascade::CascadeDecision> d, bool initial) {
  std::vector<Label> labels, preds;
  std::vector<double> scores;
  for (const auto& x : d) {
    labels.push_back(x.true_label);
    preds.push_back(initial ? x.initial_label : x.final_label);
    scores.push_back(initial ? x.initial_probability : x.final_probability);
  }
  return score_fold(fold, labels, preds, scores);
}

CrossValidation crossvalidate(const dataprep::TaskDataset& dataset, const PipelineConfig& cfg,
                              CvMode mode, const CvOptions& options) {
  const std::string task = dataprep::to_string(dataset.task);
  CrossValidation cv;
  cv.task = task;
  cv.mode = mode;
  cv.reports.push_back({task, "baseline", {}});
  if (mode == CvMode::Cascade) {
    cv.reports.push_back({task, "cascade-label-free", {}});
    cv.reports.push_back({task, "cascade-paper", {}});
  }
  std::vector<int> folds = options.folds;
  if (folds.empty())
    for (int f = 0; f < dataset.k; ++f) folds.push_back(f);
  auto log = [&](const std::string& m) {
    if (options.log) options.log(m);
  };

  for (int fold : folds) {
    if (fold < 0 || fold >= dataset.k)
      throw InvalidConfig("fold " + std::to_string(fold) + " outside [0," + std::to_string(dataset.k) + ")");
    std::vector<const TripletSample*> train, test;
    for (std::size_t i = 0; i < dataset.samples.size(); ++i)
      (dataset.fold_of[i] == fold ? test : train).push_back(&dataset.samples[i]);
    check_no_leakage(train, test);
    const std::string tag = task + "-fold" + std::to_string(fold);

    baseline::TrainConfig tc = cfg.train;
    tc.seed = derive_seed(cfg.train.seed, tag);
    auto model = baseline::BaselineModel::build(cfg.architecture, derive_seed(tc.seed, "init"));
    log(tag + ": training baseline on " + std::to_string(train.size()) + " stacks");
    const auto trained = baseline::train_samples(model, dataset.task, train, {}, tc);

    std::vector<const Stack*> stacks;
    std::vector<Label> labels;
    for (const auto* s : test) {
      stacks.push_back(&s->stack);
      labels.push_back(s->label);
    }
    const auto probs = model.predict_batch(stacks);
    std::vector<Label> preds;
    for (double p : probs) preds.push_back(baseline::classify(p));
    cv.reports[0].folds.push_back(score_fold(fold, labels, preds, probs));

    FoldRecord rec;
    rec.fold = fold;
    rec.train_size = train.size();
    rec.test_size = test.size();
    rec.baseline_fingerprint = trained.checkpoint.fingerprint();
    log(tag + ": baseline accuracy " + std::to_string(cv.reports[0].folds.back().metrics.accuracy));

    std::optional<cascade::Algorithm1Result> alg1;
    std::vector<cascade::CascadeDecision> decisions;
    if (mode == CvMode::Cascade) {
      cascade::Algorithm1Config ac = cfg.algorithm1;
      ac.explainer.seed = derive_seed(cfg.algorithm1.explainer.seed, tag);
      ac.unet_train.seed = derive_seed(cfg.algorithm1.unet_train.seed, tag);
      log(tag + ": explaining true positives and training the segmenter");
      alg1 = cascade::run_algorithm1(train, model, ac);
      auto unet = segmenter::UNet::from_checkpoint(alg1->unet.checkpoint);
      decisions = cascade::improve_predictions(test, model, unet, cascade::Mode::LabelFree);
      const auto paper = cascade::improve_predictions(test, model, unet, cascade::Mode::PaperReplication);
      cv.reports[1].folds.push_back(score_decisions(fold, decisions));
      cv.reports[2].folds.push_back(score_decisions(fold, paper));
      const auto on_train =
          cascade::improve_predictions(train, model, unet, cascade::Mode::PaperReplication);
      rec.unet_fingerprint = alg1->unet.checkpoint.fingerprint();
      rec.unet_val_dice = alg1->unet.val_dice;
      rec.corpus_size = alg1->corpus.entries.size();
      rec.test_recovery = cascade::improve_training_set_report(decisions);
      rec.training_recovery = cascade::improve_training_set_report(on_train);
      std::vector<Label> tl, tp;
      for (const auto& d : on_train) {
        tl.push_back(d.true_label);
        tp.push_back(d.final_label);
      }
      rec.training_after = confusion(tl, tp);
      log(tag + ": segmenter val dice " + std::to_string(rec.unet_val_dice) + ", cascade accuracy " +
          std::to_string(cv.reports[1].folds.back().metrics.accuracy));
    }
    cv.records.push_back(rec);
    if (options.on_fold) {
      FoldArtifacts a;
      a.fold = fold;
      a.task = dataset.task;
      a.train = train;
      a.test = test;
      a.baseline = &trained;
      a.algorithm1 = alg1 ? &*alg1 : nullptr;
      a.decisions = decisions;
      options.on_fold(a);
    }
  }
  return cv;
}

// ---------------------------------------------------------------------------

nlohmann::ordered_json reference_results() {
  using J = nlohmann::ordered_json;
  auto row = [](double acc, double accsd, double pr, double prsd, double re, double resd, double f,
                double fsd, double a, double asd) {
    return J{{"accuracy", {acc, accsd}}, {"precision", {pr, prsd}}, {"recall", {re, resd}},
             {"f_measure", {f, fsd}},    {"auc", {a, asd}}};
  };
  return J{
      {"source", "published results on UK Biobank cine CMR; not reproducible here"},
      {"units", "percent, mean and SD over 5 folds"},
      {"baseline",
       {{"apex", row(94.51, 0.95, 94.57, 1.78, 94.49, 2.15, 94.50, 0.94, 94.55, 0.93)},
        {"basal", row(96.25, 0.51, 95.99, 0.69, 96.53, 1.46, 96.25, 0.54, 96.24, 0.51)}}},
      {"cascade",
       {{"apex", row(95.72, 1.03, 95.63, 1.14, 95.97, 2.12, 95.78, 1.04, 95.72, 1.02)},
        {"basal", row(96.88, 0.38, 96.03, 0.68, 97.80, 1.19, 96.90, 0.40, 96.89, 0.41)}}},
      {"segmenter",
       {{"apex", {{"dice", 66.10}, {"jaccard", 50.17}}},
        {"basal", {{"dice", 83.20}, {"jaccard", 71.02}}}}},
      {"training_set_after_cascade",
       {{"apex", {{"accuracy", 97.22}, {"precision", 96.00}, {"recall", 98.55},
                  {"misclassified_before", 473}, {"misclassified_after", 303}}},
        {"basal", {{"accuracy", 97.68}, {"precision", 96.93}, {"recall", 98.48},
                   {"misclassified_before", 381}, {"misclassified_after", 253}}}}}};
}

namespace {

std::string pct(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", 100.0 * v);
  return buf;
}

std::string pct_sd(const Summary& s) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.2f±%.2f", 100.0 * s.mean, 100.0 * s.sd_sample);
  return buf;
}

const MetricsReport* find_report(std::span<const CrossValidation> runs, const std::string& task,
                                 const std::string& variant) {
  for (const auto& r : runs)
    for (const auto& rep : r.reports)
      if (rep.task == task && rep.variant == variant) return &rep;
  return nullptr;
}

void write_tables(std::ostream& out, std::span<const CrossValidation> runs) {
  const std::array<std::string, 2> tasks{"apex", "basal"};
  out << "table,row";
  for (const auto& [name, field] : kMetricFields)
    for (const auto& t : tasks) out << ',' << name << '_' << t;
  out << '\n';

  const std::array<std::pair<std::string, std::string>, 3> variants{{
      {"baseline", "table1-baseline"},
      {"cascade-label-free", "table3-cascade-label-free"},
      {"cascade-paper", "table3-cascade-paper"},
  }};
  for (const auto& [variant, table] : variants) {
    const MetricsReport* per_task[2] = {find_report(runs, "apex", variant),
                                        find_report(runs, "basal", variant)};
    if (!per_task[0] && !per_task[1]) continue;
    std::set<int> folds;
    for (const auto* r : per_task)
      if (r)
        for (const auto& f : r->folds) folds.insert(f.fold);
    for (int fold : folds) {
      out << table << ",Fold #" << fold + 1;
      for (const auto& [name, field] : kMetricFields)
        for (const auto* r : per_task) {
          out << ',';
          if (!r) continue;
          for (const auto& f : r->folds)
            if (f.fold == fold) out << pct(f.metrics.*field);
        }
      out << '\n';
    }
    out << table << ",Avg±SD";
    for (const auto& [name, field] : kMetricFields)
      for (const auto* r : per_task) {
        out << ',';
        if (r) out << pct_sd(r->summary().at(name));
      }
    out << '\n';
  }

  const auto ref = reference_results();
  for (const auto& [key, table] : {std::pair<std::string, std::string>{"baseline", "table1-reference"},
                                   {"cascade", "table3-reference"}}) {
    out << table << ",Avg±SD (published)";
    for (const auto& [name, field] : kMetricFields)
      for (const auto& t : tasks) {
        const auto& v = ref[key][t][name];
        char buf[48];
        std::snprintf(buf, sizeof buf, "%.2f±%.2f", v[0].get<double>(), v[1].get<double>());
        out << ',' << buf;
      }
    out << '\n';
  }

  // Training folds after Algorithm 2 in paper mode, averaged over folds.
  bool any = false;
  for (const auto& r : runs)
    any = any || std::any_of(r.records.begin(), r.records.end(),
                             [](const FoldRecord& f) { return !f.unet_fingerprint.empty(); });
  if (!any) return;
  out << "\ntable,row,accuracy,precision,recall,misclassified_before,misclassified_after,"
         "recovery_fraction\n";
  for (const auto& t : tasks)
    for (const auto& r : runs) {
      if (r.task != t) continue;
      std::vector<double> acc, pr, re;
      std::size_t before = 0, after = 0, recovered = 0;
      for (const auto& f : r.records) {
        if (f.unet_fingerprint.empty()) continue;
        const Metrics m = metrics(f.training_after);
        acc.push_back(m.accuracy);
        pr.push_back(m.precision);
        re.push_back(m.recall);
        before += f.training_recovery.misclassified_before;
        after += f.training_recovery.misclassified_after;
        recovered += f.training_recovery.recovered;
      }
      if (acc.empty()) continue;
      out << "table5-training-set," << t << ',' << pct(summarize(acc).mean) << ','
          << pct(summarize(pr).mean) << ',' << pct(summarize(re).mean) << ',' << before << ','
          << after << ',';
      if (before > 0)
        out << pct(static_cast<double>(recovered) / static_cast<double>(before));
      else
        out << "n/a";
      out << '\n';
    }
  for (const auto& t : tasks) {
    const auto& v = ref["training_set_after_cascade"][t];
    out << "table5-reference," << t << " (published)," << v["accuracy"].get<double>() << ','
        << v["precision"].get<double>() << ',' << v["recall"].get<double>() << ','
        << v["misclassified_before"].get<int>() << ',' << v["misclassified_after"].get<int>() << ',';
    char buf[16];
    const double b = v["misclassified_before"].get<int>(), a = v["misclassified_after"].get<int>();
    std::snprintf(buf, sizeof buf, "%.2f", 100.0 * (b - a) / b);
    out << buf << '\n';
  }
}

}  // namespace

void emit_report(const std::string& dir, std::span<const CrossValidation> runs,
                 const nlohmann::ordered_json& run_info) {
  if (runs.empty()) throw InvalidConfig("emit_report needs at least one evaluation");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IOFailure("cannot create " + dir + ": " + ec.message());

  nlohmann::ordered_json report;
  if (!run_info.is_null()) report["run"] = run_info;
  report["evaluations"] = nlohmann::ordered_json::array();
  for (const auto& r : runs) {
    nlohmann::ordered_json e{{"task", r.task}, {"mode", to_string(r.mode)}};
    e["reports"] = nlohmann::ordered_json::array();
    for (const auto& rep : r.reports) e["reports"].push_back(rep.to_json());
    e["folds"] = nlohmann::ordered_json::array();
    for (const auto& f : r.records) e["folds"].push_back(f.to_json());
    report["evaluations"].push_back(e);
  }
  report["reference"] = reference_results();
  {
    std::ofstream out(fs::path(dir) / "report.json");
    out << report.dump(2) << '\n';
    if (!out) throw IOFailure("cannot write report.json in " + dir);
  }
  {
    std::ofstream out(fs::path(dir) / "tables.csv");
    write_tables(out, runs);
    if (!out) throw IOFailure("cannot write tables.csv in " + dir);
  }
  std::set<int> folds;
  for (const auto& r : runs)
    for (const auto& rep : r.reports)
      for (const auto& f : rep.folds) folds.insert(f.fold);
  constexpr int kSize = 320;
  for (int fold : folds) {
    std::vector<std::vector<RocPoint>> curves;
    for (const auto& r : runs)
      for (const auto& rep : r.reports)
        for (const auto& f : rep.folds)
          if (f.fold == fold) curves.push_back(f.roc);
    write_png((fs::path(dir) / ("roc_fold" + std::to_string(fold + 1) + ".png")).string(), kSize,
              kSize, render_roc(curves, kSize));
  }
}

// ---------------------------------------------------------------------------

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(v >> s));
}

void put_chunk(std::vector<std::uint8_t>& out, const char type[4], std::span<const std::uint8_t> data) {
  put_u32(out, static_cast<std::uint32_t>(data.size()));
  const std::size_t start = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), data.begin(), data.end());
  const uLong crc = crc32(0L, out.data() + start, static_cast<uInt>(out.size() - start));
  put_u32(out, static_cast<std::uint32_t>(crc));
}

void plot(std::vector<std::uint8_t>& rgb, int size, int x, int y, std::array<std::uint8_t, 3> c) {
  if (x < 0 || y < 0 || x >= size || y >= size) return;
  const std::size_t i = (static_cast<std::size_t>(y) * size + x) * 3;
  rgb[i] = c[0];
  rgb[i + 1] = c[1];
  rgb[i + 2] = c[2];
}

void line(std::vector<std::uint8_t>& rgb, int size, int x0, int y0, int x1, int y1,
          std::array<std::uint8_t, 3> c, int width = 1) {
  const int dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
  const int sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
  int err = dx + dy;
  for (;;) {
    for (int a = 0; a < width; ++a)
      for (int b = 0; b < width; ++b) plot(rgb, size, x0 + a, y0 + b, c);
    if (x0 == x1 && y0 == y1) break;
    const int e2 = 2 * err;
    if (e2 >= dy) {
      err += dy;
      x0 += sx;
    }
    if (e2 <= dx) {
      err += dx;
      y0 += sy;
    }
  }
}

}  // namespace

void write_png(const std::string& path, int width, int height, std::span<const std::uint8_t> rgb) {
  if (width < 1 || height < 1 || rgb.size() != static_cast<std::size_t>(width) * height * 3)
    throw ShapeMismatch("png pixel buffer does not match its dimensions");
  std::vector<std::uint8_t> raw;
  raw.reserve(static_cast<std::size_t>(height) * (width * 3 + 1));
  for (int y = 0; y < height; ++y) {
    raw.push_back(0);  // filter: none
    const auto* row = rgb.data() + static_cast<std::size_t>(y) * width * 3;
    raw.insert(raw.end(), row, row + width * 3);
  }
  uLongf zlen = compressBound(static_cast<uLong>(raw.size()));
  std::vector<std::uint8_t> z(zlen);
  if (compress2(z.data(), &zlen, raw.data(), static_cast<uLong>(raw.size()), 9) != Z_OK)
    throw IOFailure("png compression failed for " + path);
  z.resize(zlen);

  std::vector<std::uint8_t> png{0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  std::vector<std::uint8_t> ihdr;
  put_u32(ihdr, static_cast<std::uint32_t>(width));
  put_u32(ihdr, static_cast<std::uint32_t>(height));
  ihdr.insert(ihdr.end(), {8, 2, 0, 0, 0});  // 8-bit RGB, no interlace
  put_chunk(png, "IHDR", ihdr);
  put_chunk(png, "IDAT", z);
  put_chunk(png, "IEND", {});
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(png.data()), static_cast<std::streamsize>(png.size()));
  if (!out) throw IOFailure("cannot write " + path);
}

std::vector<std::uint8_t> render_roc(std::span<const std::vector<RocPoint>> curves, int size) {
  static constexpr std::array<std::array<std::uint8_t, 3>, 6> kPalette{{
      {31, 119, 180}, {255, 127, 14}, {44, 160, 44}, {214, 39, 40}, {148, 103, 189}, {140, 86, 75}}};
  std::vector<std::uint8_t> rgb(static_cast<std::size_t>(size) * size * 3, 255);
  const int m = size / 10;
  const int span = size - 2 * m;
  auto px = [&](double v) { return m + static_cast<int>(std::lround(v * span)); };
  auto py = [&](double v) { return size - 1 - m - static_cast<int>(std::lround(v * span)); };
  line(rgb, size, px(0), py(0), px(1), py(1), {200, 200, 200});
  line(rgb, size, px(0), py(0), px(1), py(0), {0, 0, 0});
  line(rgb, size, px(0), py(0), px(0), py(1), {0, 0, 0});
  line(rgb, size, px(0), py(1), px(1), py(1), {160, 160, 160});
  line(rgb, size, px(1), py(0), px(1), py(1), {160, 160, 160});
  for (int t = 1; t < 10; ++t) {
    line(rgb, size, px(t / 10.0), py(0), px(t / 10.0), py(0) + 4, {0, 0, 0});
    line(rgb, size, px(0) - 4, py(t / 10.0), px(0), py(t / 10.0), {0, 0, 0});
  }
  for (std::size_t c = 0; c < curves.size(); ++c)
    for (std::size_t i = 1; i < curves[c].size(); ++i)
      line(rgb, size, px(curves[c][i - 1].fpr), py(curves[c][i - 1].tpr), px(curves[c][i].fpr),
           py(curves[c][i].tpr), kPalette[c % kPalette.size()], 2);
  return rgb;
}

}  // namespace cmrqc::harness
