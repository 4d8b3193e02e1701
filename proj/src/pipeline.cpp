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


#include "cmrqc/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>

#include "cmrqc/baseline.hpp"
#include "cmrqc/checkpoint.hpp"
#include "cmrqc/explainer.hpp"
#include "cmrqc/segmenter.hpp"
#include "cmrqc/volume_io.hpp"

namespace cmrqc::pipeline {

namespace fs = std::filesystem;
using dataprep::Task;
using dataprep::TripletSample;
using json = nlohmann::ordered_json;

nlohmann::ordered_json DataConfig::to_json() const {
  return {{"source", source},
          {"phantom_count", phantom_count},
          {"phantom_size", phantom_size},
          {"distractors", distractors},
          {"noise_sigma", noise_sigma},
          {"landmark_extension", landmark_extension},
          {"input_size", input_size},
          {"folds", folds}};
}

DataConfig DataConfig::from_json(const nlohmann::ordered_json& j) {
  DataConfig d;
  d.source = j.value("source", d.source);
  d.phantom_count = j.value("phantom_count", d.phantom_count);
  d.phantom_size = j.value("phantom_size", d.phantom_size);
  d.distractors = j.value("distractors", d.distractors);
  d.noise_sigma = j.value("noise_sigma", d.noise_sigma);
  d.landmark_extension = j.value("landmark_extension", d.landmark_extension);
  d.input_size = j.value("input_size", d.input_size);
  d.folds = j.value("folds", d.folds);
  return d;
}

void RunConfig::validate() const {
  if (run_id.empty()) throw InvalidConfig("run_id is empty");
  if (data.folds < 2) throw InvalidConfig("folds must be at least 2");
  if (holdout_fold < 0 || holdout_fold >= data.folds)
    throw InvalidConfig("holdout_fold outside [0, folds)");
  for (int f : cv_folds)
    if (f < 0 || f >= data.folds) throw InvalidConfig("crossvalidation fold outside [0, folds)");
  if (data.source.empty() && (data.phantom_count < 1 || data.phantom_count > 99999))
    throw InvalidConfig("phantom_count must be in [1, 99999]");
  if (data.phantom_size < 16) throw InvalidConfig("phantom_size must be at least 16");
  if (data.input_size < 8) throw InvalidConfig("input_size must be at least 8");
  if (data.distractors < 0) throw InvalidConfig("distractors must be nonnegative");
  if (data.landmark_extension < 0 || data.landmark_extension > 3)
    throw InvalidConfig("landmark extension must lie in [0, 3]");
  const auto r = resolved();
  r.pipeline.architecture.validate();
  r.pipeline.train.validate();
  r.pipeline.algorithm1.explainer.validate();
  r.pipeline.algorithm1.unet.validate();
}

RunConfig RunConfig::resolved() const {
  RunConfig r = *this;
  const int s = data.input_size;
  r.pipeline.architecture.input_shape = {kStackDepth, s, s};
  r.pipeline.algorithm1.unet.input_shape = {kStackDepth, s, s};
  r.pipeline.train.seed = derive_seed(seed, "baseline");
  r.pipeline.algorithm1.explainer.seed = derive_seed(seed, "explainer");
  r.pipeline.algorithm1.unet_train.seed = derive_seed(seed, "unet");
  return r;
}

nlohmann::ordered_json RunConfig::to_json() const {
  return {{"run_id", run_id},
          {"task", dataprep::to_string(task)},
          {"seed", seed},
          {"data", data.to_json()},
          {"pipeline", pipeline.to_json()},
          {"cascade_mode", cascade::to_string(cascade_mode)},
          {"holdout_fold", holdout_fold},
          {"cv_folds", cv_folds}};
}

RunConfig RunConfig::from_json(const nlohmann::ordered_json& j) {
  RunConfig c;
  try {
    c.run_id = j.value("run_id", c.run_id);
    if (j.contains("task")) c.task = dataprep::parse_task(j["task"].get<std::string>());
    c.seed = j.value("seed", c.seed);
    if (j.contains("data")) c.data = DataConfig::from_json(j["data"]);
    if (j.contains("pipeline")) c.pipeline = harness::PipelineConfig::from_json(j["pipeline"]);
    if (j.contains("cascade_mode"))
      c.cascade_mode = cascade::parse_mode(j["cascade_mode"].get<std::string>());
    c.holdout_fold = j.value("holdout_fold", c.holdout_fold);
    if (j.contains("cv_folds")) c.cv_folds = j["cv_folds"].get<std::vector<int>>();
  } catch (const nlohmann::json::exception& e) {
    throw InvalidConfig(std::string("malformed run config: ") + e.what());
  }
  return c;
}

RunConfig desk_config() {
  RunConfig c;
  c.run_id = "desk";
  c.data.phantom_size = 64;
  c.data.input_size = 64;
  auto& a = c.pipeline.architecture;
  a.conv_channels = {4, 8, 8};
  a.pools = {{1, 2, 2}, {1, 2, 2}, {1, 2, 2}};
  a.fc_sizes = {32, 16, 1};
  auto& t = c.pipeline.train;
  t.learning_rate = 0.01;
  t.momentum = 0.9;
  t.epochs = 8;
  t.batch_size = 8;
  auto& g = c.pipeline.algorithm1;
  g.max_corpus = 40;
  g.explainer.fill_value = 0.3;
  g.unet.channels = {4, 8, 16};
  g.unet.convs_per_block = 1;
  g.unet_train.learning_rate = 0.01;
  g.unet_train.batch_size = 4;
  g.unet_train.epochs = 20;
  return c;
}

fs::path RunLayout::baseline_checkpoint(Task t) const {
  return checkpoints() / (dataprep::to_string(t) + "-baseline.ckpt");
}
fs::path RunLayout::unet_checkpoint(Task t) const {
  return checkpoints() / (dataprep::to_string(t) + "-unet.ckpt");
}
fs::path RunLayout::masks(Task t) const { return root / "masks" / dataprep::to_string(t); }
fs::path RunLayout::decisions(Task t, cascade::Mode m) const {
  return root / "decisions" / (dataprep::to_string(t) + "-" + cascade::to_string(m) + ".jsonl");
}

std::vector<PhantomPlan> plan_phantoms(const DataConfig& data, std::uint64_t seed) {
  std::vector<PhantomPlan> plan;
  Rng counts(derive_seed(seed, "slice-counts"));
  for (int i = 0; i < data.phantom_count; ++i) {
    PhantomPlan p;
    p.seed = seed * 100000 + static_cast<std::uint64_t>(i);
    p.volume_id = dataprep::phantom_id(p.seed);
    p.slices = 8 + static_cast<int>(counts.below(3));
    plan.push_back(p);
  }
  return plan;
}

dataprep::PhantomOptions phantom_options(const DataConfig& data) {
  dataprep::PhantomOptions o;
  o.size = data.phantom_size;
  o.distractors = data.distractors;
  o.noise_sigma = data.noise_sigma;
  o.landmark_extension = data.landmark_extension;
  return o;
}

std::optional<RunConfig> load_run_config(const RunLayout& layout) {
  if (!fs::exists(layout.config())) return std::nullopt;
  std::ifstream in(layout.config());
  json j;
  try {
    j = json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw UnreadableFile(layout.config().string() + ": " + e.what());
  }
  return RunConfig::from_json(j);
}

void save_run_config(const RunLayout& layout, const RunConfig& cfg) {
  fs::create_directories(layout.root);
  std::ofstream out(layout.config());
  out << cfg.to_json().dump(2) << '\n';
  if (!out) throw IOFailure("cannot write " + layout.config().string());
}

namespace {

void say(const Log& log, const std::string& m) {
  if (log) log(m);
}

void ensure_dir(const fs::path& p) {
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw IOFailure("cannot create " + p.string() + ": " + ec.message());
}

void require(const fs::path& p, const std::string& what, const std::string& stage) {
  if (!fs::exists(p))
    throw MissingArtifact(what + " not found at " + p.string() + " (run " + stage + " first)");
}

json record(const RunLayout& layout, const std::string& stage, json summary) {
  json line{{"stage", stage}};
  for (auto& [k, v] : summary.items()) line[k] = v;
  std::ofstream out(layout.stage_log(), std::ios::app);
  out << line.dump() << '\n';
  return summary;
}

std::string tag_of(Task task, int fold) {
  return dataprep::to_string(task) + "-fold" + std::to_string(fold);
}

// Per-fold seeds, matching the ones crossvalidate derives for that fold.
baseline::TrainConfig fold_train_config(const RunConfig& r, int fold) {
  baseline::TrainConfig tc = r.pipeline.train;
  tc.seed = derive_seed(r.pipeline.train.seed, tag_of(r.task, fold));
  return tc;
}

cascade::Algorithm1Config fold_algorithm1_config(const RunConfig& r, int fold) {
  cascade::Algorithm1Config ac = r.pipeline.algorithm1;
  ac.explainer.seed = derive_seed(r.pipeline.algorithm1.explainer.seed, tag_of(r.task, fold));
  ac.unet_train.seed = derive_seed(r.pipeline.algorithm1.unet_train.seed, tag_of(r.task, fold));
  return ac;
}

std::vector<const TripletSample*> pick(const dataprep::TaskDataset& ds,
                                       const std::vector<std::size_t>& idx) {
  std::vector<const TripletSample*> out;
  for (auto i : idx) out.push_back(&ds.samples[i]);
  return out;
}

ModelCheckpoint load_required(const fs::path& p, const std::string& what, const std::string& stage) {
  require(p, what, stage);
  return load_checkpoint(p.string());
}

std::vector<fs::path> volume_files(const std::string& source) {
  std::vector<fs::path> files;
  if (fs::is_regular_file(source)) {
    files.emplace_back(source);
  } else if (fs::is_directory(source)) {
    for (const auto& e : fs::directory_iterator(source))
      if (e.is_regular_file() && io::is_volume_file(e.path().string())) files.push_back(e.path());
  } else {
    throw UnreadableFile("input " + source + " does not exist");
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw UnreadableFile("no .nii, .nii.gz or .raw volumes in " + source);
  return files;
}

std::string digest_json(const json& j) { return hex64(fnv1a(j.dump())); }

}  // namespace

nlohmann::ordered_json prepare(const RunLayout& layout, const RunConfig& cfg, const Log& log) {
  cfg.validate();
  const auto r = cfg.resolved();
  std::vector<dataprep::VolumeStack> volumes;
  std::vector<json> volume_meta;
  if (r.data.source.empty()) {
    const auto opts = phantom_options(r.data);
    for (const auto& p : plan_phantoms(r.data, r.seed)) {
      volumes.push_back(dataprep::generate_phantom(p.seed, p.slices, opts));
      volume_meta.push_back({{"phantom_seed", p.seed}});
    }
    say(log, "generated " + std::to_string(volumes.size()) + " phantom volumes");
  } else {
    std::set<std::string> ids;
    for (const auto& f : volume_files(r.data.source)) {
      auto v = dataprep::load_volume(f.string(), dataprep::Normalization::MinMax);
      if (!ids.insert(v.volume_id).second)
        throw InvalidSpec("two input volumes share the id " + v.volume_id);
      volumes.push_back(std::move(v));
      volume_meta.push_back({{"source", f.filename().string()}});
    }
    say(log, "loaded " + std::to_string(volumes.size()) + " volumes from " + r.data.source);
  }

  std::error_code ec;
  fs::remove_all(layout.dataset(), ec);
  ensure_dir(layout.volumes());
  save_run_config(layout, cfg);

  std::ofstream manifest(layout.manifest());
  manifest << json{{"kind", "dataset"},
                   {"input_size", r.data.input_size},
                   {"folds", r.data.folds},
                   {"seed", r.seed}}
                  .dump()
           << '\n';
  for (std::size_t i = 0; i < volumes.size(); ++i) {
    const auto& v = volumes[i];
    const std::string rel = "volumes/" + v.volume_id + ".raw";
    dataprep::save_volume((layout.dataset() / rel).string(), v);
    json line{{"kind", "volume"},
              {"id", v.volume_id},
              {"file", rel},
              {"slices", v.n()},
              {"digest", file_digest((layout.dataset() / rel).string())}};
    for (auto& [k, val] : volume_meta[i].items()) line[k] = val;
    manifest << line.dump() << '\n';
  }
  json triplets;
  for (Task task : {Task::Apex, Task::Basal}) {
    auto ds = dataprep::make_folds(dataprep::task_samples(volumes, task, r.data.input_size),
                                   r.data.folds, derive_seed(r.seed, "folds"));
    for (std::size_t i = 0; i < ds.samples.size(); ++i) {
      const auto& s = ds.samples[i];
      manifest << json{{"kind", "triplet"},
                       {"id", s.id},
                       {"volume", s.source_volume_id},
                       {"task", dataprep::to_string(task)},
                       {"label", dataprep::to_string(s.label)},
                       {"slices", s.slice_indices},
                       {"fold", ds.fold_of[i]}}
                      .dump()
               << '\n';
    }
    triplets[dataprep::to_string(task)] = ds.samples.size();
  }
  manifest.close();
  if (!manifest) throw IOFailure("cannot write " + layout.manifest().string());
  const std::string digest = file_digest(layout.manifest().string());
  say(log, "manifest " + layout.manifest().string() + " digest " + digest);
  return record(layout, "prepare",
                {{"volumes", volumes.size()}, {"triplets", triplets}, {"manifest_digest", digest}});
}

dataprep::TaskDataset load_dataset(const RunLayout& layout, Task task) {
  require(layout.manifest(), "dataset manifest", "prepare");
  std::ifstream in(layout.manifest());
  std::string line;
  int input_size = kInputSize, k = 0;
  std::vector<std::string> files;
  std::map<std::string, int> fold_of;
  std::vector<std::string> order;
  const std::string task_name = dataprep::to_string(task);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw UnreadableFile("manifest line is not JSON: " + std::string(e.what()));
    }
    const std::string kind = j.value("kind", "");
    if (kind == "dataset") {
      input_size = j.at("input_size").get<int>();
      k = j.at("folds").get<int>();
    } else if (kind == "volume") {
      files.push_back(j.at("file").get<std::string>());
    } else if (kind == "triplet" && j.at("task").get<std::string>() == task_name) {
      const std::string id = j.at("id").get<std::string>();
      fold_of[id] = j.at("fold").get<int>();
      order.push_back(id);
    }
  }
  std::vector<dataprep::VolumeStack> volumes;
  for (const auto& f : files)
    volumes.push_back(
        dataprep::load_volume((layout.dataset() / f).string(), dataprep::Normalization::None));
  std::map<std::string, TripletSample> by_id;
  for (auto& s : dataprep::task_samples(volumes, task, input_size)) by_id.emplace(s.id, std::move(s));

  dataprep::TaskDataset ds;
  ds.task = task;
  ds.k = k;
  for (const auto& id : order) {
    auto it = by_id.find(id);
    if (it == by_id.end()) throw InvalidSpec("manifest lists " + id + " but no volume yields it");
    ds.samples.push_back(std::move(it->second));
    ds.fold_of.push_back(fold_of[id]);
  }
  if (ds.samples.size() != by_id.size())
    throw InvalidSpec("manifest and volumes disagree for task " + task_name + " (rerun prepare)");
  ds.validate();
  return ds;
}

nlohmann::ordered_json train_baseline(const RunLayout& layout, const RunConfig& cfg, const Log& log) {
  cfg.validate();
  const auto r = cfg.resolved();
  const auto ds = load_dataset(layout, r.task);
  const auto tc = fold_train_config(r, r.holdout_fold);
  auto model = baseline::BaselineModel::build(r.pipeline.architecture, derive_seed(tc.seed, "init"));
  const auto folds = baseline::training_folds(ds.k, r.holdout_fold);
  say(log, "training " + dataprep::to_string(r.task) + " baseline, holdout fold " +
               std::to_string(r.holdout_fold + 1));
  const auto result = baseline::train(model, ds, folds, tc, [&](const baseline::EpochLog& e) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "epoch %d loss %.5f holdout acc %.4f", e.epoch, e.train_loss,
                  e.val_acc);
    say(log, buf);
  });
  ensure_dir(layout.checkpoints());
  const auto path = layout.baseline_checkpoint(r.task);
  save_checkpoint(path.string(), result.checkpoint);
  baseline::write_training_log(
      (layout.checkpoints() / (dataprep::to_string(r.task) + "-baseline.log.csv")).string(),
      result.log);
  save_run_config(layout, cfg);
  return record(layout, "train-baseline",
                {{"task", dataprep::to_string(r.task)},
                 {"checkpoint", path.string()},
                 {"fingerprint", result.checkpoint.fingerprint()},
                 {"train_accuracy", result.train_accuracy}});
}

nlohmann::ordered_json explain(const RunLayout& layout, const RunConfig& cfg, const Log& log) {
  cfg.validate();
  const auto r = cfg.resolved();
  const auto ckpt = load_required(layout.baseline_checkpoint(r.task), "baseline checkpoint",
                                  "train-baseline");
  const auto ds = load_dataset(layout, r.task);
  auto model = baseline::BaselineModel::from_checkpoint(ckpt);
  const auto ac = fold_algorithm1_config(r, r.holdout_fold);
  const auto train = pick(ds, ds.indices_excluding(r.holdout_fold));
  const auto chosen = cascade::select_corpus_samples(train, model, ac);
  say(log, "explaining true positives among " + std::to_string(chosen.size()) + " samples");
  auto corpus = explainer::build_mask_corpus(chosen, model, ac.explainer);
  corpus.task = r.task;
  const auto dir = layout.masks(r.task);
  std::error_code ec;
  fs::remove_all(dir, ec);
  explainer::write_corpus(dir.string(), corpus);
  save_run_config(layout, cfg);
  return record(layout, "explain",
                {{"task", dataprep::to_string(r.task)},
                 {"pairs", corpus.entries.size()},
                 {"corpus_digest", file_digest((dir / "corpus.json").string())}});
}

nlohmann::ordered_json explain_stack(const std::string& checkpoint, const std::string& stack_path,
                                     const std::string& out_dir, const RunConfig& cfg) {
  require(checkpoint, "baseline checkpoint", "train-baseline");
  const auto ckpt = load_checkpoint(checkpoint);
  const Stack stack = io::read_stack(stack_path);
  const auto ec = cfg.resolved().pipeline.algorithm1.explainer;
  const auto res = explainer::explain(stack, ckpt, ec);
  ensure_dir(out_dir);
  io::write_mask((fs::path(out_dir) / "mask.raw").string(), res.mask);
  const json meta = res.meta();
  std::ofstream out(fs::path(out_dir) / "meta.json");
  out << meta.dump(2) << '\n';
  if (!out) throw IOFailure("cannot write meta.json in " + out_dir);
  return meta;
}

nlohmann::ordered_json train_unet(const RunLayout& layout, const RunConfig& cfg, const Log& log) {
  cfg.validate();
  const auto r = cfg.resolved();
  const auto dir = layout.masks(r.task);
  require(dir / "corpus.json", "mask corpus", "explain");
  const auto corpus = explainer::read_corpus(dir.string());
  const auto ac = fold_algorithm1_config(r, r.holdout_fold);
  auto unet = segmenter::UNet::build(ac.unet, ac.unet_train.seed);
  say(log, "training " + dataprep::to_string(r.task) + " segmenter on " +
               std::to_string(corpus.entries.size()) + " pairs");
  const auto result = segmenter::train_unet(unet, corpus, ac.unet_train, [&](const segmenter::UNetEpochLog& e) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "epoch %d loss %.5f val dice %.4f", e.epoch, e.train_loss, e.val_dice);
    say(log, buf);
  });
  ensure_dir(layout.checkpoints());
  const auto path = layout.unet_checkpoint(r.task);
  save_checkpoint(path.string(), result.checkpoint);
  segmenter::write_training_log(
      (layout.checkpoints() / (dataprep::to_string(r.task) + "-unet.log.csv")).string(), result.log);
  save_run_config(layout, cfg);
  json vd = std::isfinite(result.val_dice) ? json(result.val_dice) : json("n/a");
  return record(layout, "train-unet",
                {{"task", dataprep::to_string(r.task)},
                 {"checkpoint", path.string()},
                 {"fingerprint", result.checkpoint.fingerprint()},
                 {"train_dice", result.train_dice},
                 {"val_dice", vd}});
}

nlohmann::ordered_json run_cascade(const RunLayout& layout, const RunConfig& cfg, const Log& log) {
  cfg.validate();
  const auto r = cfg.resolved();
  const auto b = load_required(layout.baseline_checkpoint(r.task), "baseline checkpoint",
                               "train-baseline");
  const auto u = load_required(layout.unet_checkpoint(r.task), "segmenter checkpoint", "train-unet");
  const auto ds = load_dataset(layout, r.task);
  const auto test = pick(ds, ds.fold_indices(r.holdout_fold));
  say(log, "cascade (" + cascade::to_string(r.cascade_mode) + ") over " +
               std::to_string(test.size()) + " held-out samples");
  const auto decisions = cascade::improve_predictions(test, b, u, r.cascade_mode);
  const auto path = layout.decisions(r.task, r.cascade_mode);
  ensure_dir(path.parent_path());
  cascade::write_decisions(path.string(), decisions);
  save_run_config(layout, cfg);
  return record(layout, "cascade",
                {{"task", dataprep::to_string(r.task)},
                 {"mode", cascade::to_string(r.cascade_mode)},
                 {"decisions", path.string()},
                 {"recovery", cascade::improve_training_set_report(decisions).to_json()}});
}

namespace {

json run_info(const RunLayout& layout, const RunConfig& cfg) {
  json j{{"run_id", cfg.run_id}, {"seed", cfg.seed}, {"config_digest", digest_json(cfg.to_json())}};
  if (fs::exists(layout.manifest())) j["manifest_digest"] = file_digest(layout.manifest().string());
  return j;
}

json report_summary(const std::vector<harness::CrossValidation>& runs, const fs::path& dir) {
  json out{{"report", dir.string()}, {"report_digest", file_digest((dir / "report.json").string())}};
  json variants;
  for (const auto& cv : runs)
    for (const auto& rep : cv.reports) {
      json m;
      for (const auto& [name, s] : rep.summary()) m[name] = s.mean;
      variants[rep.task + "/" + rep.variant] = m;
    }
  out["mean_metrics"] = variants;
  return out;
}

}  // namespace

nlohmann::ordered_json evaluate(const RunLayout& layout, const RunConfig& cfg, harness::CvMode mode,
                                const std::string& out_dir, const Log& log) {
  cfg.validate();
  const auto r = cfg.resolved();
  const auto b = load_required(layout.baseline_checkpoint(r.task), "baseline checkpoint",
                               "train-baseline");
  harness::CrossValidation cv;
  cv.task = dataprep::to_string(r.task);
  cv.mode = mode;
  harness::FoldRecord rec;
  rec.fold = r.holdout_fold;
  rec.baseline_fingerprint = b.fingerprint();
  if (mode == harness::CvMode::Baseline) {
    const auto ds = load_dataset(layout, r.task);
    const auto test = pick(ds, ds.fold_indices(r.holdout_fold));
    auto model = baseline::BaselineModel::from_checkpoint(b);
    std::vector<const Stack*> stacks;
    std::vector<dataprep::Label> labels, preds;
    for (const auto* s : test) {
      stacks.push_back(&s->stack);
      labels.push_back(s->label);
    }
    const auto probs = model.predict_batch(stacks);
    for (double p : probs) preds.push_back(baseline::classify(p));
    cv.reports.push_back({cv.task, "baseline", {harness::score_fold(r.holdout_fold, labels, preds, probs)}});
    rec.test_size = test.size();
    rec.train_size = ds.samples.size() - test.size();
  } else {
    const auto u = load_required(layout.unet_checkpoint(r.task), "segmenter checkpoint", "train-unet");
    const auto path = layout.decisions(r.task, r.cascade_mode);
    require(path, "cascade decisions", "cascade");
    const auto decisions = cascade::read_decisions(path.string());
    cv.reports.push_back({cv.task, "baseline", {harness::score_decisions(r.holdout_fold, decisions, true)}});
    cv.reports.push_back({cv.task, "cascade-" + cascade::to_string(r.cascade_mode),
                          {harness::score_decisions(r.holdout_fold, decisions)}});
    rec.unet_fingerprint = u.fingerprint();
    auto it = u.metrics_at_save.find("val_dice");
    rec.unet_val_dice = it == u.metrics_at_save.end() ? std::nan("") : it->second;
    rec.test_size = decisions.size();
    rec.test_recovery = cascade::improve_training_set_report(decisions);
  }
  cv.records.push_back(rec);
  const fs::path dir = out_dir.empty()
                           ? layout.report() / (cv.task + "-" + harness::to_string(mode))
                           : fs::path(out_dir);
  const std::vector<harness::CrossValidation> runs{cv};
  harness::emit_report(dir.string(), runs, run_info(layout, cfg));
  say(log, "report written to " + dir.string());
  save_run_config(layout, cfg);
  return record(layout, "evaluate", report_summary(runs, dir));
}

nlohmann::ordered_json crossvalidate(const RunLayout& layout, const RunConfig& cfg,
                                     harness::CvMode mode, std::vector<Task> tasks,
                                     const std::string& out_dir, const Log& log,
                                     const harness::CvOptions& extra) {
  cfg.validate();
  const auto r = cfg.resolved();
  if (tasks.empty()) tasks.push_back(r.task);
  std::vector<harness::CrossValidation> runs;
  for (Task t : tasks) {
    const auto ds = load_dataset(layout, t);
    harness::CvOptions opt = extra;
    opt.folds = r.cv_folds;
    if (!opt.log) opt.log = log;
    runs.push_back(harness::crossvalidate(ds, r.pipeline, mode, opt));
  }
  const fs::path dir =
      out_dir.empty() ? layout.report() / ("cv-" + harness::to_string(mode)) : fs::path(out_dir);
  harness::emit_report(dir.string(), runs, run_info(layout, cfg));
  say(log, "report written to " + dir.string());
  save_run_config(layout, cfg);
  return record(layout, "crossvalidate", report_summary(runs, dir));
}

}  // namespace cmrqc::pipeline
