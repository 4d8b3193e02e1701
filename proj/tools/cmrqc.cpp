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


// cmrqc: command-line front end over the pipeline stages.

#include <CLI11.hpp>

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "cmrqc/pipeline.hpp"

namespace {

using namespace cmrqc;
using json = nlohmann::ordered_json;

struct Flags {
  std::string run = "runs/default";
  std::string config_file;
  std::string task;
  std::optional<std::uint64_t> seed;
  std::string in;
  std::string out;
  std::string mode;
  std::string folds;
  std::string preset;
  std::string checkpoint;
  int phantom = 0;
};

void add_common(CLI::App* sub, Flags& f) {
  sub->add_option("--run", f.run, "Run directory holding every stage artifact")->capture_default_str();
  sub->add_option("--config", f.config_file, "JSON run config; its values override the flags");
  sub->add_option("--task", f.task, "apex or basal");
  sub->add_option("--seed", f.seed, "Master seed");
}

std::vector<int> parse_folds(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    int v = 0;
    try {
      v = std::stoi(item);
    } catch (const std::exception&) {
      throw InvalidConfig("fold list entry '" + item + "' is not a number");
    }
    if (v < 1) throw InvalidConfig("folds are numbered from 1");
    out.push_back(v - 1);
  }
  return out;
}

// Persisted run config (or a preset) < flags < --config file.
pipeline::RunConfig effective_config(const Flags& f, const pipeline::RunLayout& layout,
                                     const std::function<void(pipeline::RunConfig&)>& flags) {
  pipeline::RunConfig cfg;
  if (f.preset == "desk")
    cfg = pipeline::desk_config();
  else if (!f.preset.empty() && f.preset != "paper")
    throw InvalidConfig("unknown preset '" + f.preset + "' (expected paper or desk)");
  else if (auto saved = pipeline::load_run_config(layout))
    cfg = *saved;
  if (!f.task.empty() && f.task != "both") cfg.task = dataprep::parse_task(f.task);
  if (f.seed) cfg.seed = *f.seed;
  flags(cfg);
  if (!f.config_file.empty()) {
    std::ifstream in(f.config_file);
    if (!in) throw UnreadableFile("cannot open config " + f.config_file);
    json patch;
    try {
      patch = json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw UnreadableFile(f.config_file + ": " + e.what());
    }
    json merged = cfg.to_json();
    merged.merge_patch(patch);
    cfg = pipeline::RunConfig::from_json(merged);
  }
  return cfg;
}

void check_device() {
  const char* dev = std::getenv("CMRQC_DEVICE");
  if (!dev || !*dev) return;
  std::string d(dev);
  std::transform(d.begin(), d.end(), d.begin(), [](unsigned char c) { return std::tolower(c); });
  if (d != "cpu") throw InvalidConfig("CMRQC_DEVICE=" + std::string(dev) + " unavailable; only cpu is supported");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cardiac MR coverage quality control: baseline classifier, explanations, "
               "segmenter cascade and evaluation"};
  app.require_subcommand(1);
  Flags f;

  auto* prepare = app.add_subcommand("prepare", "Generate phantoms or ingest volumes into a dataset manifest");
  add_common(prepare, f);
  prepare->add_option("--phantom", f.phantom, "Number of phantom volumes to generate");
  prepare->add_option("--in", f.in, "Directory or file of .nii/.nii.gz/.raw volumes");
  prepare->add_option("--folds", f.folds, "Number of cross-validation folds");
  prepare->add_option("--preset", f.preset, "Start from the paper or desk config instead of a saved one");

  auto* train_b = app.add_subcommand("train-baseline", "Train the 3D CNN on all folds but the holdout");
  add_common(train_b, f);

  auto* explain = app.add_subcommand("explain", "Explain true positives into a mask corpus");
  add_common(explain, f);
  explain->add_option("--in", f.in, "Single stack (.raw) to explain instead of the corpus");
  explain->add_option("--out", f.out, "Output directory for a single-stack explanation");
  explain->add_option("--checkpoint", f.checkpoint, "Baseline checkpoint for --in (default: the run's)");

  auto* train_u = app.add_subcommand("train-unet", "Train the attention U-Net on the mask corpus");
  add_common(train_u, f);

  auto* casc = app.add_subcommand("cascade", "Re-predict negatives of the holdout fold through salient regions");
  add_common(casc, f);
  casc->add_option("--mode", f.mode, "label-free (default) or paper");

  auto* eval = app.add_subcommand("evaluate", "Score the holdout fold and write a report");
  add_common(eval, f);
  eval->add_option("--mode", f.mode, "baseline (default) or cascade");
  eval->add_option("--out", f.out, "Report directory (default: <run>/report/<task>-<mode>)");

  auto* cv = app.add_subcommand("crossvalidate", "Full k-fold evaluation of the pipeline");
  add_common(cv, f);
  cv->add_option("--mode", f.mode, "baseline (default) or cascade");
  cv->add_option("--folds", f.folds, "Comma-separated fold numbers, 1-based (default: all)");
  cv->add_option("--out", f.out, "Report directory (default: <run>/report/cv-<mode>)");

  auto* show = app.add_subcommand("config", "Print the effective run config as JSON");
  add_common(show, f);
  show->add_option("--preset", f.preset, "paper or desk");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  const auto log = [](const std::string& m) { std::cerr << "cmrqc: " << m << std::endl; };
  try {
    check_device();
    const pipeline::RunLayout layout{f.run};
    auto cfg = effective_config(f, layout, [&](pipeline::RunConfig& c) {
      if (*prepare) {
        if (f.phantom > 0 && !f.in.empty()) throw InvalidConfig("--phantom and --in are exclusive");
        if (f.phantom > 0) {
          c.data.source.clear();
          c.data.phantom_count = f.phantom;
        }
        if (!f.in.empty()) c.data.source = f.in;
        if (!f.folds.empty()) {
          try {
            c.data.folds = std::stoi(f.folds);
          } catch (const std::exception&) {
            throw InvalidConfig("--folds expects a fold count for prepare");
          }
        }
      }
      if (*casc && !f.mode.empty()) c.cascade_mode = cascade::parse_mode(f.mode);
      if (*cv && !f.folds.empty()) c.cv_folds = parse_folds(f.folds);
    });
    json out;
    if (*prepare) {
      out = pipeline::prepare(layout, cfg, log);
    } else if (*train_b) {
      out = pipeline::train_baseline(layout, cfg, log);
    } else if (*explain) {
      if (!f.in.empty()) {
        if (f.out.empty()) throw InvalidConfig("explain --in needs --out");
        const std::string ckpt =
            f.checkpoint.empty() ? layout.baseline_checkpoint(cfg.task).string() : f.checkpoint;
        out = pipeline::explain_stack(ckpt, f.in, f.out, cfg);
      } else {
        out = pipeline::explain(layout, cfg, log);
      }
    } else if (*train_u) {
      out = pipeline::train_unet(layout, cfg, log);
    } else if (*casc) {
      out = pipeline::run_cascade(layout, cfg, log);
    } else if (*eval) {
      const auto mode = harness::parse_cv_mode(f.mode.empty() ? "baseline" : f.mode);
      out = pipeline::evaluate(layout, cfg, mode, f.out, log);
    } else if (*cv) {
      const auto mode = harness::parse_cv_mode(f.mode.empty() ? "baseline" : f.mode);
      std::vector<dataprep::Task> tasks;
      if (f.task == "both") tasks = {dataprep::Task::Apex, dataprep::Task::Basal};
      out = pipeline::crossvalidate(layout, cfg, mode, tasks, f.out, log);
    } else if (*show) {
      cfg.validate();
      out = cfg.to_json();
    }
    std::cout << out.dump(2) << std::endl;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 1;
  }
  return 0;
}
