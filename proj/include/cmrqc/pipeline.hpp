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

#include <cstdint>
#include <filesystem>
#include <functional>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "cmrqc/cascade.hpp"
#include "cmrqc/dataprep.hpp"
#include "cmrqc/harness.hpp"

namespace cmrqc::pipeline {

struct DataConfig {
  // Directory (or single file) of NIfTI/raw volumes; empty generates phantoms.
  std::string source;
  int phantom_count = 200;
  int phantom_size = kInputSize;
  int distractors = 0;
  double noise_sigma = 0.03;
  int landmark_extension = 0;
  int input_size = kInputSize;
  int folds = 5;

  nlohmann::ordered_json to_json() const;
  static DataConfig from_json(const nlohmann::ordered_json& j);
};

// Everything a run needs; stage seeds are derived from seed.
struct RunConfig {
  std::string run_id = "default";
  dataprep::Task task = dataprep::Task::Apex;
  std::uint64_t seed = 0;
  DataConfig data;
  harness::PipelineConfig pipeline;
  cascade::Mode cascade_mode = cascade::Mode::LabelFree;
  // Test fold of the single-split stages (train-baseline .. evaluate).
  int holdout_fold = 0;
  // Folds evaluated by crossvalidate; empty = all.
  std::vector<int> cv_folds;

  // Throws InvalidConfig.
  void validate() const;
  // Copy with every sub-config seed set from seed.
  RunConfig resolved() const;
  nlohmann::ordered_json to_json() const;
  static RunConfig from_json(const nlohmann::ordered_json& j);
};

// Reduced sizes that keep a 200-volume phantom cross-validation on one CPU
// core within minutes.
RunConfig desk_config();

// runs/<id>/{dataset,checkpoints,masks,decisions,report}
struct RunLayout {
  std::filesystem::path root;

  std::filesystem::path config() const { return root / "config.json"; }
  std::filesystem::path dataset() const { return root / "dataset"; }
  std::filesystem::path manifest() const { return dataset() / "manifest.jsonl"; }
  std::filesystem::path volumes() const { return dataset() / "volumes"; }
  std::filesystem::path checkpoints() const { return root / "checkpoints"; }
  std::filesystem::path baseline_checkpoint(dataprep::Task t) const;
  std::filesystem::path unet_checkpoint(dataprep::Task t) const;
  std::filesystem::path masks(dataprep::Task t) const;
  std::filesystem::path decisions(dataprep::Task t, cascade::Mode m) const;
  std::filesystem::path report() const { return root / "report"; }
  std::filesystem::path stage_log() const { return root / "stages.jsonl"; }
};

using Log = std::function<void(const std::string&)>;

// Phantom generation plan: volume id, generator seed and slice count.
struct PhantomPlan {
  std::string volume_id;
  std::uint64_t seed = 0;
  int slices = 0;
};
std::vector<PhantomPlan> plan_phantoms(const DataConfig& data, std::uint64_t seed);
dataprep::PhantomOptions phantom_options(const DataConfig& data);

// Config persisted in the run directory, or nullopt.
std::optional<RunConfig> load_run_config(const RunLayout& layout);
void save_run_config(const RunLayout& layout, const RunConfig& cfg);

// Each stage returns a JSON summary that is also appended to stages.jsonl.
// Missing inputs raise MissingArtifact naming the stage that produces them.
nlohmann::ordered_json prepare(const RunLayout& layout, const RunConfig& cfg, const Log& log = {});
dataprep::TaskDataset load_dataset(const RunLayout& layout, dataprep::Task task);
nlohmann::ordered_json train_baseline(const RunLayout& layout, const RunConfig& cfg,
                                      const Log& log = {});
nlohmann::ordered_json explain(const RunLayout& layout, const RunConfig& cfg, const Log& log = {});
// Explains a single stack file into out_dir (mask.raw, meta.json).
nlohmann::ordered_json explain_stack(const std::string& checkpoint, const std::string& stack_path,
                                     const std::string& out_dir, const RunConfig& cfg);
nlohmann::ordered_json train_unet(const RunLayout& layout, const RunConfig& cfg, const Log& log = {});
nlohmann::ordered_json run_cascade(const RunLayout& layout, const RunConfig& cfg,
                                   const Log& log = {});
nlohmann::ordered_json evaluate(const RunLayout& layout, const RunConfig& cfg, harness::CvMode mode,
                                const std::string& out_dir = {}, const Log& log = {});
// tasks empty = the configured task.
nlohmann::ordered_json crossvalidate(const RunLayout& layout, const RunConfig& cfg,
                                     harness::CvMode mode, std::vector<dataprep::Task> tasks,
                                     const std::string& out_dir = {}, const Log& log = {},
                                     const harness::CvOptions& extra = {});

}  // namespace cmrqc::pipeline
