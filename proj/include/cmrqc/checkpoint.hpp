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

#include <map>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

namespace cmrqc {

// Serialized weights plus the metadata needed to rebuild and audit them.
// kind is "baseline" or "unet"; task is apex, basal, apex-unet or basal-unet.
struct ModelCheckpoint {
  std::string kind;
  std::string task;
  nlohmann::ordered_json architecture;
  std::string arch_fingerprint;
  nlohmann::ordered_json train_config;
  std::map<std::string, double> metrics_at_save;
  std::string created;
  std::vector<double> weights;

  // Content hash of the weight blob.
  std::string weights_digest() const;
  // Combined architecture + weights fingerprint used in determinism audits.
  std::string fingerprint() const;
  nlohmann::ordered_json metadata() const;
};

// Fingerprint of a canonical architecture description.
std::string architecture_fingerprint(const std::string& kind, const nlohmann::ordered_json& arch);

// Single-file archive: magic, JSON metadata, little-endian float64 blob.
void save_checkpoint(const std::string& path, const ModelCheckpoint& ckpt);
// Throws UnreadableFile on a malformed archive and CheckpointArchMismatch
// when the stored fingerprint does not match the stored architecture.
ModelCheckpoint load_checkpoint(const std::string& path);

// UTC timestamp, or the SOURCE_DATE_EPOCH value when set.
std::string creation_stamp();

}  // namespace cmrqc
