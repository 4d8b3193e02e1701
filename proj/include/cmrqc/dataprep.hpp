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
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cmrqc/common.hpp"
#include "cmrqc/image.hpp"

namespace cmrqc::dataprep {

enum class Task { Apex, Basal };
// P = boundary slice present (full coverage), N = boundary slice missing.
enum class Label { Negative, Positive };
enum class Normalization { MinMax, None };

std::string to_string(Task t);
std::string to_string(Label l);  // "P" / "N"
Task parse_task(const std::string& s);
Label parse_label(const std::string& s);

// A full-coverage short-axis stack. slices[0] is the apex-most slice,
// slices[n-1] the basal-most one.
struct VolumeStack {
  std::string volume_id;
  std::vector<Image> slices;
  double spacing_x = 1.0;
  double spacing_y = 1.0;
  double slice_thickness = 1.0;

  int n() const { return static_cast<int>(slices.size()); }
  // Throws SliceCountOutOfRange / NonUniformSliceShape / InvalidSpec.
  void validate() const;
};

struct TripletSample {
  std::string id;
  Stack stack;
  Label label = Label::Negative;
  Task task = Task::Apex;
  std::string source_volume_id;
  // 1-based slice numbers in the source volume.
  std::array<int, 3> slice_indices{};
};

struct TaskDataset {
  Task task = Task::Apex;
  int k = 0;
  std::vector<TripletSample> samples;
  std::vector<int> fold_of;  // parallel to samples

  std::vector<std::size_t> fold_indices(int fold) const;
  std::vector<std::size_t> indices_excluding(int fold) const;
  // Balance, sibling and fold-partition invariants. Throws InvalidSpec.
  void validate() const;
};

struct AugmentationSpec {
  double rotation_min = -45.0;
  double rotation_max = 45.0;
  bool allow_hflip = true;
  bool allow_vflip = true;
  // Magnitude range of the additive brightness shift; the sign is drawn
  // with a fair coin.
  double brightness_min = 0.0;
  double brightness_max = 0.2;
  std::uint64_t seed = 0;

  void validate() const;  // throws InvalidConfig
};

// One concrete draw from an AugmentationSpec.
struct AugmentationParams {
  double rotation_deg = 0.0;
  bool hflip = false;
  bool vflip = false;
  double brightness_delta = 0.0;
};

VolumeStack make_volume(std::string volume_id, std::vector<Image> slices,
                        Normalization norm, double spacing_x = 1.0,
                        double spacing_y = 1.0, double slice_thickness = 1.0);
VolumeStack load_volume(const std::string& path, Normalization norm);
void save_volume(const std::string& path, const VolumeStack& v);

// Per-volume min-max to [0,1]; a constant volume maps to zeros.
void normalize_minmax(std::vector<Image>& slices);

// apex-P, apex-N, basal-P, basal-N, in that order.
std::array<TripletSample, 4> extract_triplets(const VolumeStack& v,
                                              int size = kInputSize);

// Ground truth kept alongside a synthetic volume.
struct PhantomTruth {
  double center_x = 0.0;
  double center_y = 0.0;
  std::vector<double> outer_radius;  // per slice, index 0 = slice 1
  double crescent_angle = 0.0;       // radians, direction of the crescent
  std::vector<std::array<double, 3>> distractors;  // (x, y, radius)
  // Extracardiac structures drawn outside the heart on slices first..last
  // (1-based): a great vessel on the basal levels, the liver dome on the
  // apical ones. Each is absent from the positive triplet of one task.
  struct Landmark {
    double x = 0, y = 0, rx = 0, ry = 0;
    int first = 0, last = 0;
  };
  std::vector<Landmark> landmarks;

  // Ventricle disk (blood pool + wall) of slice k (1-based), as a 2D mask.
  std::vector<std::uint8_t> disk_mask(int slice, int size) const;
  // Disk masks of the three given slices stacked into a Mask.
  Mask ventricle_mask(const std::array<int, 3>& slices, int size) const;
};

struct PhantomOptions {
  int size = kInputSize;
  // Bright blobs placed away from the heart. Zero for regular phantoms.
  int distractors = 0;
  // Slices by which both landmarks reach further toward the boundary
  // slices (0..3). At 1 a positive stack shows the same extracardiac
  // pattern as a regular negative one.
  int landmark_extension = 0;
  double noise_sigma = 0.03;
};

struct Phantom {
  VolumeStack volume;
  PhantomTruth truth;
};

Phantom generate_phantom_with_truth(std::uint64_t seed, int n,
                                    const PhantomOptions& opts = {});
// Throws InvalidSliceCount unless n in {8, 9, 10}.
VolumeStack generate_phantom(std::uint64_t seed, int n,
                             const PhantomOptions& opts = {});
// Volume id used for a phantom seed, e.g. "phantom-000042".
std::string phantom_id(std::uint64_t seed);

AugmentationParams draw_augmentation(const AugmentationSpec& spec, Rng& rng);
TripletSample apply_augmentation(const TripletSample& t, const AugmentationParams& p);
// Deterministic in (spec.seed, t.id); the copy gets id t.id + "#aug".
TripletSample augment(const TripletSample& t, const AugmentationSpec& spec);

// Volume-grouped k-fold split. Throws TooFewVolumes, InvalidConfig.
TaskDataset make_folds(std::vector<TripletSample> samples, int k, std::uint64_t seed);

// Convenience: triplets of one task from a set of volumes.
std::vector<TripletSample> task_samples(const std::vector<VolumeStack>& volumes, Task task,
                                        int size = kInputSize);

}  // namespace cmrqc::dataprep
