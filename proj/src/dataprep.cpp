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

#include "cmrqc/dataprep.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numbers>
#include <set>

#include "cmrqc/volume_io.hpp"

namespace cmrqc::dataprep {

std::string to_string(Task t) { return t == Task::Apex ? "apex" : "basal"; }
std::string to_string(Label l) { return l == Label::Positive ? "P" : "N"; }

Task parse_task(const std::string& s) {
  if (s == "apex") return Task::Apex;
  if (s == "basal") return Task::Basal;
  throw InvalidConfig("unknown task '" + s + "' (expected apex or basal)");
}

Label parse_label(const std::string& s) {
  if (s == "P") return Label::Positive;
  if (s == "N") return Label::Negative;
  throw InvalidConfig("unknown label '" + s + "'");
}

void VolumeStack::validate() const {
  if (n() < 8 || n() > 10)
    throw SliceCountOutOfRange(volume_id + " has " + std::to_string(n()) +
                               " slices; expected 8, 9 or 10");
  const int h = slices.front().height;
  const int w = slices.front().width;
  if (h <= 0 || w <= 0) throw NonUniformSliceShape(volume_id + " has an empty slice");
  for (const auto& s : slices) {
    if (s.height != h || s.width != w)
      throw NonUniformSliceShape(volume_id + ": slice shapes differ");
    for (float p : s.pixels)
      if (!std::isfinite(p) || p < 0.0f || p > 1.0f)
        throw InvalidSpec(volume_id + ": intensity outside [0,1]");
  }
}

void normalize_minmax(std::vector<Image>& slices) {
  float lo = INFINITY;
  float hi = -INFINITY;
  for (const auto& s : slices)
    for (float p : s.pixels) {
      lo = std::min(lo, p);
      hi = std::max(hi, p);
    }
  const float range = hi - lo;
  for (auto& s : slices)
    for (float& p : s.pixels) p = range > 0.0f ? (p - lo) / range : 0.0f;
}

VolumeStack make_volume(std::string volume_id, std::vector<Image> slices, Normalization norm,
                        double spacing_x, double spacing_y, double slice_thickness) {
  VolumeStack v;
  v.volume_id = std::move(volume_id);
  v.spacing_x = spacing_x;
  v.spacing_y = spacing_y;
  v.slice_thickness = slice_thickness;
  if (slices.size() < 8 || slices.size() > 10)
    throw SliceCountOutOfRange(v.volume_id + " has " + std::to_string(slices.size()) +
                               " slices; expected 8, 9 or 10");
  for (const auto& s : slices)
    for (float p : s.pixels)
      if (!std::isfinite(p)) throw UnreadableFile(v.volume_id + " contains non-finite voxels");
  if (norm == Normalization::MinMax) normalize_minmax(slices);
  v.slices = std::move(slices);
  v.validate();
  return v;
}

VolumeStack load_volume(const std::string& path, Normalization norm) {
  const io::RawVolume raw = io::read_volume_file(path);
  std::vector<Image> slices;
  slices.reserve(static_cast<std::size_t>(raw.slices));
  const std::size_t plane = static_cast<std::size_t>(raw.height) * raw.width;
  for (int z = 0; z < raw.slices; ++z) {
    Image img(raw.height, raw.width);
    std::copy_n(raw.data.begin() + static_cast<std::ptrdiff_t>(z * plane), plane,
                img.pixels.begin());
    slices.push_back(std::move(img));
  }
  std::string id = path.substr(path.find_last_of('/') + 1);
  for (std::string_view ext : {".nii.gz", ".nii", ".raw"}) {
    if (id.size() > ext.size() && id.ends_with(ext)) {
      id.resize(id.size() - ext.size());
      break;
    }
  }
  return make_volume(std::move(id), std::move(slices), norm, raw.spacing_x, raw.spacing_y,
                     raw.slice_thickness);
}

void save_volume(const std::string& path, const VolumeStack& v) {
  io::RawVolume raw;
  raw.slices = v.n();
  raw.height = v.slices.front().height;
  raw.width = v.slices.front().width;
  raw.spacing_x = v.spacing_x;
  raw.spacing_y = v.spacing_y;
  raw.slice_thickness = v.slice_thickness;
  for (const auto& s : v.slices) raw.data.insert(raw.data.end(), s.pixels.begin(), s.pixels.end());
  if (path.ends_with(".raw"))
    io::write_raw(path, raw);
  else
    io::write_nifti(path, raw);
}

namespace {

TripletSample make_triplet(const VolumeStack& v, Task task, Label label,
                           std::array<int, 3> indices, int size) {
  TripletSample t;
  t.task = task;
  t.label = label;
  t.source_volume_id = v.volume_id;
  t.slice_indices = indices;
  t.id = v.volume_id + "/" + to_string(task) + "/" + to_string(label);
  t.stack = Stack(kStackDepth, size, size);
  for (int z = 0; z < kStackDepth; ++z)
    set_slice(t.stack, z, resize_square(v.slices[static_cast<std::size_t>(indices[z] - 1)], size));
  return t;
}

}  // namespace

std::array<TripletSample, 4> extract_triplets(const VolumeStack& v, int size) {
  v.validate();
  const int n = v.n();
  return {
      make_triplet(v, Task::Apex, Label::Positive, {1, 2, 3}, size),
      make_triplet(v, Task::Apex, Label::Negative, {2, 3, 4}, size),
      make_triplet(v, Task::Basal, Label::Positive, {n - 2, n - 1, n}, size),
      make_triplet(v, Task::Basal, Label::Negative, {n - 3, n - 2, n - 1}, size),
  };
}

std::vector<TripletSample> task_samples(const std::vector<VolumeStack>& volumes, Task task,
                                        int size) {
  std::vector<TripletSample> out;
  out.reserve(volumes.size() * 2);
  for (const auto& v : volumes)
    for (auto& t : extract_triplets(v, size))
      if (t.task == task) out.push_back(std::move(t));
  return out;
}

// ---------------------------------------------------------------------------
// Phantoms

namespace {

constexpr double kWallThickness = 3.5;
constexpr double kCrescentGap = 1.0;
constexpr double kCrescentWidth = 6.0;
constexpr double kCrescentHalfAngle = 35.0 * std::numbers::pi / 180.0;
constexpr double kApexPadHalfAngle = 70.0 * std::numbers::pi / 180.0;

constexpr float kBackground = 0.10f;
constexpr float kBody = 0.22f;
constexpr float kWall = 0.42f;
constexpr float kPool = 0.85f;
constexpr float kCrescent = 0.68f;
constexpr float kDistractor = 0.90f;
constexpr float kLandmark = 0.55f;
constexpr float kVessel = 0.72f;

double angle_diff(double a, double b) {
  double d = std::fmod(a - b, 2.0 * std::numbers::pi);
  if (d > std::numbers::pi) d -= 2.0 * std::numbers::pi;
  if (d < -std::numbers::pi) d += 2.0 * std::numbers::pi;
  return d;
}

}  // namespace

std::string phantom_id(std::uint64_t seed) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "phantom-%06llu", static_cast<unsigned long long>(seed));
  return buf;
}

std::vector<std::uint8_t> PhantomTruth::disk_mask(int slice, int size) const {
  std::vector<std::uint8_t> m(static_cast<std::size_t>(size) * size, 0);
  const double r = outer_radius.at(static_cast<std::size_t>(slice - 1));
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x)
      if (std::hypot(x - center_x, y - center_y) <= r) m[static_cast<std::size_t>(y) * size + x] = 1;
  return m;
}

Mask PhantomTruth::ventricle_mask(const std::array<int, 3>& slices, int size) const {
  Mask m(kStackDepth, size, size);
  for (int z = 0; z < kStackDepth; ++z) {
    const auto d = disk_mask(slices[static_cast<std::size_t>(z)], size);
    std::copy(d.begin(), d.end(), m.data.begin() + static_cast<std::ptrdiff_t>(z * m.plane()));
  }
  return m;
}

Phantom generate_phantom_with_truth(std::uint64_t seed, int n, const PhantomOptions& opts) {
  if (n < 8 || n > 10)
    throw InvalidSliceCount("phantom slice count must be 8, 9 or 10, got " + std::to_string(n));
  if (opts.landmark_extension < 0 || opts.landmark_extension > 3)
    throw InvalidConfig("landmark extension must lie in [0, 3]");
  const int size = opts.size;
  Rng rng(derive_seed(seed, "phantom"));

  PhantomTruth truth;
  const double c = (size - 1) / 2.0;
  const double reach = 12.0 * size / 128.0;
  truth.center_x = c + rng.uniform(-reach, reach);
  truth.center_y = c + rng.uniform(-reach, reach);
  const double scale = rng.uniform(0.9, 1.1) * size / 128.0;
  truth.crescent_angle = rng.uniform(-0.75, -0.25) * std::numbers::pi;  // upper-left quadrant
  const double body_rx = rng.uniform(0.36, 0.44) * size;
  const double body_ry = rng.uniform(0.30, 0.38) * size;

  // Slice 1 (apex) is the smallest cross-section. The cross-section stops
  // growing over the basal four slices.
  for (int k = 1; k <= n; ++k) {
    const double t = static_cast<double>(std::min(k, n - 3) - 1) / (n - 1);
    truth.outer_radius.push_back(scale * (5.0 + 15.0 * std::pow(t, 0.8)));
  }

  const double heart_reach = truth.outer_radius.back() + kCrescentGap + kCrescentWidth + 6.0;
  for (int i = 0; i < opts.distractors; ++i) {
    for (int attempt = 0; attempt < 100; ++attempt) {
      const double r = rng.uniform(4.0, 8.0) * size / 128.0;
      const double x = rng.uniform(r + 2, size - r - 3);
      const double y = rng.uniform(r + 2, size - r - 3);
      if (std::hypot(x - truth.center_x, y - truth.center_y) > heart_reach + r) {
        truth.distractors.push_back({x, y, r});
        break;
      }
    }
  }

  {
    PhantomTruth::Landmark vessel;
    vessel.x = c - rng.uniform(0.22, 0.28) * size;
    vessel.y = c + rng.uniform(-0.04, 0.04) * size;
    vessel.rx = vessel.ry = rng.uniform(0.10, 0.13) * size;
    vessel.first = 4 - opts.landmark_extension;
    vessel.last = n;
    PhantomTruth::Landmark liver;
    liver.x = c + rng.uniform(0.18, 0.24) * size;
    liver.y = c + rng.uniform(0.16, 0.22) * size;
    liver.rx = rng.uniform(0.12, 0.16) * size;
    liver.ry = rng.uniform(0.075, 0.10) * size;
    liver.first = 1;
    liver.last = n - 3 + opts.landmark_extension;
    truth.landmarks = {vessel, liver};
  }
  const double heart_clear = truth.outer_radius.back() + kCrescentGap + kCrescentWidth;

  std::vector<Image> slices;
  for (int k = 1; k <= n; ++k) {
    Image img(size, size);
    const double outer = truth.outer_radius[static_cast<std::size_t>(k - 1)];
    // The apex-most slice is all wall; the cavity closes there.
    const double pool = k == 1 ? 0.0 : outer - kWallThickness * scale;
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        const double bx = (x - c) / body_rx;
        const double by = (y - c) / body_ry;
        float v = bx * bx + by * by <= 1.0 ? kBody : kBackground;
        const double dx = x - truth.center_x;
        const double dy = y - truth.center_y;
        const double r = std::hypot(dx, dy);
        if (r > heart_clear)
          for (std::size_t li = 0; li < truth.landmarks.size(); ++li) {
            const auto& m = truth.landmarks[li];
            if (k < m.first || k > m.last) continue;
            const double lx = (x - m.x) / m.rx, ly = (y - m.y) / m.ry;
            if (lx * lx + ly * ly <= 1.0) v = li == 0 ? kVessel : kLandmark;
          }
        // Boundary markers hugging the wall: the outflow crescent on the basal
        // slice, the apical fat pad opposite it on the apex slice.
        const double facing = k == n ? truth.crescent_angle : truth.crescent_angle + std::numbers::pi;
        if ((k == n || k == 1) && r >= outer + kCrescentGap &&
            r <= outer + kCrescentGap + kCrescentWidth &&
            std::abs(angle_diff(std::atan2(dy, dx), facing)) <=
                (k == n ? kCrescentHalfAngle : kApexPadHalfAngle))
          v = kCrescent;
        if (r <= outer) v = r <= pool ? kPool : kWall;
        for (const auto& d : truth.distractors)
          if (std::hypot(x - d[0], y - d[1]) <= d[2]) v = kDistractor;
        v += static_cast<float>(opts.noise_sigma * rng.normal());
        img.at(y, x) = std::clamp(v, 0.0f, 1.0f);
      }
    }
    slices.push_back(std::move(img));
  }

  Phantom p;
  p.volume = make_volume(phantom_id(seed), std::move(slices), Normalization::None, 1.8, 1.8, 8.0);
  p.truth = std::move(truth);
  return p;
}

VolumeStack generate_phantom(std::uint64_t seed, int n, const PhantomOptions& opts) {
  return generate_phantom_with_truth(seed, n, opts).volume;
}

// ---------------------------------------------------------------------------
// Augmentation

void AugmentationSpec::validate() const {
  if (rotation_min < -45.0 || rotation_max > 45.0 || rotation_min > rotation_max)
    throw InvalidConfig("rotation range must lie within [-45, 45] degrees");
  if (brightness_min < 0.0 || brightness_max > 1.0 || brightness_min > brightness_max)
    throw InvalidConfig("brightness range must lie within [0, 1]");
}

AugmentationParams draw_augmentation(const AugmentationSpec& spec, Rng& rng) {
  spec.validate();
  AugmentationParams p;
  p.rotation_deg = rng.uniform(spec.rotation_min, spec.rotation_max);
  p.hflip = spec.allow_hflip && rng.bernoulli(0.5);
  p.vflip = spec.allow_vflip && rng.bernoulli(0.5);
  const double magnitude = rng.uniform(spec.brightness_min, spec.brightness_max);
  p.brightness_delta = rng.bernoulli(0.5) ? magnitude : -magnitude;
  return p;
}

TripletSample apply_augmentation(const TripletSample& t, const AugmentationParams& p) {
  TripletSample out = t;
  for (int z = 0; z < t.stack.depth; ++z) {
    Image img = rotate(slice_of(t.stack, z), p.rotation_deg);
    if (p.hflip) img = flip_horizontal(img);
    if (p.vflip) img = flip_vertical(img);
    if (p.brightness_delta != 0.0)
      for (float& v : img.pixels) v += static_cast<float>(p.brightness_delta);
    for (float& v : img.pixels) v = std::clamp(v, 0.0f, 1.0f);
    set_slice(out.stack, z, img);
  }
  return out;
}

TripletSample augment(const TripletSample& t, const AugmentationSpec& spec) {
  Rng rng(derive_seed(spec.seed, t.id));
  TripletSample out = apply_augmentation(t, draw_augmentation(spec, rng));
  out.id = t.id + "#aug";
  return out;
}

// ---------------------------------------------------------------------------
// Folds

std::vector<std::size_t> TaskDataset::fold_indices(int fold) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < samples.size(); ++i)
    if (fold_of[i] == fold) out.push_back(i);
  return out;
}

std::vector<std::size_t> TaskDataset::indices_excluding(int fold) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < samples.size(); ++i)
    if (fold_of[i] != fold) out.push_back(i);
  return out;
}

void TaskDataset::validate() const {
  if (fold_of.size() != samples.size()) throw InvalidSpec("fold assignment size mismatch");
  std::size_t pos = 0;
  std::map<std::string, int> volume_fold;
  std::map<std::string, std::array<int, 2>> per_volume;  // [N, P]
  std::set<std::string> ids;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    if (s.task != task) throw InvalidSpec("sample " + s.id + " belongs to another task");
    if (!ids.insert(s.id).second) throw InvalidSpec("duplicate sample id " + s.id);
    if (fold_of[i] < 0 || fold_of[i] >= k) throw InvalidSpec("fold index out of range");
    auto [it, inserted] = volume_fold.emplace(s.source_volume_id, fold_of[i]);
    if (!inserted && it->second != fold_of[i])
      throw InvalidSpec("volume " + s.source_volume_id + " straddles folds");
    per_volume[s.source_volume_id][s.label == Label::Positive ? 1 : 0]++;
    if (s.label == Label::Positive) ++pos;
  }
  if (pos * 2 != samples.size()) throw InvalidSpec("positive/negative counts differ");
  for (const auto& [vol, counts] : per_volume)
    if (counts[0] != counts[1]) throw InvalidSpec("volume " + vol + " lacks a sibling triplet");
}

TaskDataset make_folds(std::vector<TripletSample> samples, int k, std::uint64_t seed) {
  if (k < 2) throw InvalidConfig("k must be at least 2");
  if (samples.empty()) throw InvalidConfig("no samples to split");
  const Task task = samples.front().task;
  for (const auto& s : samples)
    if (s.task != task) throw InvalidConfig("samples mix apex and basal tasks");

  std::vector<std::string> volumes;
  for (const auto& s : samples) volumes.push_back(s.source_volume_id);
  std::sort(volumes.begin(), volumes.end());
  volumes.erase(std::unique(volumes.begin(), volumes.end()), volumes.end());
  if (static_cast<int>(volumes.size()) < k)
    throw TooFewVolumes(std::to_string(volumes.size()) + " volumes cannot fill " +
                        std::to_string(k) + " folds");

  Rng rng(derive_seed(seed, "folds"));
  for (std::size_t i = volumes.size(); i > 1; --i) std::swap(volumes[i - 1], volumes[rng.below(i)]);
  std::map<std::string, int> fold_of_volume;
  for (std::size_t i = 0; i < volumes.size(); ++i)
    fold_of_volume[volumes[i]] = static_cast<int>(i % static_cast<std::size_t>(k));

  TaskDataset ds;
  ds.task = task;
  ds.k = k;
  ds.fold_of.reserve(samples.size());
  for (const auto& s : samples) ds.fold_of.push_back(fold_of_volume.at(s.source_volume_id));
  ds.samples = std::move(samples);
  return ds;
}

}  // namespace cmrqc::dataprep
