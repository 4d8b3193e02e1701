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

#include <span>
#include <string>
#include <vector>

#include "cmrqc/image.hpp"

namespace cmrqc::io {

// A decoded scalar volume, [slice][y][x] float32.
struct RawVolume {
  int slices = 0;
  int height = 0;
  int width = 0;
  double spacing_x = 1.0;
  double spacing_y = 1.0;
  double slice_thickness = 1.0;
  std::vector<float> data;
};

// NIfTI-1 single-file reader (.nii or .nii.gz, either byte order). Only
// the first frame of a 4D series is decoded. Throws UnreadableFile.
RawVolume read_nifti(const std::string& path);
// Writes little-endian NIfTI-1 float32; gzip-compressed when the path ends
// in ".gz".
void write_nifti(const std::string& path, const RawVolume& v);

// Raw float32 little-endian array with a JSON sidecar next to it
// ("x.raw" + "x.json") holding shape [slices, height, width], spacing
// [x, y] and slice_thickness.
RawVolume read_raw(const std::string& path);
void write_raw(const std::string& path, const RawVolume& v);

std::string sidecar_path(const std::string& raw_path);

// Stacks and masks share the raw layout (depth = slices).
void write_stack(const std::string& path, const Stack& s);
Stack read_stack(const std::string& path);
void write_mask(const std::string& path, const Mask& m);
Mask read_mask(const std::string& path);

// Dispatches on extension: .nii / .nii.gz / .raw.
RawVolume read_volume_file(const std::string& path);
bool is_volume_file(const std::string& path);

}  // namespace cmrqc::io
