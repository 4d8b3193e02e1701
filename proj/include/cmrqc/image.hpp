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

#include <cstddef>
#include <cstdint>
#include <vector>

namespace cmrqc {

inline constexpr int kStackDepth = 3;
inline constexpr int kInputSize = 128;

// Single 2D grayscale slice, row-major.
struct Image {
  int height = 0;
  int width = 0;
  std::vector<float> pixels;

  Image() = default;
  Image(int h, int w, float fill = 0.0f)
      : height(h), width(w), pixels(static_cast<std::size_t>(h) * w, fill) {}

  float& at(int y, int x) { return pixels[static_cast<std::size_t>(y) * width + x]; }
  float at(int y, int x) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
  bool operator==(const Image&) const = default;
};

// Dense depth x height x width grid, laid out [slice][y][x].
template <class T>
struct Grid3 {
  int depth = 0;
  int height = 0;
  int width = 0;
  std::vector<T> data;

  Grid3() = default;
  Grid3(int d, int h, int w, T fill = T{})
      : depth(d), height(h), width(w),
        data(static_cast<std::size_t>(d) * h * w, fill) {}

  std::size_t size() const { return data.size(); }
  std::size_t plane() const { return static_cast<std::size_t>(height) * width; }
  T& at(int z, int y, int x) {
    return data[(static_cast<std::size_t>(z) * height + y) * width + x];
  }
  const T& at(int z, int y, int x) const {
    return data[(static_cast<std::size_t>(z) * height + y) * width + x];
  }
  bool same_shape(const auto& o) const {
    return depth == o.depth && height == o.height && width == o.width;
  }
  bool operator==(const Grid3&) const = default;
};

// Three consecutive slices, intensities in [0,1].
using Stack = Grid3<float>;
// Binary voxel mask aligned with a Stack; values are 0 or 1.
using Mask = Grid3<std::uint8_t>;

Image slice_of(const Stack& s, int z);
void set_slice(Stack& s, int z, const Image& img);

// Center crop to the largest square, then bilinear resample to size x size.
Image resize_square(const Image& img, int size);
Image resize_bilinear(const Image& img, int out_h, int out_w);
Image center_crop_square(const Image& img);

// Rotation about the image center; positive degrees turn the content
// counter-clockwise as displayed (row 0 at the top). Bilinear, zero fill.
Image rotate(const Image& img, double degrees);
Image flip_horizontal(const Image& img);
Image flip_vertical(const Image& img);

}  // namespace cmrqc
