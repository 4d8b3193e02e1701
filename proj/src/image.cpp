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

#include "cmrqc/image.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace cmrqc {

Image slice_of(const Stack& s, int z) {
  Image img(s.height, s.width);
  std::copy_n(s.data.begin() + static_cast<std::ptrdiff_t>(z * s.plane()), s.plane(),
              img.pixels.begin());
  return img;
}

void set_slice(Stack& s, int z, const Image& img) {
  std::copy(img.pixels.begin(), img.pixels.end(),
            s.data.begin() + static_cast<std::ptrdiff_t>(z * s.plane()));
}

namespace {

// Bilinear sample at continuous pixel coordinates; outside -> fill.
float sample(const Image& img, double x, double y, float fill) {
  if (x < -0.5 || y < -0.5 || x > img.width - 0.5 || y > img.height - 0.5) return fill;
  x = std::clamp(x, 0.0, static_cast<double>(img.width - 1));
  y = std::clamp(y, 0.0, static_cast<double>(img.height - 1));
  const int x0 = static_cast<int>(std::floor(x));
  const int y0 = static_cast<int>(std::floor(y));
  const int x1 = std::min(x0 + 1, img.width - 1);
  const int y1 = std::min(y0 + 1, img.height - 1);
  const double fx = x - x0;
  const double fy = y - y0;
  const double top = img.at(y0, x0) * (1 - fx) + img.at(y0, x1) * fx;
  const double bot = img.at(y1, x0) * (1 - fx) + img.at(y1, x1) * fx;
  return static_cast<float>(top * (1 - fy) + bot * fy);
}

}  // namespace

Image center_crop_square(const Image& img) {
  const int side = std::min(img.height, img.width);
  const int y0 = (img.height - side) / 2;
  const int x0 = (img.width - side) / 2;
  Image out(side, side);
  for (int y = 0; y < side; ++y)
    for (int x = 0; x < side; ++x) out.at(y, x) = img.at(y0 + y, x0 + x);
  return out;
}

Image resize_bilinear(const Image& img, int out_h, int out_w) {
  if (img.height == out_h && img.width == out_w) return img;
  Image out(out_h, out_w);
  const double sy = static_cast<double>(img.height) / out_h;
  const double sx = static_cast<double>(img.width) / out_w;
  for (int y = 0; y < out_h; ++y) {
    // pixel-center alignment
    const double src_y = (y + 0.5) * sy - 0.5;
    for (int x = 0; x < out_w; ++x) {
      const double src_x = (x + 0.5) * sx - 0.5;
      out.at(y, x) = sample(img, std::clamp(src_x, 0.0, img.width - 1.0),
                            std::clamp(src_y, 0.0, img.height - 1.0), 0.0f);
    }
  }
  return out;
}

Image resize_square(const Image& img, int size) {
  return resize_bilinear(center_crop_square(img), size, size);
}

Image rotate(const Image& img, double degrees) {
  if (degrees == 0.0) return img;
  const double t = degrees * std::numbers::pi / 180.0;
  const double c = std::cos(t);
  const double s = std::sin(t);
  const double cx = (img.width - 1) / 2.0;
  const double cy = (img.height - 1) / 2.0;
  Image out(img.height, img.width);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      const double dx = x - cx;
      const double dy = y - cy;
      // inverse of the forward map (dx,dy) -> (dx c + dy s, -dx s + dy c)
      const double sx = cx + dx * c - dy * s;
      const double sy = cy + dx * s + dy * c;
      out.at(y, x) = sample(img, sx, sy, 0.0f);
    }
  }
  return out;
}

Image flip_horizontal(const Image& img) {
  Image out(img.height, img.width);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) out.at(y, x) = img.at(y, img.width - 1 - x);
  return out;
}

Image flip_vertical(const Image& img) {
  Image out(img.height, img.width);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) out.at(y, x) = img.at(img.height - 1 - y, x);
  return out;
}

}  // namespace cmrqc
