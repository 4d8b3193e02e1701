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

#include "cmrqc/volume_io.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <nlohmann/json.hpp>

#include "cmrqc/common.hpp"

namespace cmrqc::io {

namespace {

constexpr int kNiftiHeaderSize = 348;

bool ends_with(const std::string& s, std::string_view suffix) {
  return s.size() >= suffix.size() &&
         s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

std::vector<std::uint8_t> read_all_maybe_gz(const std::string& path) {
  gzFile f = gzopen(path.c_str(), "rb");
  if (!f) throw UnreadableFile("cannot open " + path);
  std::vector<std::uint8_t> out;
  std::uint8_t buf[1 << 16];
  int got = 0;
  while ((got = gzread(f, buf, sizeof buf)) > 0) out.insert(out.end(), buf, buf + got);
  const bool failed = got < 0;
  gzclose(f);
  if (failed) throw UnreadableFile("decompression failed for " + path);
  return out;
}

template <class T>
T load(const std::uint8_t* p, bool swap) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  if (swap && sizeof(T) > 1) {
    auto* b = reinterpret_cast<std::uint8_t*>(&v);
    std::reverse(b, b + sizeof(T));
  }
  return v;
}

template <class T>
void store(std::vector<std::uint8_t>& buf, std::size_t off, T v) {
  static_assert(std::endian::native == std::endian::little);
  std::memcpy(buf.data() + off, &v, sizeof(T));
}

}  // namespace

RawVolume read_nifti(const std::string& path) {
  const auto bytes = read_all_maybe_gz(path);
  if (bytes.size() < kNiftiHeaderSize) throw UnreadableFile("truncated NIfTI header: " + path);
  const auto* h = bytes.data();
  bool swap = false;
  if (load<std::int32_t>(h, false) != kNiftiHeaderSize) {
    if (load<std::int32_t>(h, true) != kNiftiHeaderSize)
      throw UnreadableFile("not a NIfTI-1 file: " + path);
    swap = true;
  }
  std::int16_t dim[8];
  for (int i = 0; i < 8; ++i) dim[i] = load<std::int16_t>(h + 40 + 2 * i, swap);
  if (dim[0] < 2 || dim[0] > 7) throw UnreadableFile("bad dim[0] in " + path);
  const int width = dim[1];
  const int height = dim[2];
  const int slices = dim[0] >= 3 ? dim[3] : 1;
  if (width <= 0 || height <= 0 || slices <= 0)
    throw UnreadableFile("non-positive dimension in " + path);
  const auto datatype = load<std::int16_t>(h + 70, swap);
  float pixdim[8];
  for (int i = 0; i < 8; ++i) pixdim[i] = load<float>(h + 76 + 4 * i, swap);
  const auto vox_offset = static_cast<std::size_t>(load<float>(h + 108, swap));
  float slope = load<float>(h + 112, swap);
  const float inter = load<float>(h + 116, swap);
  if (slope == 0.0f || !std::isfinite(slope)) slope = 1.0f;

  std::size_t elem = 0;
  switch (datatype) {
    case 2: case 256: elem = 1; break;
    case 4: case 512: elem = 2; break;
    case 8: case 16: case 768: elem = 4; break;
    case 64: elem = 8; break;
    default: throw UnreadableFile("unsupported NIfTI datatype " + std::to_string(datatype));
  }
  const std::size_t count = static_cast<std::size_t>(width) * height * slices;
  const std::size_t offset = std::max<std::size_t>(vox_offset, kNiftiHeaderSize);
  if (bytes.size() < offset + count * elem) throw UnreadableFile("truncated voxel data: " + path);

  RawVolume v;
  v.width = width;
  v.height = height;
  v.slices = slices;
  v.spacing_x = pixdim[1] > 0 ? pixdim[1] : 1.0;
  v.spacing_y = pixdim[2] > 0 ? pixdim[2] : 1.0;
  v.slice_thickness = pixdim[3] > 0 ? pixdim[3] : 1.0;
  v.data.resize(count);
  const std::uint8_t* p = bytes.data() + offset;
  for (std::size_t i = 0; i < count; ++i, p += elem) {
    double x = 0;
    switch (datatype) {
      case 2: x = *p; break;
      case 256: x = static_cast<std::int8_t>(*p); break;
      case 4: x = load<std::int16_t>(p, swap); break;
      case 512: x = load<std::uint16_t>(p, swap); break;
      case 8: x = load<std::int32_t>(p, swap); break;
      case 768: x = load<std::uint32_t>(p, swap); break;
      case 16: x = load<float>(p, swap); break;
      case 64: x = load<double>(p, swap); break;
    }
    v.data[i] = static_cast<float>(x * slope + inter);
  }
  return v;
}

void write_nifti(const std::string& path, const RawVolume& v) {
  const std::size_t count = v.data.size();
  std::vector<std::uint8_t> buf(352 + count * 4, 0);
  store<std::int32_t>(buf, 0, kNiftiHeaderSize);
  const std::int16_t dim[8] = {3, static_cast<std::int16_t>(v.width),
                               static_cast<std::int16_t>(v.height),
                               static_cast<std::int16_t>(v.slices), 1, 1, 1, 1};
  for (int i = 0; i < 8; ++i) store<std::int16_t>(buf, 40 + 2 * i, dim[i]);
  store<std::int16_t>(buf, 70, 16);
  store<std::int16_t>(buf, 72, 32);
  const float pixdim[8] = {1.0f, static_cast<float>(v.spacing_x),
                           static_cast<float>(v.spacing_y),
                           static_cast<float>(v.slice_thickness), 1, 1, 1, 1};
  for (int i = 0; i < 8; ++i) store<float>(buf, 76 + 4 * i, pixdim[i]);
  store<float>(buf, 108, 352.0f);
  store<float>(buf, 112, 1.0f);
  std::memcpy(buf.data() + 344, "n+1\0", 4);
  std::memcpy(buf.data() + 352, v.data.data(), count * 4);

  if (ends_with(path, ".gz")) {
    gzFile f = gzopen(path.c_str(), "wb6");
    if (!f) throw IOFailure("cannot write " + path);
    const int wrote = gzwrite(f, buf.data(), static_cast<unsigned>(buf.size()));
    gzclose(f);
    if (wrote != static_cast<int>(buf.size())) throw IOFailure("short write " + path);
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IOFailure("cannot write " + path);
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!out) throw IOFailure("short write " + path);
}

std::string sidecar_path(const std::string& raw_path) {
  if (ends_with(raw_path, ".raw")) return raw_path.substr(0, raw_path.size() - 4) + ".json";
  return raw_path + ".json";
}

RawVolume read_raw(const std::string& path) {
  std::ifstream meta_in(sidecar_path(path));
  if (!meta_in) throw UnreadableFile("missing sidecar for " + path);
  nlohmann::json meta;
  try {
    meta_in >> meta;
  } catch (const nlohmann::json::exception& e) {
    throw UnreadableFile("bad sidecar for " + path + ": " + e.what());
  }
  RawVolume v;
  try {
    const auto& shape = meta.at("shape");
    if (shape.size() != 3) throw UnreadableFile("sidecar shape must have 3 entries: " + path);
    v.slices = shape[0].get<int>();
    v.height = shape[1].get<int>();
    v.width = shape[2].get<int>();
    if (meta.contains("spacing")) {
      v.spacing_x = meta["spacing"][0].get<double>();
      v.spacing_y = meta["spacing"][1].get<double>();
    }
    v.slice_thickness = meta.value("slice_thickness", 1.0);
  } catch (const nlohmann::json::exception& e) {
    throw UnreadableFile("bad sidecar for " + path + ": " + e.what());
  }
  if (v.slices <= 0 || v.height <= 0 || v.width <= 0)
    throw UnreadableFile("non-positive shape in sidecar of " + path);
  const std::size_t count = static_cast<std::size_t>(v.slices) * v.height * v.width;
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UnreadableFile("cannot open " + path);
  v.data.resize(count);
  in.read(reinterpret_cast<char*>(v.data.data()), static_cast<std::streamsize>(count * 4));
  if (static_cast<std::size_t>(in.gcount()) != count * 4)
    throw UnreadableFile("raw payload shorter than sidecar shape: " + path);
  return v;
}

void write_raw(const std::string& path, const RawVolume& v) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IOFailure("cannot write " + path);
  out.write(reinterpret_cast<const char*>(v.data.data()),
            static_cast<std::streamsize>(v.data.size() * 4));
  if (!out) throw IOFailure("short write " + path);
  nlohmann::ordered_json meta;
  meta["shape"] = {v.slices, v.height, v.width};
  meta["spacing"] = {v.spacing_x, v.spacing_y};
  meta["slice_thickness"] = v.slice_thickness;
  meta["dtype"] = "float32";
  meta["endianness"] = "little";
  std::ofstream side(sidecar_path(path));
  if (!side) throw IOFailure("cannot write " + sidecar_path(path));
  side << meta.dump(2) << '\n';
}

void write_stack(const std::string& path, const Stack& s) {
  RawVolume v;
  v.slices = s.depth;
  v.height = s.height;
  v.width = s.width;
  v.data = s.data;
  write_raw(path, v);
}

Stack read_stack(const std::string& path) {
  RawVolume v = read_raw(path);
  Stack s(v.slices, v.height, v.width);
  s.data = std::move(v.data);
  return s;
}

void write_mask(const std::string& path, const Mask& m) {
  RawVolume v;
  v.slices = m.depth;
  v.height = m.height;
  v.width = m.width;
  v.data.assign(m.data.begin(), m.data.end());
  write_raw(path, v);
}

Mask read_mask(const std::string& path) {
  const RawVolume v = read_raw(path);
  Mask m(v.slices, v.height, v.width);
  for (std::size_t i = 0; i < m.size(); ++i) m.data[i] = v.data[i] >= 0.5f ? 1 : 0;
  return m;
}

bool is_volume_file(const std::string& path) {
  return ends_with(path, ".nii") || ends_with(path, ".nii.gz") || ends_with(path, ".raw");
}

RawVolume read_volume_file(const std::string& path) {
  if (ends_with(path, ".raw")) return read_raw(path);
  if (ends_with(path, ".nii") || ends_with(path, ".nii.gz")) return read_nifti(path);
  throw UnreadableFile("unrecognized volume extension: " + path);
}

}  // namespace cmrqc::io
