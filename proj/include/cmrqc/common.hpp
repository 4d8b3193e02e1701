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
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>

namespace cmrqc {

// Every failure surfaced by the library derives from Error so callers (and
// the CLI) can catch one type and still report the concrete kind().
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(kind + ": " + what), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

#define CMRQC_DEFINE_ERROR(Name)                                   \
  class Name : public ::cmrqc::Error {                             \
   public:                                                         \
    explicit Name(const std::string& what) : Error(#Name, what) {} \
  }

CMRQC_DEFINE_ERROR(UnreadableFile);
CMRQC_DEFINE_ERROR(SliceCountOutOfRange);
CMRQC_DEFINE_ERROR(NonUniformSliceShape);
CMRQC_DEFINE_ERROR(InvalidSliceCount);
CMRQC_DEFINE_ERROR(TooFewVolumes);
CMRQC_DEFINE_ERROR(InvalidSpec);
CMRQC_DEFINE_ERROR(InvalidConfig);
CMRQC_DEFINE_ERROR(EmptyTrainingSet);
CMRQC_DEFINE_ERROR(NonFiniteLoss);
CMRQC_DEFINE_ERROR(ShapeMismatch);
CMRQC_DEFINE_ERROR(CheckpointArchMismatch);
CMRQC_DEFINE_ERROR(DimensionMismatch);
CMRQC_DEFINE_ERROR(EmptyCorpus);
CMRQC_DEFINE_ERROR(LengthMismatch);
CMRQC_DEFINE_ERROR(IOFailure);
CMRQC_DEFINE_ERROR(MissingArtifact);

// std::mt19937_64 is bit-exact across standard libraries but the
// std::*_distribution adaptors are not, so draws are derived from raw bits.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next();
  double uniform();                      // [0, 1)
  double uniform(double lo, double hi);  // [lo, hi)
  double normal();                       // N(0, 1), Box-Muller
  bool bernoulli(double p);
  std::size_t below(std::size_t n);      // [0, n)

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Derives an independent seed for a named sub-stream.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream);

// 64-bit FNV-1a; used for fingerprints and manifest hashes.
std::uint64_t fnv1a(std::span<const std::uint8_t> bytes,
                    std::uint64_t h = 0xcbf29ce484222325ULL);
std::uint64_t fnv1a(std::string_view text,
                    std::uint64_t h = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t v);

// Hash of a whole file, hex-encoded. Throws UnreadableFile.
std::string file_digest(const std::string& path);

void warn(const std::string& message);

}  // namespace cmrqc
