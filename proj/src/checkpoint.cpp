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

#include "cmrqc/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <ctime>
#include <fstream>

#include "cmrqc/common.hpp"

namespace cmrqc {

namespace {

constexpr char kMagic[8] = {'C', 'M', 'R', 'Q', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

}  // namespace

std::string ModelCheckpoint::weights_digest() const {
  return hex64(fnv1a(std::span(reinterpret_cast<const std::uint8_t*>(weights.data()),
                               weights.size() * sizeof(double))));
}

std::string ModelCheckpoint::fingerprint() const {
  return hex64(fnv1a(arch_fingerprint + ":" + weights_digest()));
}

nlohmann::ordered_json ModelCheckpoint::metadata() const {
  nlohmann::ordered_json j;
  j["kind"] = kind;
  j["task"] = task;
  j["architecture"] = architecture;
  j["arch_fingerprint"] = arch_fingerprint;
  j["train_config"] = train_config;
  j["metrics_at_save"] = metrics_at_save;
  j["created"] = created;
  j["weight_count"] = weights.size();
  j["weights_digest"] = weights_digest();
  return j;
}

std::string architecture_fingerprint(const std::string& kind, const nlohmann::ordered_json& arch) {
  return hex64(fnv1a(kind + "|" + arch.dump()));
}

void save_checkpoint(const std::string& path, const ModelCheckpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IOFailure("cannot write checkpoint " + path);
  const std::string meta = ckpt.metadata().dump();
  const std::uint64_t meta_len = meta.size();
  const std::uint64_t count = ckpt.weights.size();
  out.write(kMagic, sizeof kMagic);
  out.write(reinterpret_cast<const char*>(&kVersion), sizeof kVersion);
  out.write(reinterpret_cast<const char*>(&meta_len), sizeof meta_len);
  out.write(meta.data(), static_cast<std::streamsize>(meta.size()));
  out.write(reinterpret_cast<const char*>(&count), sizeof count);
  out.write(reinterpret_cast<const char*>(ckpt.weights.data()),
            static_cast<std::streamsize>(count * sizeof(double)));
  if (!out) throw IOFailure("short write to checkpoint " + path);
}

ModelCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UnreadableFile("cannot open checkpoint " + path);
  char magic[8];
  std::uint32_t version = 0;
  std::uint64_t meta_len = 0;
  in.read(magic, sizeof magic);
  in.read(reinterpret_cast<char*>(&version), sizeof version);
  in.read(reinterpret_cast<char*>(&meta_len), sizeof meta_len);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0 || version != kVersion ||
      meta_len > (1u << 26))
    throw UnreadableFile("not a checkpoint archive: " + path);
  std::string meta(meta_len, '\0');
  in.read(meta.data(), static_cast<std::streamsize>(meta_len));
  std::uint64_t count = 0;
  in.read(reinterpret_cast<char*>(&count), sizeof count);
  if (!in || count > (1ull << 32)) throw UnreadableFile("truncated checkpoint " + path);

  ModelCheckpoint ckpt;
  ckpt.weights.resize(count);
  in.read(reinterpret_cast<char*>(ckpt.weights.data()),
          static_cast<std::streamsize>(count * sizeof(double)));
  if (!in) throw UnreadableFile("truncated checkpoint weights " + path);

  try {
    const auto j = nlohmann::ordered_json::parse(meta);
    ckpt.kind = j.at("kind").get<std::string>();
    ckpt.task = j.at("task").get<std::string>();
    ckpt.architecture = j.at("architecture");
    ckpt.arch_fingerprint = j.at("arch_fingerprint").get<std::string>();
    ckpt.train_config = j.at("train_config");
    ckpt.metrics_at_save = j.at("metrics_at_save").get<std::map<std::string, double>>();
    ckpt.created = j.value("created", "");
  } catch (const nlohmann::json::exception& e) {
    throw UnreadableFile("bad checkpoint metadata in " + path + ": " + e.what());
  }
  if (architecture_fingerprint(ckpt.kind, ckpt.architecture) != ckpt.arch_fingerprint)
    throw CheckpointArchMismatch("stored fingerprint does not match architecture in " + path);
  return ckpt;
}

std::string creation_stamp() {
  std::time_t t = std::time(nullptr);
  if (const char* env = std::getenv("SOURCE_DATE_EPOCH")) t = std::strtoll(env, nullptr, 10);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

}  // namespace cmrqc
