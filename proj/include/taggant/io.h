// Copyright 2026 The Taggant Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef TAGGANT_IO_H_
#define TAGGANT_IO_H_

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace taggant::io {

using Json = nlohmann::json;
using Bytes = std::vector<std::uint8_t>;

std::string Sha256Hex(std::span<const std::uint8_t> bytes);
std::string Sha256Hex(std::string_view text);
// Hash of the canonical (sorted-key, compact) serialization.
std::string ConfigHash(const Json& config);

std::string Base64Encode(std::span<const std::uint8_t> bytes);
Bytes Base64Decode(std::string_view text);

// Little-endian encodings.
Bytes EncodeF64(std::span<const double> values);
std::vector<double> DecodeF64(std::span<const std::uint8_t> bytes);
Bytes EncodeF32(std::span<const float> values);
std::vector<float> DecodeF32(std::span<const std::uint8_t> bytes);
Bytes EncodeI32(std::span<const std::int32_t> values);
std::vector<std::int32_t> DecodeI32(std::span<const std::uint8_t> bytes);

// Artifact container: one line of JSON header, then a raw blob. The header
// carries "kind", "format_version", "blob_bytes" and "blob_sha256"; reading
// verifies all four.
void WriteContainer(const std::filesystem::path& path, Json header,
                    std::span<const std::uint8_t> blob);
struct Container {
  Json header;
  Bytes blob;
};
Container ReadContainer(const std::filesystem::path& path, std::string_view kind,
                        int format_version);

void WriteText(const std::filesystem::path& path, std::string_view text);
std::string ReadText(const std::filesystem::path& path);
Bytes ReadBytes(const std::filesystem::path& path);
void WriteBytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
Json ReadJson(const std::filesystem::path& path);
// Pretty-printed with a trailing newline.
void WriteJson(const std::filesystem::path& path, const Json& value);

}  // namespace taggant::io

#endif  // TAGGANT_IO_H_
