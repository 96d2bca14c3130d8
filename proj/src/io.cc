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

#include "taggant/io.h"

#include <openssl/evp.h>
#include <openssl/sha.h>

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "taggant/error.h"

namespace taggant::io {
namespace {

template <typename T>
T ToLittle(T v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    auto bytes = std::bit_cast<std::array<std::uint8_t, sizeof(T)>>(v);
    std::reverse(bytes.begin(), bytes.end());
    return std::bit_cast<T>(bytes);
  }
}

template <typename T>
Bytes EncodeScalars(std::span<const T> values) {
  Bytes out(values.size() * sizeof(T));
  for (std::size_t i = 0; i < values.size(); ++i) {
    const T v = ToLittle(values[i]);
    std::memcpy(out.data() + i * sizeof(T), &v, sizeof(T));
  }
  return out;
}

template <typename T>
std::vector<T> DecodeScalars(std::span<const std::uint8_t> bytes) {
  if (bytes.size() % sizeof(T) != 0) {
    throw DataIntegrityError("blob length " + std::to_string(bytes.size()) +
                             " is not a multiple of " + std::to_string(sizeof(T)));
  }
  std::vector<T> out(bytes.size() / sizeof(T));
  for (std::size_t i = 0; i < out.size(); ++i) {
    T v;
    std::memcpy(&v, bytes.data() + i * sizeof(T), sizeof(T));
    out[i] = ToLittle(v);
  }
  return out;
}

}  // namespace

std::string Sha256Hex(std::span<const std::uint8_t> bytes) {
  unsigned char digest[SHA256_DIGEST_LENGTH];
  SHA256(bytes.data(), bytes.size(), digest);
  static const char* kHex = "0123456789abcdef";
  std::string out;
  out.reserve(2 * SHA256_DIGEST_LENGTH);
  for (unsigned char c : digest) {
    out.push_back(kHex[c >> 4]);
    out.push_back(kHex[c & 15]);
  }
  return out;
}

std::string Sha256Hex(std::string_view text) {
  return Sha256Hex(std::span<const std::uint8_t>(
      reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::string ConfigHash(const Json& config) { return Sha256Hex(config.dump()); }

std::string Base64Encode(std::span<const std::uint8_t> bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(),
                                static_cast<int>(bytes.size()));
  out.resize(n);
  return out;
}

Bytes Base64Decode(std::string_view text) {
  if (text.size() % 4 != 0) throw DataIntegrityError("malformed base64 payload");
  Bytes out(3 * (text.size() / 4));
  const int n = EVP_DecodeBlock(out.data(), reinterpret_cast<const unsigned char*>(text.data()),
                                static_cast<int>(text.size()));
  if (n < 0) throw DataIntegrityError("malformed base64 payload");
  std::size_t padding = 0;
  if (!text.empty() && text.back() == '=') ++padding;
  if (text.size() > 1 && text[text.size() - 2] == '=') ++padding;
  out.resize(static_cast<std::size_t>(n) - padding);
  return out;
}

Bytes EncodeF64(std::span<const double> values) { return EncodeScalars(values); }
std::vector<double> DecodeF64(std::span<const std::uint8_t> bytes) {
  return DecodeScalars<double>(bytes);
}
Bytes EncodeF32(std::span<const float> values) { return EncodeScalars(values); }
std::vector<float> DecodeF32(std::span<const std::uint8_t> bytes) {
  return DecodeScalars<float>(bytes);
}
Bytes EncodeI32(std::span<const std::int32_t> values) { return EncodeScalars(values); }
std::vector<std::int32_t> DecodeI32(std::span<const std::uint8_t> bytes) {
  return DecodeScalars<std::int32_t>(bytes);
}

void WriteContainer(const std::filesystem::path& path, Json header,
                    std::span<const std::uint8_t> blob) {
  header["blob_bytes"] = blob.size();
  header["blob_sha256"] = Sha256Hex(blob);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + path.string());
  const std::string line = header.dump() + "\n";
  out.write(line.data(), static_cast<std::streamsize>(line.size()));
  out.write(reinterpret_cast<const char*>(blob.data()), static_cast<std::streamsize>(blob.size()));
  if (!out) throw ConfigError("write failed for " + path.string());
}

Container ReadContainer(const std::filesystem::path& path, std::string_view kind,
                        int format_version) {
  const Bytes raw = ReadBytes(path);
  const auto newline = std::find(raw.begin(), raw.end(), std::uint8_t{'\n'});
  if (newline == raw.end()) {
    throw ChecksumError(path.string() + ": missing header terminator (truncated file?)");
  }
  Container c;
  try {
    c.header = Json::parse(raw.begin(), newline);
  } catch (const Json::exception& e) {
    throw DataIntegrityError(path.string() + ": corrupt header: " + e.what());
  }
  if (c.header.value("kind", "") != kind) {
    throw DataIntegrityError(path.string() + ": expected a '" + std::string(kind) +
                             "' file, found '" + c.header.value("kind", "") + "'");
  }
  const int version = c.header.value("format_version", -1);
  if (version != format_version) {
    throw VersionError(path.string() + ": format version " + std::to_string(version) +
                       " is not supported (expected " + std::to_string(format_version) + ")");
  }
  c.blob.assign(newline + 1, raw.end());
  const auto expected_bytes = c.header.value("blob_bytes", std::uint64_t{0});
  if (c.blob.size() != expected_bytes ||
      Sha256Hex(c.blob) != c.header.value("blob_sha256", "")) {
    throw ChecksumError(path.string() + ": blob checksum mismatch (" +
                        std::to_string(c.blob.size()) + " of " +
                        std::to_string(expected_bytes) + " bytes)");
  }
  return c;
}

void WriteText(const std::filesystem::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
}

std::string ReadText(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Bytes ReadBytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + path.string());
  return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void WriteBytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Json ReadJson(const std::filesystem::path& path) {
  try {
    return Json::parse(ReadText(path));
  } catch (const Json::parse_error& e) {
    throw ConfigError(path.string() + ": invalid JSON: " + e.what());
  }
}

void WriteJson(const std::filesystem::path& path, const Json& value) {
  WriteText(path, value.dump(2) + "\n");
}

}  // namespace taggant::io
