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

#include <unistd.h>

#include <algorithm>
#include <filesystem>
#include <string>

#include <gtest/gtest.h>

#include "taggant/error.h"
#include "taggant/io.h"
#include "taggant/keys.h"

namespace taggant {
namespace {

namespace fs = std::filesystem;

class KeysFiles : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("taggant_keys_" + std::to_string(::getpid()));
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  fs::path dir_;
};

KeySet Scored(const std::vector<double>& scores) {
  KeySet ks = GenerateKeys(static_cast<std::int64_t>(scores.size()), {1, 2, 2}, 5, 3);
  for (std::size_t i = 0; i < scores.size(); ++i) ks.keys[i].score = scores[i];
  return ks;
}

TEST(Keys, SameSeedSameKeys) {
  EXPECT_EQ(GenerateKeys(20, {3, 8, 8}, 10, 42), GenerateKeys(20, {3, 8, 8}, 10, 42));
  EXPECT_FALSE(GenerateKeys(20, {3, 8, 8}, 10, 42) == GenerateKeys(20, {3, 8, 8}, 10, 43));
}

TEST(Keys, PixelsAndLabelsInRange) {
  const KeySet ks = GenerateKeys(50, {3, 4, 4}, 7, 1);
  EXPECT_EQ(ks.size(), 50);
  EXPECT_EQ(ks.classes, 7);
  for (const auto& k : ks.keys) {
    ASSERT_EQ(static_cast<std::int64_t>(k.image.size()), ks.shape.numel());
    EXPECT_GE(k.label, 0);
    EXPECT_LT(k.label, 7);
    EXPECT_FALSE(k.score.has_value());
    for (double p : k.image) ASSERT_TRUE(p >= 0.0 && p <= 1.0);
  }
  EXPECT_EQ(ks.Image(3).shape(), (diff::Shape{3, 4, 4}));
}

TEST(Keys, SinglePixelMeanNearHalf) {
  const KeySet ks = GenerateKeys(10000, {1, 1, 1}, 10, 7);
  double mean = 0.0;
  for (const auto& k : ks.keys) mean += k.image[0] / ks.size();
  EXPECT_GE(mean, 0.49);
  EXPECT_LE(mean, 0.51);
}

TEST(Keys, BinaryLabelFractionNearHalf) {
  const KeySet ks = GenerateKeys(10000, {1, 1, 1}, 2, 8);
  double zeros = 0.0;
  for (const auto& k : ks.keys) zeros += k.label == 0 ? 1.0 / ks.size() : 0.0;
  EXPECT_GE(zeros, 0.48);
  EXPECT_LE(zeros, 0.52);
}

TEST(Keys, PixelHistogramPassesChiSquare) {
  const KeySet ks = GenerateKeys(1000, {1, 32, 32}, 10, 9);
  std::vector<double> counts(16, 0.0);
  double n = 0.0;
  for (const auto& k : ks.keys) {
    for (double p : k.image) {
      counts[std::min(15, static_cast<int>(p * 16))] += 1.0;
      n += 1.0;
    }
  }
  ASSERT_GE(n, 1e6);
  double chi2 = 0.0;
  for (double c : counts) chi2 += (c - n / 16) * (c - n / 16) / (n / 16);
  // Upper 0.001 quantile of chi-square with 15 degrees of freedom.
  EXPECT_LT(chi2, 37.697);
}

TEST(Keys, LabelsDoNotDependOnImageShape) {
  // Labels come from their own stream, so changing the pixel count leaves them alone.
  EXPECT_EQ(GenerateKeys(30, {1, 2, 2}, 10, 5).Labels(), GenerateKeys(30, {3, 8, 8}, 10, 5).Labels());
}

TEST(Keys, InvalidGenerationArguments) {
  EXPECT_THROW(GenerateKeys(0, {3, 8, 8}, 10, 1), ConfigError);
  EXPECT_THROW(GenerateKeys(5, {3, 8, 8}, 1, 1), ConfigError);
}

TEST(Keys, SelectAllKeepsKeyset) {
  const KeySet ks = Scored({0.5, -0.2, 0.1});
  const KeySet out = SelectBestKeys(ks, 3);
  ASSERT_EQ(out.size(), 3);
  for (int i = 0; i < 3; ++i) EXPECT_EQ(out.keys[i].image, ks.keys[i].image);
}

TEST(Keys, SelectKeepsLowestScoresInOrder) {
  const KeySet ks = Scored({3, 1, 2});
  const KeySet out = SelectBestKeys(ks, 2);
  ASSERT_EQ(out.size(), 2);
  EXPECT_EQ(out.keys[0].image, ks.keys[1].image);
  EXPECT_EQ(out.keys[1].image, ks.keys[2].image);
  EXPECT_EQ(out.metadata["selected_indices"], io::Json({1, 2}));
}

TEST(Keys, SelectBreaksTiesByIndex) {
  const KeySet out = SelectBestKeys(Scored({1, 0, 1, 1}), 2);
  EXPECT_EQ(out.metadata["selected_indices"], io::Json({0, 1}));
}

TEST(Keys, SelectedScoresAreSortedPrefix) {
  std::vector<double> scores = {0.3, -0.9, 0.0, -0.1, 0.7, -0.5, 0.2, -0.4};
  const KeySet out = SelectBestKeys(Scored(scores), 5);
  std::vector<double> got;
  for (const auto& k : out.keys) got.push_back(*k.score);
  std::sort(got.begin(), got.end());
  std::sort(scores.begin(), scores.end());
  EXPECT_EQ(got, std::vector<double>(scores.begin(), scores.begin() + 5));
}

TEST(Keys, SelectRequiresScoresAndValidCount) {
  KeySet ks = Scored({1, 2, 3});
  EXPECT_THROW(SelectBestKeys(ks, 4), ConfigError);
  ks.keys[1].score.reset();
  EXPECT_THROW(SelectBestKeys(ks, 2), ConfigError);
}

TEST_F(KeysFiles, SaveLoadRoundTrip) {
  KeySet ks = GenerateKeys(20, {3, 8, 8}, 10, 4);
  ks.keys[2].score = -0.123456789012345678;
  ks.keys[5].score = 1.0 / 3.0;
  SaveKeyset(ks, dir_ / "k.bin");
  const KeySet back = LoadKeyset(dir_ / "k.bin");
  EXPECT_EQ(back, ks);
  EXPECT_EQ(*back.keys[2].score, *ks.keys[2].score);
  EXPECT_FALSE(back.keys[0].score.has_value());
  EXPECT_EQ(back.classes, 10);
  EXPECT_EQ(back.shape, (ImageShape{3, 8, 8}));
}

TEST_F(KeysFiles, TruncatedFileIsChecksumError) {
  SaveKeyset(GenerateKeys(4, {3, 8, 8}, 10, 4), dir_ / "k.bin");
  auto bytes = io::ReadBytes(dir_ / "k.bin");
  bytes.resize(bytes.size() - 100);
  io::WriteBytes(dir_ / "k.bin", bytes);
  EXPECT_THROW(LoadKeyset(dir_ / "k.bin"), ChecksumError);
}

TEST_F(KeysFiles, FlippedBlobByteIsChecksumError) {
  SaveKeyset(GenerateKeys(4, {3, 8, 8}, 10, 4), dir_ / "k.bin");
  auto bytes = io::ReadBytes(dir_ / "k.bin");
  bytes.back() ^= 0x01;
  io::WriteBytes(dir_ / "k.bin", bytes);
  EXPECT_THROW(LoadKeyset(dir_ / "k.bin"), ChecksumError);
}

TEST_F(KeysFiles, WrongVersionIsVersionError) {
  SaveKeyset(GenerateKeys(4, {3, 8, 8}, 10, 4), dir_ / "k.bin");
  const std::string text = io::ReadText(dir_ / "k.bin");
  const std::string from = "\"format_version\":1";
  const auto at = text.find(from);
  ASSERT_NE(at, std::string::npos);
  std::string edited = text;
  edited.replace(at, from.size(), "\"format_version\":9");
  io::WriteText(dir_ / "k.bin", edited);
  EXPECT_THROW(LoadKeyset(dir_ / "k.bin"), VersionError);
}

TEST_F(KeysFiles, OtherArtifactKindIsRejected) {
  io::WriteContainer(dir_ / "x.bin", {{"kind", "model"}, {"format_version", 1}}, io::Bytes{});
  EXPECT_THROW(LoadKeyset(dir_ / "x.bin"), DataIntegrityError);
}

}  // namespace
}  // namespace taggant
