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

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <set>
#include <string>

#include <gtest/gtest.h>

#include "taggant/dataset.h"
#include "taggant/io.h"
#include "taggant/keys.h"

namespace taggant {
namespace {

namespace fs = std::filesystem;

// One shared workspace: later tests reuse the artifacts of earlier steps.
class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = fs::temp_directory_path() / ("taggant_cli_" + std::to_string(::getpid()));
    fs::remove_all(root_);
    fs::create_directories(root_ / "secret");
    fs::create_directories(root_ / "models");
    ASSERT_EQ(Run("make-dataset --classes 4 --train-count 240 --val-count 40 --height 8 "
                  "--width 8 --seed 3 --out-train " + P("data/train") + " --out-val " +
                  P("data/val")),
              0);
    ASSERT_EQ(Run("gen-keys --dataset " + P("data/train") + " --count 4 --seed 5 --out " +
                  P("secret/keys.bin")),
              0);
    ASSERT_EQ(Run("train --train " + P("data/train") + " --val " + P("data/val") +
                  " --arch mlp --epochs 3 --batch-size 32 --seed 1 --out " +
                  P("models/alice.bin") + " --report " + P("models/alice.json")),
              0);
  }
  static void TearDownTestSuite() { fs::remove_all(root_); }

  static std::string P(const std::string& rel) { return (root_ / rel).string(); }

  // Runs the CLI, returns its exit status; stdout and stderr go to last.log.
  static int Run(const std::string& args) {
    const std::string cmd = std::string(TAGGANT_CLI_PATH) + " " + args + " > " + P("last.log") +
                            " 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }
  static std::string Log() { return io::ReadText(root_ / "last.log"); }

  static std::string SignArgs(const std::string& out) {
    return "sign --dataset " + P("data/train") + " --keyset " + P("secret/keys.bin") +
           " --model " + P("models/alice.bin") + " --budget 0.05 --steps 4 --restarts 1 " +
           "--out-dataset " + P(out) + " --out-signature " + P("secret/" + out + ".sig");
  }

  static fs::path root_;
};

fs::path Cli::root_;

TEST_F(Cli, SyntheticDatasetIsBalancedAndSeeded) {
  const Dataset train = LoadDataset(root_ / "data/train");
  EXPECT_EQ(train.ClassCounts(), (std::vector<std::int64_t>{60, 60, 60, 60}));
  ASSERT_EQ(Run("make-dataset --classes 4 --train-count 240 --val-count 40 --height 8 "
                "--width 8 --seed 3 --out-train " + P("again/train") + " --out-val " +
                P("again/val")),
            0);
  EXPECT_EQ(io::ReadBytes(root_ / "again/train/images.f32"),
            io::ReadBytes(root_ / "data/train/images.f32"));
  EXPECT_EQ(io::ReadText(root_ / "again/train/manifest.json"),
            io::ReadText(root_ / "data/train/manifest.json"));
}

TEST_F(Cli, TwentyClassesOfTwoHundredFifty) {
  SyntheticParams p;
  p.classes = 20;
  p.train_count = 5000;
  p.val_count = 100;
  p.shape = {3, 8, 8};
  const auto split = MakeSyntheticDataset(p);
  EXPECT_EQ(split.train.ClassCounts(), std::vector<std::int64_t>(20, 250));
}

TEST_F(Cli, TrainAndValidationAreDisjoint) {
  const Dataset train = LoadDataset(root_ / "data/train");
  const Dataset val = LoadDataset(root_ / "data/val");
  std::set<std::string> seen;
  auto digest = [](std::span<const float> img) {
    return io::Sha256Hex(std::span<const std::uint8_t>(
        reinterpret_cast<const std::uint8_t*>(img.data()), img.size_bytes()));
  };
  for (std::int64_t i = 0; i < train.size(); ++i) seen.insert(digest(train.image(i)));
  EXPECT_EQ(static_cast<std::int64_t>(seen.size()), train.size());
  for (std::int64_t i = 0; i < val.size(); ++i) EXPECT_FALSE(seen.count(digest(val.image(i))));
}

TEST_F(Cli, SignThenDetectOnCleanModelAcceptsNull) {
  ASSERT_EQ(Run(SignArgs("signed")), 0) << Log();
  const Dataset signed_data = LoadDataset(root_ / "signed");
  EXPECT_EQ(LoadDatasetManifest(root_ / "signed").at("provenance"), "signed");
  ASSERT_EQ(Run("train --train " + P("data/train") + " --val " + P("data/val") +
                " --arch mlp --epochs 2 --seed 9 --out " + P("models/clean.bin")),
            0);
  ASSERT_EQ(Run("detect --keyset " + P("secret/keys.bin") + " --model " + P("models/clean.bin") +
                " --k 1 --out " + P("clean_report.json")),
            0)
      << Log();
  const auto report = io::ReadJson(root_ / "clean_report.json");
  EXPECT_FALSE(report.at("reject_null").get<bool>());
  EXPECT_EQ(report.at("runs").size(), 1u);
  EXPECT_EQ(report.at("config_hash").get<std::string>().size(), 64u);
}

TEST_F(Cli, RerunsAreByteIdentical) {
  ASSERT_EQ(Run(SignArgs("signed_a")), 0) << Log();
  ASSERT_EQ(Run(SignArgs("signed_b")), 0) << Log();
  EXPECT_EQ(io::ReadBytes(root_ / "signed_a/images.f32"), io::ReadBytes(root_ / "signed_b/images.f32"));
  for (const char* name : {"r1.json", "r2.json"}) {
    ASSERT_EQ(Run("detect --keyset " + P("secret/keys.bin") + " --model " + P("models/alice.bin") +
                  " --model " + P("models/alice.bin") + " --k 2 --out " + P(name)),
              0);
  }
  EXPECT_EQ(io::ReadText(root_ / "r1.json"), io::ReadText(root_ / "r2.json"));
  EXPECT_EQ(io::ReadJson(root_ / "r1.json").at("combination"), "repeated-training protocol (Fisher)");
}

TEST_F(Cli, ClassCountMismatchIsExplicit) {
  ASSERT_EQ(Run("gen-keys --classes 7 --height 8 --width 8 --count 3 --out " +
                P("secret/keys7.bin")),
            0);
  EXPECT_EQ(Run("detect --keyset " + P("secret/keys7.bin") + " --model " + P("models/alice.bin")),
            2);
  EXPECT_NE(Log().find("|Y|"), std::string::npos);
}

TEST_F(Cli, KeysetIsNeverWrittenIntoADataset) {
  EXPECT_EQ(Run("gen-keys --dataset " + P("data/train") + " --out " + P("data/train/keys.bin")), 2);
  EXPECT_FALSE(fs::exists(root_ / "data/train/keys.bin"));
  EXPECT_EQ(Run("gen-keys --dataset " + P("data/train") + " --out " + P("data/keys.bin")), 2);
}

TEST_F(Cli, CorruptDatasetIsDataIntegrityError) {
  fs::copy(root_ / "data/val", root_ / "broken", fs::copy_options::recursive);
  auto bytes = io::ReadBytes(root_ / "broken/images.f32");
  bytes[10] ^= 0x40;
  io::WriteBytes(root_ / "broken/images.f32", bytes);
  EXPECT_EQ(Run("train --train " + P("data/train") + " --val " + P("broken") + " --epochs 1 --out " +
                P("models/x.bin")),
            3);
}

TEST_F(Cli, ConfigFileAndFlagOverrides) {
  io::WriteJson(root_ / "train.json", {{"epochs", 1},
                                       {"batch_size", 64},
                                       {"model", {{"architecture", "mlp"}, {"hidden", 8}}},
                                       {"seed", 4}});
  ASSERT_EQ(Run("train --config " + P("train.json") + " --train " + P("data/train") + " --val " +
                P("data/val") + " --epochs 2 --out " + P("models/cfg.bin") + " --report " +
                P("models/cfg.json")),
            0)
      << Log();
  EXPECT_EQ(io::ReadJson(root_ / "models/cfg.json").at("epoch_loss").size(), 2u);
}

TEST_F(Cli, BadInvocationsExitWithConfigCode) {
  EXPECT_EQ(Run("no-such-command"), 2);
  EXPECT_EQ(Run("train --epochs notanumber --train x --val y --out z"), 2);
  EXPECT_EQ(Run("gen-keys --count 3"), 2);
  EXPECT_EQ(Run("train --help"), 0);
}

TEST_F(Cli, UnreachableRemoteIsInfrastructureError) {
  EXPECT_EQ(Run("detect --keyset " + P("secret/keys.bin") +
                " --url http://127.0.0.1:1 --retries 0 --timeout 0.5 --k 1"),
            5);
}

TEST_F(Cli, StealthReportOnSignedDataset) {
  ASSERT_EQ(Run(SignArgs("signed_s")), 0) << Log();
  ASSERT_EQ(Run("stealth --model " + P("models/alice.bin") + " --original " + P("data/train") +
                " --modified " + P("signed_s") + " --k-nn 3 --out " + P("stealth.json")),
            0)
      << Log();
  const auto r = io::ReadJson(root_ / "stealth.json");
  EXPECT_EQ(r.at("signed_images"), 12);
  EXPECT_GE(r.at("min_psnr_db").get<double>(), 24.04);
}

TEST_F(Cli, BaselineSigningMethods) {
  ASSERT_EQ(Run("sign --method naive-canary --dataset " + P("data/train") + " --keyset " +
                P("secret/keys.bin") + " --budget 0.05 --out-dataset " + P("canary")),
            0)
      << Log();
  EXPECT_EQ(LoadDatasetManifest(root_ / "canary").at("provenance"), "canary");
  ASSERT_EQ(Run("sign --method transparency --gamma 0.2 --dataset " + P("data/train") +
                " --keyset " + P("secret/keys.bin") + " --out-dataset " + P("transp")),
            0);
  EXPECT_EQ(Run("sign --method watermark --dataset " + P("data/train") + " --keyset " +
                P("secret/keys.bin") + " --out-dataset " + P("w")),
            2);
}

}  // namespace
}  // namespace taggant
