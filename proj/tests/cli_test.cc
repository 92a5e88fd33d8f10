// Copyright 2026 The Focusvec Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Runs the focusvec binary end to end on a tiny synthetic task.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "test_util.h"

namespace focusvec {
namespace {

using nlohmann::json;
using testing::TempDir;

struct RunResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

std::string Slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Runs the CLI inside `cwd` with the given argument string.
RunResult RunCli(const TempDir& dir, const std::string& args) {
  const std::string out = dir.File("_stdout");
  const std::string err = dir.File("_stderr");
  const std::string cmd = "cd '" + dir.path().string() + "' && '" FOCUSVEC_CLI_PATH "' " +
                          args + " >'" + out + "' 2>'" + err + "'";
  const int status = std::system(cmd.c_str());
  RunResult r;
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = Slurp(out);
  r.err = Slurp(err);
  return r;
}

json ErrorOf(const RunResult& r) {
  const auto line = r.err.substr(0, r.err.find('\n'));
  return json::parse(line)["error"];
}

void WriteText(const std::string& path, const std::string& text) {
  std::ofstream(path) << text;
}

constexpr char kTinyBase[] =
    "d_model = 16\nheads = 2\nd_ff = 32\nencoder_layers = 2\ndecoder_layers = 2\n"
    "epochs = 1\nbatch_size = 8\n";

// gen-data, train-base, annotate, train-focus, tune-offset and evaluate with
// relative paths inside `dir`.
void RunPipeline(const TempDir& dir) {
  WriteText(dir.File("base.cfg"), kTinyBase);
  ASSERT_EQ(RunCli(dir, "gen-data --out data --n 24 --dev-n 6 --test-n 6 --seed 3").exit_code, 0);
  auto r = RunCli(dir, "train-base --data data --config base.cfg --out base.ckpt");
  ASSERT_EQ(r.exit_code, 0) << r.err;
  r = RunCli(dir, "annotate --ckpt base.ckpt --data data/train.jsonl --out ann.jsonl --k-min 1 "
               "--k-max 2");
  ASSERT_EQ(r.exit_code, 0) << r.err;
  r = RunCli(dir, "train-focus --ckpt base.ckpt --ann ann.jsonl --dev data --out fv.bin "
               "--epochs 1 --lr 0.01");
  ASSERT_EQ(r.exit_code, 0) << r.err;
  r = RunCli(dir, "tune-offset --ckpt base.ckpt --dev data --out offset.json --limit 3");
  ASSERT_EQ(r.exit_code, 0) << r.err;
  r = RunCli(dir, "evaluate --ckpt base.ckpt --data data --mode focus --fv fv.bin "
               "--report eval.json --beam 2 --max-len 8");
  ASSERT_EQ(r.exit_code, 0) << r.err;
}

TEST(CliTest, VersionAndUsage) {
  TempDir dir;
  auto r = RunCli(dir, "--version");
  EXPECT_EQ(r.exit_code, 0);
  EXPECT_FALSE(r.out.empty());
  r = RunCli(dir, "");
  EXPECT_NE(r.exit_code, 0);
  r = RunCli(dir, "train-base --data x");
  EXPECT_EQ(r.exit_code, 1);
  EXPECT_EQ(ErrorOf(r)["kind"], "usage");
}

TEST(CliTest, PipelineProducesArtifactsAndManifests) {
  TempDir dir;
  RunPipeline(dir);
  if (HasFatalFailure()) return;
  for (const char* f : {"data/train.jsonl", "data/dev.jsonl", "data/test.jsonl",
                        "data.manifest.json", "base.ckpt", "base.ckpt.loss.csv",
                        "base.ckpt.manifest.json", "ann.jsonl", "fv.bin", "fv.bin.report.json",
                        "offset.json", "eval.json", "eval.json.manifest.json"}) {
    EXPECT_TRUE(std::filesystem::exists(dir.path() / f)) << f;
  }
  const json m = json::parse(Slurp(dir.File("base.ckpt.manifest.json")));
  EXPECT_EQ(m["command"], "train-base");
  EXPECT_EQ(m["config"]["d_model"], 16);
  EXPECT_EQ(m["inputs"][0]["path"], "data/train.jsonl");
  EXPECT_EQ(m["outputs"][0]["fnv1a64"].get<std::string>().size(), 16u);
  for (const char* key : {"config_hash", "seed", "version", "metrics", "started_at",
                          "wall_time_s"}) {
    EXPECT_TRUE(m.contains(key)) << key;
  }
  const json report = json::parse(Slurp(dir.File("eval.json")));
  EXPECT_EQ(report["mode"], "focus");
  EXPECT_EQ(report["examples"], 6);
  EXPECT_GT(report["ppl"].get<double>(), 1.0);
  EXPECT_TRUE(report["steering_accuracy"].is_object());
  const json offset = json::parse(Slurp(dir.File("offset.json")));
  EXPECT_GT(offset["offset"].get<double>(), 0.0);
  std::istringstream ann(Slurp(dir.File("ann.jsonl")));
  std::string line;
  int n = 0;
  while (std::getline(ann, line)) {
    const json a = json::parse(line);
    const auto k = a["highlights"].size();
    EXPECT_GE(k, 1u);
    EXPECT_LE(k, 2u);
    ++n;
  }
  EXPECT_EQ(n, 24);
}

TEST(CliTest, RerunIsByteIdentical) {
  TempDir a;
  TempDir b;
  RunPipeline(a);
  RunPipeline(b);
  if (HasFatalFailure()) return;
  for (const char* f : {"data/train.jsonl", "base.ckpt", "base.ckpt.loss.csv", "ann.jsonl",
                        "fv.bin", "offset.json", "eval.json"}) {
    EXPECT_EQ(Slurp(a.File(f)), Slurp(b.File(f))) << f;
  }
  for (const char* f : {"data.manifest.json", "base.ckpt.manifest.json", "ann.jsonl.manifest.json",
                        "fv.bin.manifest.json", "offset.json.manifest.json",
                        "eval.json.manifest.json"}) {
    json ma = json::parse(Slurp(a.File(f)));
    json mb = json::parse(Slurp(b.File(f)));
    for (json* m : {&ma, &mb}) {
      m->erase("started_at");
      m->erase("wall_time_s");
    }
    EXPECT_EQ(ma, mb) << f;
  }
}

TEST(CliTest, GenerateModesAndHighlightErrors) {
  TempDir dir;
  RunPipeline(dir);
  if (HasFatalFailure()) return;
  WriteText(dir.File("in.txt"),
            "the color of ivan is red . it was a quiet day . the city of peggy is paris .\n");
  const auto vanilla = RunCli(dir, "generate --ckpt base.ckpt --input in.txt --beam 2");
  ASSERT_EQ(vanilla.exit_code, 0) << vanilla.err;
  EXPECT_FALSE(vanilla.out.empty());
  const auto padded =
      RunCli(dir, "generate --ckpt base.ckpt --input in.txt --mode padding --highlights 0,2");
  EXPECT_EQ(padded.exit_code, 0) << padded.err;
  auto r = RunCli(dir, "generate --ckpt base.ckpt --input in.txt --mode padding --highlights 5");
  EXPECT_EQ(r.exit_code, 1);
  EXPECT_NE(ErrorOf(r)["message"].get<std::string>().find("5"), std::string::npos);
  r = RunCli(dir, "generate --ckpt base.ckpt --input in.txt --mode focus --highlights 0");
  EXPECT_EQ(r.exit_code, 1);
  EXPECT_EQ(ErrorOf(r)["kind"], "contract");
  r = RunCli(dir, "generate --ckpt base.ckpt --input in.txt --mode offset --offset offset.json "
               "--highlights x");
  EXPECT_EQ(r.exit_code, 1);
}

TEST(CliTest, ErrorsAreStructured) {
  TempDir dir;
  WriteText(dir.File("bad.cfg"), "d_model = 16\nwidth = 3\n");
  ASSERT_EQ(RunCli(dir, "gen-data --out data --n 4 --dev-n 1 --test-n 1").exit_code, 0);
  auto r = RunCli(dir, "train-base --data data --config bad.cfg --out m.ckpt");
  EXPECT_EQ(r.exit_code, 1);
  json e = ErrorOf(r);
  EXPECT_EQ(e["kind"], "parse");
  EXPECT_EQ(e["line"], 2);
  EXPECT_NE(e["message"].get<std::string>().find("width"), std::string::npos);
  WriteText(dir.File("bad.jsonl"), "{\"id\": \"a\", \"input_sentences\": [\"x .\"]}\n");
  r = RunCli(dir, "train-base --data bad.jsonl --out m.ckpt");
  EXPECT_EQ(r.exit_code, 1);
  EXPECT_EQ(ErrorOf(r)["kind"], "parse");
  r = RunCli(dir, "evaluate --ckpt missing.ckpt --data data --report r.json");
  EXPECT_EQ(r.exit_code, 1);
  EXPECT_FALSE(std::filesystem::exists(dir.path() / "m.ckpt"));
}

}  // namespace
}  // namespace focusvec
