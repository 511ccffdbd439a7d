// Copyright 2026 The APS Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "aps/commands.h"
#include "aps/errors.h"
#include "aps/image.h"

namespace aps {
namespace {

namespace fs = std::filesystem;

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "aps_cli_test" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), {}};
}

std::string write_config(const fs::path& dir, const std::string& text) {
  const fs::path p = dir / "config.ini";
  std::ofstream(p) << text;
  return p.string();
}

CommandOptions options_in(const fs::path& dir, const std::string& config = "") {
  CommandOptions o;
  o.out_dir = dir.string();
  o.config_path = config;
  return o;
}

TEST(Analyze, DefaultGridHasAnalyticRows) {
  const fs::path dir = fresh_dir("analyze_default");
  CommandOptions o = options_in(
      dir, write_config(dir, "[analyze]\ntrials = 2000\ngrid = 16\n"));
  std::ostringstream log;
  const AnalyzeResult r = cmd_analyze(o, log);
  ASSERT_EQ(r.pairs.size(), 5u);
  bool saw_g3 = false, saw_g0 = false;
  for (const auto& row : r.rows) {
    EXPECT_EQ(row.s1, 0.25);
    if (row.strategy != "selective") continue;
    if (row.gamma == 3.0) {
      saw_g3 = true;
      EXPECT_NEAR(row.analytic, 0.0125, 1e-12);
    }
    if (row.gamma == 0.0) {
      saw_g0 = true;
      EXPECT_NEAR(row.analytic, 0.03125, 1e-12);
    }
  }
  EXPECT_TRUE(saw_g3);
  EXPECT_TRUE(saw_g0);
  for (const char* f : {"asymmetry.csv", "ratio.csv", "density.csv"}) {
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  }
  std::istringstream csv(slurp(dir / "asymmetry.csv"));
  std::string header;
  std::getline(csv, header);
  EXPECT_NE(header.find("gamma"), std::string::npos);
  int lines = 0;
  for (std::string l; std::getline(csv, l);) ++lines;
  EXPECT_EQ(lines, 10);
}

TEST(Analyze, RejectsTooFewTrials) {
  const fs::path dir = fresh_dir("analyze_bad");
  std::ostringstream log;
  EXPECT_THROW(cmd_analyze(options_in(dir, write_config(dir, "[analyze]\ntrials = 0\n")), log),
               ConfigError);
  EXPECT_THROW(cmd_analyze(options_in(dir, write_config(dir, "[analyze]\ntrials = 999\n")), log),
               ConfigError);
  EXPECT_THROW(cmd_analyze(options_in(dir, write_config(dir, "[analyze]\nbogus = 1\n")), log),
               ConfigError);
}

TEST(Analyze, FixedSeedGivesIdenticalFiles) {
  const std::string cfg = "[analyze]\ntrials = 1000\ngrid = 8\ngammas = 0, 3\nworkers = 2\n";
  const fs::path a = fresh_dir("analyze_a");
  const fs::path b = fresh_dir("analyze_b");
  std::ostringstream log;
  CommandOptions oa = options_in(a, write_config(a, cfg));
  CommandOptions ob = options_in(b, write_config(b, "[analyze]\ntrials = 1000\ngrid = 8\n"
                                                     "gammas = 0, 3\nworkers = 1\n"));
  oa.seed = ob.seed = 11;
  cmd_analyze(oa, log);
  cmd_analyze(ob, log);
  for (const char* f : {"asymmetry.csv", "ratio.csv", "density.csv"}) {
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
  }
  ob.seed = 12;
  cmd_analyze(ob, log);
  EXPECT_NE(slurp(a / "asymmetry.csv"), slurp(b / "asymmetry.csv"));
}

TEST(Analyze, DryRunWritesNothing) {
  const fs::path dir = fresh_dir("analyze_dry");
  CommandOptions o = options_in(dir / "out");
  o.dry_run = true;
  std::ostringstream log;
  cmd_analyze(o, log);
  EXPECT_FALSE(fs::exists(dir / "out"));
  EXPECT_NE(log.str().find("20000 trials"), std::string::npos);
}

TEST(Demo, WritesImagesAndPrefersOverlap) {
  const fs::path dir = fresh_dir("demo");
  CommandOptions o = options_in(dir, write_config(dir, "[demo]\ngamma = 8\n"));
  o.seed = 4;
  std::ostringstream log;
  const DemoResult r = cmd_demo(o, log);
  for (const char* f : {"crop1.ppm", "crop2.ppm", "view1_mask.ppm",
                        "view2_overlap.ppm", "view2_mask.ppm"}) {
    ASSERT_TRUE(fs::exists(dir / f)) << f;
    EXPECT_EQ(slurp(dir / f).substr(0, 2), "P6") << f;
  }
  const Image mask = read_ppm((dir / "view2_mask.ppm").string());
  EXPECT_EQ(mask.width, 32);
  EXPECT_EQ(r.view2.size(), 64u);  // 0.25 of a 16 x 16 grid
  EXPECT_LT(r.mean_overlap_selected, r.mean_overlap_unselected);
  EXPECT_TRUE(fs::exists(dir / "demo.csv"));
}

TEST(Demo, IdenticalCropsWithFullRatioCoverEverything) {
  const fs::path dir = fresh_dir("demo_identity");
  CommandOptions o = options_in(
      dir, write_config(dir, "[demo]\nidentical_crops = true\nratio = 1\n"));
  std::ostringstream log;
  const DemoResult r = cmd_demo(o, log);
  EXPECT_EQ(r.view1.size(), 256u);
  const Image mask = read_ppm((dir / "view1_mask.ppm").string());
  for (float v : mask.pixels) EXPECT_EQ(v, 1.0f);
}

TEST(Demo, ReadsInputImage) {
  const fs::path dir = fresh_dir("demo_input");
  Image img(40, 48);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = (i % 7) / 7.0f;
  write_ppm((dir / "in.ppm").string(), img);
  CommandOptions o = options_in(
      dir, write_config(dir, "[demo]\ninput = " + (dir / "in.ppm").string() + "\n"));
  std::ostringstream log;
  EXPECT_NO_THROW(cmd_demo(o, log));
}

TEST(Train, DryRunPrintsConfigAndPlan) {
  const fs::path dir = fresh_dir("train_dry");
  CommandOptions o = options_in(dir / "out");
  o.dry_run = true;
  std::ostringstream log;
  cmd_train(o, log, "smoke");
  EXPECT_NE(log.str().find("[sampler]"), std::string::npos);
  EXPECT_NE(log.str().find("200 steps"), std::string::npos);
  EXPECT_FALSE(fs::exists(dir / "out"));
  std::ostringstream log2;
  cmd_train(o, log2, "cifar");
  EXPECT_NE(log2.str().find("vit-tiny"), std::string::npos);
}

TEST(Train, ShortRunCheckpointsAndProbeReproduces) {
  const fs::path dir = fresh_dir("train_short");
  const std::string cfg =
      "[run]\npreset = smoke\ncheckpoint_every = 2\n"
      "[data]\nper_class = 8\nprobe_per_class = 8\n"
      "[optim]\nbatch_size = 8\n[schedule]\nmax_steps = 4\n";
  CommandOptions o = options_in(dir, write_config(dir, cfg));
  std::ostringstream log;
  const TrainSummary s = cmd_train(o, log);
  EXPECT_EQ(s.steps, 4);
  ASSERT_GE(s.checkpoints.size(), 2u);
  EXPECT_TRUE(fs::exists(dir / "step_2.ckpt"));
  EXPECT_TRUE(fs::exists(dir / "final.ckpt"));
  EXPECT_TRUE(fs::exists(dir / "metrics.csv"));
  EXPECT_TRUE(fs::exists(dir / "probe_report.csv"));

  std::ostringstream plog;
  const ProbeSummary p = cmd_probe(options_in(dir), (dir / "final.ckpt").string(), plog);
  EXPECT_EQ(p.step, 4);
  EXPECT_EQ(p.accuracy, p.recorded_accuracy);
  EXPECT_EQ(p.accuracy, s.probe_accuracy);
  EXPECT_TRUE(fs::exists(dir / "probe.csv"));
}

TEST(Train, WindowMean) {
  std::vector<MetricRecord> log(4);
  for (int i = 0; i < 4; ++i) log[static_cast<std::size_t>(i)].loss = i;
  EXPECT_EQ(window_mean(log, 1, 2), 1.5);
  EXPECT_THROW(window_mean(log, 3, 2), std::invalid_argument);
}

struct CliRun {
  int status;
  std::string err;
};

CliRun run_cli(const std::string& args) {
  const char* bin = std::getenv("APS_CLI");
  if (bin == nullptr) return {-1, ""};
  const fs::path err = fresh_dir("cli_bin") / "stderr.txt";
  const std::string cmd =
      std::string(bin) + " " + args + " >/dev/null 2>" + err.string();
  const int raw = std::system(cmd.c_str());
  return {WIFEXITED(raw) ? WEXITSTATUS(raw) : -1, slurp(err)};
}

TEST(Binary, ErrorsAreOneLine) {
  if (std::getenv("APS_CLI") == nullptr) GTEST_SKIP() << "APS_CLI not set";
  const fs::path dir = fresh_dir("binary");
  const std::string bad = write_config(dir, "[analyze]\ntrials = 0\n");

  CliRun r = run_cli("analyze --config " + bad + " --out " + dir.string());
  EXPECT_EQ(r.status, 2);
  EXPECT_EQ(r.err.rfind("error: config:", 0), 0u) << r.err;
  EXPECT_EQ(std::count(r.err.begin(), r.err.end(), '\n'), 1) << r.err;

  const fs::path junk = dir / "junk.ckpt";
  std::ofstream(junk) << "not a checkpoint";
  r = run_cli("probe --checkpoint " + junk.string() + " --out " + dir.string());
  EXPECT_EQ(r.status, 4);
  EXPECT_EQ(r.err.rfind("error: checkpoint:", 0), 0u) << r.err;

  r = run_cli("frobnicate");
  EXPECT_EQ(r.status, 2);
  EXPECT_EQ(r.err.rfind("error: usage:", 0), 0u) << r.err;

  r = run_cli("train --dry-run --preset smoke");
  EXPECT_EQ(r.status, 0) << r.err;
}

}  // namespace
}  // namespace aps
