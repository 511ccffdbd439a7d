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

// Command-line driver: analyze, demo, train, probe.

#include <CLI11.hpp>
#include <iostream>
#include <sstream>

#include "aps/checkpoint.h"
#include "aps/commands.h"
#include "aps/errors.h"

namespace {

void add_common(CLI::App* cmd, aps::CommandOptions& opts,
                std::uint64_t& seed) {
  cmd->add_option("--config", opts.config_path, "INI configuration file")
      ->check(CLI::ExistingFile);
  cmd->add_option("--out", opts.out_dir, "output directory");
  cmd->add_option("--seed", seed, "override [run] seed");
  cmd->add_flag("--dry-run", opts.dry_run, "print the plan and exit");
  cmd->add_flag("--verbose", opts.verbose, "progress output");
}

// One line, "error: <code>: <message>", then a code-specific exit status.
int fail(const char* code, const std::string& message, int status) {
  std::string flat = message;
  for (char& c : flat) {
    if (c == '\n') c = ' ';
  }
  std::cerr << "error: " << code << ": " << flat << "\n";
  return status;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Asymmetric patch sampling toolkit"};
  app.require_subcommand(1);

  aps::CommandOptions opts;
  std::uint64_t seed = 0;
  std::string preset = "smoke";
  std::string checkpoint;

  auto* analyze = app.add_subcommand("analyze", "overlap statistics report");
  add_common(analyze, opts, seed);
  auto* demo = app.add_subcommand("demo", "write sampling visualisations");
  add_common(demo, opts, seed);
  auto* train = app.add_subcommand("train", "contrastive pre-training");
  add_common(train, opts, seed);
  train->add_option("--preset", preset, "preset used without --config")
      ->check(CLI::IsMember({"smoke", "cifar"}));
  auto* probe = app.add_subcommand("probe", "kNN probe of a checkpoint");
  add_common(probe, opts, seed);
  probe->add_option("--checkpoint", checkpoint, "checkpoint file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage", e.what(), 2);
  }

  for (auto* cmd : {analyze, demo, train, probe}) {
    if (cmd->parsed() && cmd->count("--seed") > 0) opts.seed = seed;
  }

  try {
    if (analyze->parsed()) {
      aps::cmd_analyze(opts, std::cout);
    } else if (demo->parsed()) {
      aps::cmd_demo(opts, std::cout);
    } else if (train->parsed()) {
      aps::cmd_train(opts, std::cout, preset);
    } else if (probe->parsed()) {
      aps::cmd_probe(opts, checkpoint, std::cout);
    }
  } catch (const aps::ConfigError& e) {
    return fail("config", e.what(), 2);
  } catch (const std::invalid_argument& e) {
    return fail("usage", e.what(), 2);
  } catch (const aps::CheckpointError& e) {
    return fail("checkpoint", e.what(), 4);
  } catch (const aps::NumericalError& e) {
    return fail("numerical", e.what(), 5);
  } catch (const std::exception& e) {
    return fail("io", e.what(), 3);
  }
  return 0;
}
