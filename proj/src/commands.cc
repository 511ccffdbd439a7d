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

#include "aps/commands.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "aps/errors.h"
#include "aps/image.h"

namespace aps {

namespace fs = std::filesystem;

const std::set<std::string>& cli_config_keys() {
  static const std::set<std::string> keys = [] {
    std::set<std::string> k = train_config_keys();
    for (const char* extra :
         {"analyze.ratios", "analyze.gammas", "analyze.trials", "analyze.grid",
          "analyze.patch_size", "analyze.image_size", "analyze.crop_model",
          "analyze.workers", "analyze.density_points", "demo.input",
          "demo.image_size", "demo.view_size", "demo.patch_size", "demo.ratio",
          "demo.gamma", "demo.identical_crops"}) {
      k.insert(extra);
    }
    return k;
  }();
  return keys;
}

ConfigFile load_cli_config(const CommandOptions& options) {
  if (options.config_path.empty()) return ConfigFile::parse("", cli_config_keys());
  return ConfigFile::load(options.config_path, cli_config_keys());
}

namespace {

fs::path prepare_out(const CommandOptions& options) {
  fs::path out(options.out_dir);
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) {
    throw std::runtime_error("cannot create output directory " +
                             options.out_dir + ": " + ec.message());
  }
  return out;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  return f;
}

int to_int(long v, const char* what) {
  if (v < -2147483647L || v > 2147483647L) {
    throw ConfigError(std::string("config: ") + what + " out of range");
  }
  return static_cast<int>(v);
}

std::uint64_t to_seed(long v) {
  if (v < 0) throw ConfigError("config: run.seed must be >= 0");
  return static_cast<std::uint64_t>(v);
}

}  // namespace

// --------------------------------------------------------------------------
// analyze

void AnalyzeConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError("invalid analyze config: " + what);
  };
  require(!ratios.empty(), "ratios must not be empty");
  for (double s : ratios) require(s > 0.0 && s <= 1.0, "ratios must lie in (0,1]");
  require(!gammas.empty(), "gammas must not be empty");
  for (double g : gammas) require(g >= 0.0, "gammas must be >= 0");
  require(trials >= 1000, "trials must be >= 1000");
  require(grid >= 1 && patch_size >= 1, "grid and patch_size must be >= 1");
  require(image_size >= 1, "image_size must be >= 1");
  require(workers >= 1, "workers must be >= 1");
  require(density_points >= 2, "density_points must be >= 2");
}

AnalyzeConfig analyze_config_from(const ConfigFile& f) {
  AnalyzeConfig c;
  c.ratios = f.get_doubles("analyze", "ratios", c.ratios);
  c.gammas = f.get_doubles("analyze", "gammas", c.gammas);
  c.trials = f.get_long("analyze", "trials", c.trials);
  c.grid = to_int(f.get_long("analyze", "grid", c.grid), "analyze.grid");
  c.patch_size =
      to_int(f.get_long("analyze", "patch_size", c.patch_size), "analyze.patch_size");
  c.image_size =
      to_int(f.get_long("analyze", "image_size", c.image_size), "analyze.image_size");
  const std::string model = f.get_string("analyze", "crop_model", "random");
  if (model == "random") {
    c.crop_model = CropModel::kRandom;
  } else if (model == "identical") {
    c.crop_model = CropModel::kIdentical;
  } else {
    throw ConfigError("config: analyze.crop_model must be random or identical");
  }
  c.workers = to_int(f.get_long("analyze", "workers", c.workers), "analyze.workers");
  c.density_points = to_int(f.get_long("analyze", "density_points", c.density_points),
                            "analyze.density_points");
  c.seed = to_seed(f.get_long("run", "seed", 0));
  c.validate();
  return c;
}

AnalyzeResult cmd_analyze(const CommandOptions& options, std::ostream& log) {
  AnalyzeConfig cfg = analyze_config_from(load_cli_config(options));
  if (options.seed) cfg.seed = *options.seed;
  if (options.dry_run) {
    log << "analyze: " << cfg.ratios.size() * cfg.gammas.size()
        << " configurations x " << cfg.trials << " trials, grid " << cfg.grid
        << "x" << cfg.grid << ", crops " << to_string(cfg.crop_model) << "\n";
    return {};
  }
  const fs::path out = prepare_out(options);

  AnalyzeResult result;
  std::uint64_t row_seed = cfg.seed;
  for (double s : cfg.ratios) {
    for (double g : cfg.gammas) {
      MonteCarloConfig mc;
      mc.sampler.s1 = s;
      mc.sampler.s2 = s;
      mc.sampler.gamma = g;
      mc.crop_model = cfg.crop_model;
      mc.image_size = cfg.image_size;
      mc.grid = cfg.grid;
      mc.patch_size = cfg.patch_size;
      mc.trials = cfg.trials;
      mc.seed = mix_seed(row_seed++);
      mc.workers = cfg.workers;
      PairedComparison pc = compare_strategies(mc);
      if (options.verbose) {
        log << "s=" << s << " gamma=" << g << " naive=" << pc.naive.monte_carlo
            << " selective=" << pc.selective.monte_carlo
            << " (analytic " << pc.selective.analytic << ")\n";
      }
      result.rows.push_back(pc.naive);
      result.rows.push_back(pc.selective);
      result.pairs.push_back(std::move(pc));
    }
  }

  {
    auto f = open_out(out / "asymmetry.csv");
    write_report_csv_header(f);
    for (const auto& r : result.rows) write_report_csv_row(f, r);
  }
  {
    auto f = open_out(out / "ratio.csv");
    f << "s,gamma,naive_mc,selective_mc,ratio,ratio_std_error,"
         "mean_difference,difference_std_error\n";
    f.precision(10);
    for (const auto& pc : result.pairs) {
      f << pc.selective.s1 << ',' << pc.selective.gamma << ','
        << pc.naive.monte_carlo << ',' << pc.selective.monte_carlo << ','
        << pc.ratio << ',' << pc.ratio_std_error << ',' << pc.mean_difference
        << ',' << pc.difference_std_error << '\n';
    }
  }
  {
    auto f = open_out(out / "density.csv");
    write_density_csv(f, cfg.gammas, cfg.ratios.front(), cfg.density_points);
  }
  write_report_table(log, result.rows);
  log << "wrote " << (out / "asymmetry.csv").string() << ", ratio.csv, density.csv\n";
  return result;
}

// --------------------------------------------------------------------------
// demo

void DemoConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError("invalid demo config: " + what);
  };
  require(image_size >= 1, "image_size must be >= 1");
  require(view_size >= 1 && patch_size >= 1 && view_size % patch_size == 0,
          "patch_size must divide view_size");
  require(ratio > 0.0 && ratio <= 1.0, "ratio must lie in (0,1]");
  require(gamma >= 0.0, "gamma must be >= 0");
}

DemoConfig demo_config_from(const ConfigFile& f) {
  DemoConfig c;
  c.input = f.get_string("demo", "input", c.input);
  c.image_size =
      to_int(f.get_long("demo", "image_size", c.image_size), "demo.image_size");
  c.view_size = to_int(f.get_long("demo", "view_size", c.view_size), "demo.view_size");
  c.patch_size =
      to_int(f.get_long("demo", "patch_size", c.patch_size), "demo.patch_size");
  c.ratio = f.get_double("demo", "ratio", c.ratio);
  c.gamma = f.get_double("demo", "gamma", c.gamma);
  c.identical_crops = f.get_bool("demo", "identical_crops", c.identical_crops);
  c.seed = to_seed(f.get_long("run", "seed", 0));
  c.validate();
  return c;
}

namespace {

// Paints each patch of a view-sized image with value(index).
template <typename F>
Image patch_image(const PatchGrid& grid, F value) {
  const int p = grid.patch_size();
  const int size = grid.cols() * p;
  Image img(size, size);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const float v = static_cast<float>(value((y / p) * grid.cols() + x / p));
      for (int c = 0; c < 3; ++c) img.at(x, y, c) = v;
    }
  }
  return img;
}

}  // namespace

DemoResult cmd_demo(const CommandOptions& options, std::ostream& log) {
  DemoConfig cfg = demo_config_from(load_cli_config(options));
  if (options.seed) cfg.seed = *options.seed;

  Image source;
  if (cfg.input.empty()) {
    source = synth_dataset({1, 1, cfg.image_size, cfg.seed}).front().pixels;
  } else {
    source = read_ppm(cfg.input);
  }
  if (options.dry_run) {
    log << "demo: " << source.width << "x" << source.height << " source, view "
        << cfg.view_size << ", patch " << cfg.patch_size << ", s " << cfg.ratio
        << ", gamma " << cfg.gamma << "\n";
    return {};
  }
  const fs::path out = prepare_out(options);

  AugmentParams geo = AugmentParams::cifar(cfg.view_size);
  geo.jitter_prob = 0.0;
  geo.grayscale_prob = 0.0;
  if (cfg.identical_crops) geo = AugmentParams::identity(cfg.view_size);

  Rng rng = derive_stream(cfg.seed, 0xde70);
  const AugmentedView v1 = augment(source, geo, rng, 1);
  const AugmentedView v2 =
      cfg.identical_crops ? v1 : augment(source, geo, rng, 1);
  const PatchGrid g1(v1.crop, cfg.patch_size);
  const PatchGrid g2(v2.crop, cfg.patch_size);
  SamplerConfig sc;
  sc.s1 = cfg.ratio;
  sc.s2 = cfg.ratio;
  sc.gamma = cfg.gamma;
  const AsymmetricSample s = sample_asymmetric(g1, g2, sc, rng);

  DemoResult r;
  r.view1 = s.views1.front();
  r.view2 = s.views2.front();
  r.profile = s.profile;
  double sel = 0.0, unsel = 0.0;
  int n_sel = 0, n_unsel = 0;
  for (int i = 0; i < g2.size(); ++i) {
    if (r.view2.contains(i)) {
      sel += r.profile[static_cast<std::size_t>(i)];
      ++n_sel;
    } else {
      unsel += r.profile[static_cast<std::size_t>(i)];
      ++n_unsel;
    }
  }
  r.mean_overlap_selected = n_sel ? sel / n_sel : 0.0;
  r.mean_overlap_unselected = n_unsel ? unsel / n_unsel : 0.0;

  write_ppm((out / "crop1.ppm").string(), v1.pixels);
  write_ppm((out / "crop2.ppm").string(), v2.pixels);
  write_ppm((out / "view1_mask.ppm").string(),
            patch_image(g1, [&](int i) { return r.view1.contains(i) ? 1.0 : 0.0; }));
  write_ppm((out / "view2_overlap.ppm").string(), patch_image(g2, [&](int i) {
              return r.profile[static_cast<std::size_t>(i)];
            }));
  write_ppm((out / "view2_mask.ppm").string(),
            patch_image(g2, [&](int i) { return r.view2.contains(i) ? 1.0 : 0.0; }));
  {
    auto f = open_out(out / "demo.csv");
    f.precision(10);
    f << "view1_patches,view2_patches,padded,mean_overlap_selected,"
         "mean_overlap_unselected\n"
      << r.view1.size() << ',' << r.view2.size() << ',' << s.padded << ','
      << r.mean_overlap_selected << ',' << r.mean_overlap_unselected << '\n';
  }
  log << "wrote demo images to " << out.string() << "\n";
  return r;
}

// --------------------------------------------------------------------------
// train / probe

double window_mean(std::span<const MetricRecord> log, std::size_t begin,
                   std::size_t count) {
  if (count == 0 || begin + count > log.size()) {
    throw std::invalid_argument("window_mean: window outside the log");
  }
  double sum = 0.0;
  for (std::size_t i = begin; i < begin + count; ++i) sum += log[i].loss;
  return sum / static_cast<double>(count);
}

namespace {

TrainConfig resolve_train_config(const CommandOptions& options,
                                 const std::string& preset) {
  TrainConfig cfg;
  if (options.config_path.empty()) {
    cfg = TrainConfig::preset(preset);
  } else {
    cfg = train_config_from(load_cli_config(options));
  }
  if (options.seed) cfg.seed = *options.seed;
  cfg.validate();
  return cfg;
}

}  // namespace

TrainSummary cmd_train(const CommandOptions& options, std::ostream& log,
                       const std::string& preset) {
  TrainSummary summary;
  summary.config = resolve_train_config(options, preset);
  const TrainConfig& cfg = summary.config;

  if (options.dry_run) {
    log << to_config_text(cfg) << "\n";
    // The plan needs dataset sizes; synthetic sizes are known up front.
    if (cfg.data.source == "synthetic") {
      const std::size_t n =
          static_cast<std::size_t>(cfg.data.per_class) * cfg.data.classes;
      const long total = total_steps(cfg, n);
      log << "plan: " << n << " images, " << steps_per_epoch(cfg, n)
          << " steps/epoch, " << total << " steps, " << warmup_steps(cfg, n)
          << " warmup steps, checkpoints every "
          << (cfg.checkpoint_every > 0 ? cfg.checkpoint_every : total)
          << " steps\n";
    } else {
      log << "plan: dataset size known after loading " << cfg.data.path << "\n";
    }
    return summary;
  }

  const fs::path out = prepare_out(options);
  const Datasets data = load_datasets(cfg.data);
  StepOptions step_opts;
  step_opts.total_steps = total_steps(cfg, data.train.size());
  step_opts.warmup_steps = warmup_steps(cfg, data.train.size());
  step_opts.steps_per_epoch = steps_per_epoch(cfg, data.train.size());
  step_opts.dump_path = (out / "nan_dump.ckpt").string();

  TrainState state = init_train_state(cfg);
  auto save = [&](const std::string& name) {
    const double acc = knn_probe(state.model, data.train, data.probe, cfg.knn_k);
    const std::string path = (out / name).string();
    checkpoint_save(path, state, cfg, acc);
    summary.checkpoints.push_back(path);
    summary.probe_accuracy = acc;
    if (options.verbose) log << "checkpoint " << path << " probe " << acc << "\n";
  };

  while (state.step < step_opts.total_steps) {
    const auto batch = batch_for_step(cfg, data.train, state.step);
    const StepResult r = train_step(state, cfg, batch, step_opts);
    if (options.verbose && (state.step % 10 == 0 || state.step == 1)) {
      log << "step " << state.step << " lr " << r.lr << " loss " << r.loss
          << " grad " << r.grad_norm << "\n";
    }
    if (cfg.checkpoint_every > 0 && state.step % cfg.checkpoint_every == 0 &&
        state.step < step_opts.total_steps) {
      save("step_" + std::to_string(state.step) + ".ckpt");
    }
  }
  save("final.ckpt");
  summary.steps = state.step;
  write_metric_log((out / "metrics.csv").string(), state.log);

  const std::size_t window = std::min<std::size_t>(20, state.log.size());
  summary.first_window_loss = window_mean(state.log, 0, window);
  summary.last_window_loss =
      window_mean(state.log, state.log.size() - window, window);
  const auto shuffled = shuffled_labels(data.train, cfg.seed);
  summary.shuffled_accuracy =
      knn_probe(state.model, shuffled, data.probe, cfg.knn_k);
  {
    auto f = open_out(out / "probe_report.csv");
    f << "step,k,accuracy,shuffled_label_accuracy,first_window_loss,"
         "last_window_loss\n"
      << summary.steps << ',' << cfg.knn_k << ','
      << format_double(summary.probe_accuracy) << ','
      << format_double(summary.shuffled_accuracy) << ','
      << format_double(summary.first_window_loss) << ','
      << format_double(summary.last_window_loss) << '\n';
  }
  log << "trained " << summary.steps << " steps; loss "
      << summary.first_window_loss << " -> " << summary.last_window_loss
      << "; knn accuracy " << summary.probe_accuracy << " (shuffled labels "
      << summary.shuffled_accuracy << ")\n";
  return summary;
}

ProbeSummary cmd_probe(const CommandOptions& options,
                       const std::string& checkpoint, std::ostream& log) {
  if (checkpoint.empty()) throw ConfigError("probe: --checkpoint is required");
  LoadedCheckpoint ck = checkpoint_load(checkpoint);
  ProbeSummary s;
  s.recorded_accuracy = ck.probe_accuracy;
  s.step = ck.state.step;
  if (options.dry_run) {
    log << to_config_text(ck.config) << "\nplan: probe checkpoint at step "
        << s.step << " with k=" << ck.config.knn_k << "\n";
    return s;
  }
  const Datasets data = load_datasets(ck.config.data);
  s.accuracy = knn_probe(ck.state.model, data.train, data.probe, ck.config.knn_k);
  const fs::path out = prepare_out(options);
  auto f = open_out(out / "probe.csv");
  f << "step,k,accuracy,recorded_accuracy\n"
    << s.step << ',' << ck.config.knn_k << ',' << format_double(s.accuracy)
    << ',' << format_double(s.recorded_accuracy) << '\n';
  log << "probe accuracy " << s.accuracy << " at step " << s.step
      << " (recorded " << s.recorded_accuracy << ")\n";
  return s;
}

}  // namespace aps
