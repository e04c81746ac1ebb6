// Copyright 2026 The GSTran Authors
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

#include "gstran/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <optional>

#include "gstran/errors.hpp"
#include "gstran/geom/ops.hpp"
#include "gstran/io.hpp"
#include "gstran/network.hpp"
#include "gstran/training.hpp"

namespace gstran {

namespace {

namespace fs = std::filesystem;

// Flags shared by train and eval; unset flags leave the config file value.
struct Overrides {
  std::optional<std::size_t> k, heads, epochs, stages, channels, batch_size;
  std::optional<std::string> combine_op, precision, weighting, global_mode;
  std::optional<std::uint64_t> seed;
  std::optional<double> lr, clip_norm, stop_oa, stop_miou;

  void add_model_flags(CLI::App* app) {
    app->add_option("--k", k, "Neighbors in the local block");
    app->add_option("--heads", heads, "Attention heads");
    app->add_option("--combine-op", combine_op, "hadamard | sum | average | concat");
    app->add_option("--local-weighting", weighting, "combined | distance | geometric");
    app->add_option("--global-mode", global_mode, "none | similarity | mask | refined");
    app->add_option("--stages", stages, "Encoder stages");
    app->add_option("--channels", channels, "Base channel width");
    app->add_option("--precision", precision, "single | double");
  }
  void add_train_flags(CLI::App* app) {
    app->add_option("--seed", seed, "Initialization and shuffling seed");
    app->add_option("--epochs", epochs, "Training epochs");
    app->add_option("--lr", lr, "Initial learning rate");
    app->add_option("--batch-size", batch_size, "Clouds per optimizer step");
    app->add_option("--clip-norm", clip_norm, "Global gradient-norm clip (0 = off)");
    app->add_option("--stop-oa", stop_oa, "Stop once test OA reaches this value");
    app->add_option("--stop-miou", stop_miou, "Stop once test mIoU reaches this value");
  }

  void apply(KeyValues& kv) const {
    const auto set = [&kv](const char* key, const auto& v) {
      if (!v) return;
      if constexpr (std::is_same_v<std::decay_t<decltype(*v)>, std::string>) {
        kv.set(key, *v);
      } else if constexpr (std::is_floating_point_v<std::decay_t<decltype(*v)>>) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.17g", *v);
        kv.set(key, buf);
      } else {
        kv.set(key, std::to_string(*v));
      }
    };
    set("k", k);
    set("heads", heads);
    set("combine_op", combine_op);
    set("local_weighting", weighting);
    set("global_mode", global_mode);
    set("stage_count", stages);
    set("base_channels", channels);
    set("precision", precision);
    set("seed", seed);
    set("epochs", epochs);
    set("lr", lr);
    set("batch_size", batch_size);
    set("clip_norm", clip_norm);
    set("stop_oa", stop_oa);
    set("stop_miou", stop_miou);
  }
};

KeyValues load_config(const std::string& path) {
  if (path.empty()) return {};
  try {
    return KeyValues::read(path);
  } catch (const ParseError& e) {
    throw DataError(e.what());
  }
}

io::DatasetManifest open_dataset(const std::string& root) {
  if (root.empty()) throw ArgumentError("--data is required");
  if (!fs::is_directory(root)) throw DataError("dataset directory " + root + " does not exist");
  return io::read_manifest(root);
}

TrainData load_train_data(const io::DatasetManifest& m) {
  TrainData data;
  data.train = io::load_split(m, m.train);
  data.test = io::load_split(m, m.test);
  if (data.train.empty()) throw DataError("dataset " + m.root.string() + " has an empty train split");
  if (m.mode == io::DatasetMode::part) data.category_parts = m.category_parts;
  return data;
}

void print_metrics(std::ostream& out, const MetricReport& r) {
  char line[256];
  std::snprintf(line, sizeof line, "oa=%.6f macc=%.6f miou=%.6f", r.oa, r.macc, r.miou);
  out << line;
  if (r.ins_miou) {
    std::snprintf(line, sizeof line, " ins_miou=%.6f cat_miou=%.6f", *r.ins_miou, *r.cat_miou);
    out << line;
  }
  out << "\n";
}

template <typename T>
int train_with(const ModelConfig& mc, const TrainConfig& tc, const TrainData& data,
               const fs::path& run_dir, std::ostream& out) {
  Model<T> model(mc, tc.seed);
  out << "parameters " << model.parameters().scalar_count() << "\n";
  out << "epoch\tloss\toa\tmacc\tmiou\tlr\n";
  const auto result = train(model, data, tc, run_dir, &out);
  out << "best_epoch=" << result.best_epoch << " best_miou=" << result.best_miou
      << " checkpoint=" << (run_dir / "best.ckpt").string() << "\n";
  return kExitOk;
}

template <typename T>
int eval_with(const fs::path& checkpoint, const std::vector<geom::PointCloud>& clouds,
              const std::optional<CategoryParts>& parts, std::ostream& out) {
  const Model<T> model = load_checkpoint<T>(checkpoint);
  print_metrics(out, evaluate(model, clouds, parts));
  return kExitOk;
}

template <typename T>
int infer_with(const fs::path& checkpoint, const geom::PointCloud& cloud, const fs::path& output,
               std::ostream& out) {
  const Model<T> model = load_checkpoint<T>(checkpoint);
  const auto pred = predict(model, cloud);
  io::write_ply(cloud, output, io::ColorBy::prediction, pred);
  out << "wrote " << output.string() << " (" << pred.size() << " points)\n";
  return kExitOk;
}

template <typename T>
int dump_with(const fs::path& checkpoint, const geom::PointCloud& cloud, std::size_t query,
              const fs::path& out_dir, std::ostream& out) {
  const Model<T> model = load_checkpoint<T>(checkpoint);
  for (const auto& p : io::dump_attention(model, cloud, query, out_dir)) out << p.string() << "\n";
  return kExitOk;
}

geom::PointCloud read_input(const std::string& path) {
  if (path.empty()) throw ArgumentError("--input is required");
  try {
    auto cloud = io::read_xyz_table(path);
    cloud.validate();
    return cloud;
  } catch (const ParseError& e) {
    throw DataError(e.what());
  } catch (const ContractError& e) {
    throw DataError(path + ": " + e.what());
  }
}

int print_info(const std::string& checkpoint, std::ostream& out) {
  ModelConfig mc;
  if (!checkpoint.empty()) mc = read_checkpoint_config(checkpoint);
  out << mc.to_key_values().format();
  const std::size_t n = 2048;
  std::size_t points = n;
  out << "stage schedule for N=" << n << ":";
  for (std::size_t s = 0; s < mc.stage_count; ++s) {
    out << " " << points << "x" << mc.channels_at(s);
    points = (points + mc.downsample_ratio - 1) / mc.downsample_ratio;
  }
  out << "\n";
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Point-cloud segmentation with local geometric and global semantic transformers",
               "gstran"};
  app.require_subcommand(1);

  // normals
  std::string in_path, out_path;
  std::size_t normal_k = 16;
  auto* normals = app.add_subcommand("normals", "Estimate and store per-point normals");
  normals->add_option("--input", in_path, "xyz table")->required();
  normals->add_option("--out", out_path, "Output xyz table with normals")->required();
  normals->add_option("--k", normal_k, "Neighbors per estimate");

  // synth
  io::SyntheticSpec spec;
  std::string family = "plane_with_fin";
  std::optional<std::size_t> test_count;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic two-part dataset");
  synth->add_option("--family", family, "plane_with_fin | two_boxes | l_bracket");
  synth->add_option("--count", spec.train_count, "Training clouds");
  synth->add_option("--test-count", test_count, "Test clouds (default count / 4)");
  synth->add_option("--points", spec.points, "Points per cloud");
  synth->add_option("--noise", spec.noise, "Gaussian position noise");
  synth->add_option("--ratio", spec.ratio, "Fraction of points on the second part");
  synth->add_option("--seed", spec.seed, "Generation seed");
  synth->add_option("--out", out_path, "Output directory")->required();

  // train / eval
  std::string data_dir, config_path, checkpoint, split = "test";
  Overrides train_over, eval_over;
  auto* train_cmd = app.add_subcommand("train", "Train a model on a dataset");
  train_cmd->add_option("--data", data_dir, "Dataset directory")->required();
  train_cmd->add_option("--config", config_path, "key=value config file");
  train_cmd->add_option("--out", out_path, "Run directory (default <data>/run)");
  train_over.add_model_flags(train_cmd);
  train_over.add_train_flags(train_cmd);

  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint");
  eval_cmd->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  eval_cmd->add_option("--data", data_dir, "Dataset directory")->required();
  eval_cmd->add_option("--split", split, "train | val | test");

  // infer / dump-attn / info
  std::size_t query = 0;
  auto* infer = app.add_subcommand("infer", "Predict labels and write a colored ply");
  infer->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  infer->add_option("--input", in_path, "xyz table")->required();
  infer->add_option("--out", out_path, "Output ply")->required();

  auto* dump = app.add_subcommand("dump-attn", "Export one query row of every attention map");
  dump->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  dump->add_option("--input", in_path, "xyz table")->required();
  dump->add_option("--query", query, "Query point index");
  dump->add_option("--out", out_path, "Output directory")->required();

  auto* info = app.add_subcommand("info", "Print a model configuration and its stage schedule");
  info->add_option("--checkpoint", checkpoint, "Checkpoint file");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    const CLI::App* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    err << sub->help();
    return kExitUsage;
  }

  try {
    if (normals->parsed()) {
      auto cloud = read_input(in_path);
      if (normal_k < 3 || normal_k > cloud.size()) {
        throw ArgumentError("--k must lie in [3, point count]");
      }
      auto est = geom::estimate_normals(cloud.positions, normal_k);
      cloud.normals = std::move(est.normals);
      io::write_xyz_table(cloud, out_path);
      out << "wrote " << out_path << " (" << est.degenerate.size() << " degenerate neighborhoods)\n";
      return kExitOk;
    }
    if (synth->parsed()) {
      spec.family = io::parse_shape_family(family);
      spec.test_count = test_count ? *test_count : spec.train_count / 4;
      io::generate_synthetic(spec, out_path);
      out << "wrote " << spec.train_count << " train and " << spec.test_count << " test clouds to "
          << out_path << "\n";
      return kExitOk;
    }
    if (train_cmd->parsed()) {
      const auto manifest = open_dataset(data_dir);
      KeyValues kv = load_config(config_path);
      train_over.apply(kv);
      ModelConfig base;
      base.class_count = manifest.class_count;
      ModelConfig mc = ModelConfig::from_key_values(kv, base);
      mc.class_count = manifest.class_count;
      TrainConfig tc = TrainConfig::from_key_values(kv, TrainConfig{});
      tc.validate();
      mc.validate();
      const auto data = load_train_data(manifest);
      const fs::path run_dir = out_path.empty() ? fs::path(data_dir) / "run" : fs::path(out_path);
      return mc.precision == Precision::f64 ? train_with<double>(mc, tc, data, run_dir, out)
                                            : train_with<float>(mc, tc, data, run_dir, out);
    }
    if (eval_cmd->parsed()) {
      const auto manifest = open_dataset(data_dir);
      const auto& files = split == "train" ? manifest.train : split == "val" ? manifest.val : manifest.test;
      if (split != "train" && split != "val" && split != "test") {
        throw ArgumentError("--split must be train, val or test");
      }
      const auto clouds = io::load_split(manifest, files);
      if (clouds.empty()) throw DataError("split '" + split + "' is empty");
      std::optional<CategoryParts> parts;
      if (manifest.mode == io::DatasetMode::part) parts = manifest.category_parts;
      const ModelConfig mc = read_checkpoint_config(checkpoint);
      if (mc.class_count < manifest.class_count) {
        throw DataError("checkpoint predicts " + std::to_string(mc.class_count) +
                        " classes, dataset has " + std::to_string(manifest.class_count));
      }
      return mc.precision == Precision::f64 ? eval_with<double>(checkpoint, clouds, parts, out)
                                            : eval_with<float>(checkpoint, clouds, parts, out);
    }
    if (infer->parsed()) {
      const auto cloud = read_input(in_path);
      const ModelConfig mc = read_checkpoint_config(checkpoint);
      return mc.precision == Precision::f64 ? infer_with<double>(checkpoint, cloud, out_path, out)
                                            : infer_with<float>(checkpoint, cloud, out_path, out);
    }
    if (dump->parsed()) {
      const auto cloud = read_input(in_path);
      const ModelConfig mc = read_checkpoint_config(checkpoint);
      return mc.precision == Precision::f64 ? dump_with<double>(checkpoint, cloud, query, out_path, out)
                                            : dump_with<float>(checkpoint, cloud, query, out_path, out);
    }
    if (info->parsed()) return print_info(checkpoint, out);
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const ParseError& e) {
    err << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const fs::filesystem_error& e) {
    err << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  }
  err << app.help();
  return kExitUsage;
}

}  // namespace gstran
