/*
 * Copyright 2026 The rgcl Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *   http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "rgcl/commands.hpp"

namespace {

namespace fs = std::filesystem;
using rgcl::cli::json;

enum Exit { kOk = 0, kUsage = 1, kData = 2, kNumerical = 3 };

struct ConfigFlags {
  std::string file;
  std::vector<std::string> sets;
  std::vector<std::string> ablations;

  void attach(CLI::App* app) {
    app->add_option("--config", file, "JSON config with model/train/objective/ablation sections");
    app->add_option("--set", sets, "Override one key, e.g. --set tau=0.5 (repeatable)");
    app->add_option("--ablate", ablations, "Turn on an ablation flag: no_cons, no_rand, no_ac, no_adv (repeatable)")
        ->check(CLI::IsMember({"no_cons", "no_rand", "no_ac", "no_adv"}));
  }

  rgcl::train::TrainConfig build() const {
    rgcl::train::TrainConfig cfg;
    if (!file.empty()) cfg.merge_json(rgcl::cli::read_json(file));
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw rgcl::ConfigError("--set expects key=value, got '" + s + "'");
      std::string key = s.substr(0, eq);
      std::string section;
      if (const auto dot = key.find('.'); dot != std::string::npos) {
        section = key.substr(0, dot);
        key = key.substr(dot + 1);
      }
      const std::string text = s.substr(eq + 1);
      json value = json::parse(text, nullptr, false);
      if (value.is_discarded()) value = text;  // bare strings such as recall@20
      cfg.set(section, key, value);
    }
    for (const auto& a : ablations) cfg.set("ablation", a, true);
    cfg.validate();
    return cfg;
  }
};

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> out;
  for (auto part : rgcl::data::detail::split_fields(text, ",")) {
    const auto v = rgcl::data::detail::parse_number<std::uint64_t>(rgcl::data::detail::trim(part));
    if (!v) throw rgcl::ConfigError("bad seed list '" + text + "'");
    out.push_back(*v);
  }
  if (out.empty()) throw rgcl::ConfigError("empty seed list");
  return out;
}

}  // namespace

int main(int argc, char** argv) {
#if defined(__GLIBC__)
  // Per-step similarity matrices are large; keep them off the mmap path.
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
  CLI::App app{"Robust graph contrastive recommender: data preparation, training and evaluation"};
  app.set_version_flag("--version", rgcl::cli::kVersion);
  app.require_subcommand(1);

  // prepare
  auto* prepare = app.add_subcommand("prepare", "Binarize, filter and split a raw interaction file into a dataset cache");
  rgcl::cli::PrepareOptions prep;
  std::string delimiter = "\t";
  std::string columns = "user,item,rating,timestamp";
  bool header = false;
  std::string ratios = "8,1,1";
  prepare->add_option("input", prep.input, "Raw interaction file")->required();
  prepare->add_option("-o,--output", prep.output, "Dataset cache to write")->required();
  prepare->add_option("--delimiter", delimiter, "Field delimiter (may be several characters, e.g. ::)");
  prepare->add_option("--columns", columns, "Column roles: user,item,rating,timestamp,skip");
  prepare->add_flag("--header", header, "Skip the first line");
  prepare->add_option("--threshold", prep.threshold, "Keep ratings strictly above this value")->capture_default_str();
  prepare->add_option("--kcore", prep.kcore, "Iterated k-core filter (0 = off)")->capture_default_str();
  prepare->add_option("--split", ratios, "train,valid,test ratios")->capture_default_str();
  prepare->add_option("--seed", prep.seed, "Split seed")->capture_default_str();

  // train / ablate
  rgcl::cli::TrainOptions train_opts;
  ConfigFlags train_cfg;
  std::string seeds = "1";
  bool fresh = false;
  auto* train = app.add_subcommand("train", "Train one configuration over one or more seeds");
  auto* ablate = app.add_subcommand("ablate", "Train the full model and each single ablation variant");
  for (auto* cmd : {train, ablate}) {
    cmd->add_option("dataset", train_opts.dataset, "Dataset cache from 'prepare'")->required();
    cmd->add_option("-o,--output", train_opts.output_dir, "Run directory")->required();
    cmd->add_option("--seeds", seeds, "Comma-separated seeds")->capture_default_str();
    cmd->add_flag("--fresh", fresh, "Ignore finished outcomes and checkpoints in the run directory");
    cmd->add_flag("-q,--quiet", train_opts.quiet, "No per-epoch progress");
    train_cfg.attach(cmd);
  }

  // evaluate / group-eval / export
  std::string dataset_path, run_dir, export_dir, split = "test";
  rgcl::Index group_k = 20;
  auto* evaluate = app.add_subcommand("evaluate", "Full-ranking Recall/NDCG at 10, 20, 50 for a trained seed directory");
  evaluate->add_option("dataset", dataset_path)->required();
  evaluate->add_option("run", run_dir, "Seed directory holding config.json and best.ckpt")->required();
  evaluate->add_option("--split", split)->check(CLI::IsMember({"valid", "test"}))->capture_default_str();
  auto* group = app.add_subcommand("group-eval", "Per-group metrics over five user and five item groups");
  group->add_option("dataset", dataset_path)->required();
  group->add_option("run", run_dir)->required();
  group->add_option("-k", group_k)->capture_default_str();
  auto* exporter = app.add_subcommand("export", "Write aggregate and raw embeddings as TSV");
  exporter->add_option("dataset", dataset_path)->required();
  exporter->add_option("run", run_dir)->required();
  exporter->add_option("-o,--output", export_dir)->required();

  // sweep
  std::string grid_path;
  ConfigFlags sweep_cfg;
  auto* sweep = app.add_subcommand("sweep", "Cartesian grid of configurations, resumable");
  sweep->add_option("dataset", dataset_path)->required();
  sweep->add_option("grid", grid_path, "JSON: {\"base\": {...}, \"grid\": {\"tau\": [...]}, \"seeds\": [...]}")->required();
  sweep->add_option("-o,--output", run_dir)->required();
  sweep_cfg.attach(sweep);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*prepare) {
      prep.schema = rgcl::data::Schema::parse(delimiter, columns, header);
      std::vector<double> r;
      for (auto part : rgcl::data::detail::split_fields(ratios, ",")) {
        const auto v = rgcl::data::detail::parse_number<double>(rgcl::data::detail::trim(part));
        if (!v) throw rgcl::ConfigError("bad --split '" + ratios + "'");
        r.push_back(*v);
      }
      if (r.size() != 3) throw rgcl::ConfigError("--split expects three ratios");
      prep.ratios = {r[0], r[1], r[2]};
      rgcl::cli::cmd_prepare(prep, std::cout);
    } else if (*train || *ablate) {
      train_opts.config = train_cfg.build();
      train_opts.seeds = parse_seeds(seeds);
      train_opts.resume = !fresh;
      if (*train) {
        rgcl::cli::cmd_train(train_opts, std::cout);
      } else {
        rgcl::cli::cmd_ablate(train_opts, std::cout);
      }
    } else if (*evaluate) {
      rgcl::cli::cmd_evaluate(dataset_path, run_dir, split == "test" ? rgcl::eval::Split::kTest : rgcl::eval::Split::kValid,
                              std::cout);
    } else if (*group) {
      rgcl::cli::cmd_group_eval(dataset_path, run_dir, group_k, std::cout);
    } else if (*exporter) {
      rgcl::cli::cmd_export(dataset_path, run_dir, export_dir);
    } else if (*sweep) {
      const auto spec = rgcl::cli::SweepSpec::from_json(rgcl::cli::read_json(grid_path), sweep_cfg.build());
      rgcl::cli::cmd_sweep(dataset_path, spec, run_dir, std::cout);
    }
  } catch (const rgcl::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kUsage;
  } catch (const rgcl::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kNumerical;
  } catch (const rgcl::DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kData;
  }
  return kOk;
}
