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

#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rgcl/dataset.hpp"
#include "rgcl/eval.hpp"
#include "rgcl/graph.hpp"
#include "rgcl/model.hpp"
#include "rgcl/trainer.hpp"
#include "rgcl/types.hpp"

namespace rgcl::cli {

namespace fs = std::filesystem;
using nlohmann::json;

inline constexpr const char* kVersion = "0.1.0";

inline std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

inline json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

inline void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

inline void write_lines(const fs::path& path, const std::vector<json>& records) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& r : records) out << r.dump() << '\n';
}

inline std::vector<json> read_lines(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path.string());
  std::vector<json> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) out.push_back(json::parse(line));
  }
  return out;
}

/// What a run was: config, data, code version, seeds, and where its outputs live.
struct RunManifest {
  train::TrainConfig config;
  std::uint64_t dataset_fingerprint = 0;
  std::string version = kVersion;
  std::vector<std::uint64_t> seeds;
  std::string output_dir;

  std::string id() const {
    data::detail::Fnv1a h;
    train::TrainConfig c = config;
    c.seed = 0;
    h.update(c.to_json().dump());
    h.update(dataset_fingerprint);
    h.update(std::string_view(version));
    for (auto s : seeds) h.update(s);
    return hex64(h.digest());
  }

  json to_json() const {
    return {{"id", id()},
            {"label", config.label()},
            {"config", config.to_json()},
            {"dataset_fingerprint", hex64(dataset_fingerprint)},
            {"version", version},
            {"seeds", seeds},
            {"output_dir", output_dir}};
  }

  static RunManifest from_json(const json& j) {
    RunManifest m;
    m.config = train::TrainConfig::from_json(j.at("config"));
    m.dataset_fingerprint = std::stoull(j.at("dataset_fingerprint").get<std::string>(), nullptr, 16);
    m.version = j.at("version").get<std::string>();
    m.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    m.output_dir = j.at("output_dir").get<std::string>();
    return m;
  }
};

// ---------------------------------------------------------------------------
// prepare
// ---------------------------------------------------------------------------

struct PrepareOptions {
  fs::path input;
  fs::path output;
  data::Schema schema = data::Schema::parse("\t", "user,item,rating,timestamp", false);
  double threshold = 3.0;
  int kcore = 0;
  data::SplitRatios ratios;
  std::uint64_t seed = 1;
};

inline json stats_record(const data::ImplicitDataset& ds) {
  const auto s = data::stats(ds);
  return {{"users", s.users},
          {"items", s.items},
          {"interactions", s.interactions},
          {"train", ds.train.size()},
          {"valid", ds.valid.size()},
          {"test", ds.test.size()},
          {"sparsity", s.sparsity},
          {"fingerprint", hex64(ds.fingerprint())}};
}

inline void print_stats(std::ostream& out, const json& s) {
  out << std::left << std::setw(10) << "#users" << std::setw(10) << "#items" << std::setw(14) << "#interactions"
      << std::setw(10) << "sparsity" << "train/valid/test\n"
      << std::setw(10) << s["users"].get<Index>() << std::setw(10) << s["items"].get<Index>() << std::setw(14)
      << s["interactions"].get<std::size_t>() << std::setw(10) << std::fixed << std::setprecision(4)
      << s["sparsity"].get<double>() * 100.0 << s["train"].get<std::size_t>() << "/" << s["valid"].get<std::size_t>()
      << "/" << s["test"].get<std::size_t>() << '\n'
      << "fingerprint " << s["fingerprint"].get<std::string>() << '\n';
  out.unsetf(std::ios::fixed);
}

inline data::ImplicitDataset cmd_prepare(const PrepareOptions& opts, std::ostream& out) {
  if (!fs::exists(opts.input)) throw DataError("no such file: " + opts.input.string());
  const auto raw = data::load_interactions(opts.input, opts.schema);
  auto pairs = data::binarize(raw, opts.threshold);
  if (opts.kcore > 0) pairs = data::kcore_filter(std::move(pairs), opts.kcore);
  if (pairs.empty()) throw DataError("no interactions survive filtering");
  auto ds = data::split(pairs, opts.ratios, opts.seed);
  if (!opts.output.empty()) {
    if (opts.output.has_parent_path()) fs::create_directories(opts.output.parent_path());
    data::save_dataset(ds, opts.output);
  }
  print_stats(out, stats_record(ds));
  return ds;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

/// Test-split RankReport as line records.
inline std::vector<json> report_records(const eval::RankReport& r, const std::string& manifest, const std::string& label,
                                        std::uint64_t seed, const std::string& split) {
  std::vector<json> out;
  for (Index k : r.ks) {
    out.push_back({{"manifest", manifest}, {"label", label}, {"seed", seed}, {"split", split}, {"group", "all"},
                   {"metric", "recall"}, {"k", k}, {"value", r.recall.at(k)}});
    out.push_back({{"manifest", manifest}, {"label", label}, {"seed", seed}, {"split", split}, {"group", "all"},
                   {"metric", "ndcg"}, {"k", k}, {"value", r.ndcg.at(k)}});
  }
  return out;
}

struct SeedOutcome {
  std::uint64_t seed = 0;
  int best_epoch = 0;
  int epochs_run = 0;
  double val_metric = 0.0;
  eval::RankReport test;

  json to_json() const {
    json recall = json::object(), ndcg = json::object();
    for (Index k : test.ks) {
      recall[std::to_string(k)] = test.recall.at(k);
      ndcg[std::to_string(k)] = test.ndcg.at(k);
    }
    return {{"seed", seed}, {"best_epoch", best_epoch}, {"epochs_run", epochs_run}, {"val_metric", val_metric},
            {"test_users", test.users}, {"recall", recall}, {"ndcg", ndcg}};
  }

  static SeedOutcome from_json(const json& j) {
    SeedOutcome s;
    s.seed = j.at("seed").get<std::uint64_t>();
    s.best_epoch = j.at("best_epoch").get<int>();
    s.epochs_run = j.at("epochs_run").get<int>();
    s.val_metric = j.at("val_metric").get<double>();
    s.test.users = j.at("test_users").get<Index>();
    for (const auto& [k, v] : j.at("recall").items()) {
      s.test.ks.push_back(std::stoll(k));
      s.test.recall[std::stoll(k)] = v.get<double>();
    }
    for (const auto& [k, v] : j.at("ndcg").items()) s.test.ndcg[std::stoll(k)] = v.get<double>();
    std::sort(s.test.ks.begin(), s.test.ks.end());
    return s;
  }
};

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation; 0 for a single value
};

inline MeanStd mean_std(const std::vector<double>& v) {
  MeanStd m;
  if (v.empty()) return m;
  for (double x : v) m.mean += x;
  m.mean /= static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - m.mean) * (x - m.mean);
    m.std = std::sqrt(ss / static_cast<double>(v.size() - 1));
  }
  return m;
}

struct RunResult {
  RunManifest manifest;
  std::vector<SeedOutcome> seeds;

  MeanStd val_metric() const {
    std::vector<double> v;
    for (const auto& s : seeds) v.push_back(s.val_metric);
    return mean_std(v);
  }
  MeanStd test(const std::string& metric, Index k) const {
    std::vector<double> v;
    for (const auto& s : seeds) v.push_back(metric == "recall" ? s.test.recall.at(k) : s.test.ndcg.at(k));
    return mean_std(v);
  }
};

struct TrainOptions {
  fs::path dataset;
  train::TrainConfig config;
  std::vector<std::uint64_t> seeds{1};
  fs::path output_dir;
  bool resume = true;
  bool quiet = false;
};

inline std::string format_mean_std(const MeanStd& m) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4) << m.mean << " ± " << m.std;
  return os.str();
}

inline void print_run(std::ostream& out, const RunResult& r) {
  out << "run " << r.manifest.id() << "  " << r.manifest.config.label() << '\n';
  out << std::left << std::setw(8) << "seed" << std::setw(8) << "best" << std::setw(10) << "valid";
  for (Index k : {10, 20, 50}) out << std::setw(12) << ("R@" + std::to_string(k)) << std::setw(12) << ("N@" + std::to_string(k));
  out << '\n' << std::fixed << std::setprecision(4);
  for (const auto& s : r.seeds) {
    out << std::setw(8) << s.seed << std::setw(8) << s.best_epoch << std::setw(10) << s.val_metric;
    for (Index k : s.test.ks) out << std::setw(12) << s.test.recall.at(k) << std::setw(12) << s.test.ndcg.at(k);
    out << '\n';
  }
  out.unsetf(std::ios::fixed);
  if (r.seeds.size() > 1) {
    out << "mean±std  R@20 " << format_mean_std(r.test("recall", 20)) << "  N@20 " << format_mean_std(r.test("ndcg", 20))
        << '\n';
  }
}

/// Trains one seed into `dir`, or loads its outcome if the directory already holds a finished
/// run for the same config.
inline SeedOutcome run_seed(const data::ImplicitDataset& ds, const train::TrainConfig& cfg, const fs::path& dir, bool resume,
                            std::ostream* progress) {
  fs::create_directories(dir);
  const fs::path done = dir / "outcome.json";
  if (resume && fs::exists(done)) {
    const json j = read_json(done);
    if (j.at("config_hash").get<std::string>() == hex64(cfg.hash())) return SeedOutcome::from_json(j.at("outcome"));
  }
  write_json(dir / "config.json", cfg.to_json());

  // Append only when the checkpoint will actually be resumed.
  const bool continuing = resume && fs::exists(dir / "state.ckpt");
  std::ofstream log(dir / "train_log.jsonl", continuing ? std::ios::app : std::ios::trunc);
  train::FitOptions opts;
  opts.checkpoint = dir / "state.ckpt";
  opts.resume = resume;
  opts.on_epoch = [&](const train::EpochLog& e) {
    log << e.to_json().dump() << '\n' << std::flush;
    if (progress) {
      *progress << "  seed " << cfg.seed << " epoch " << e.epoch << " loss " << e.l_total << " valid " << e.val_metric
                << " (" << std::setprecision(3) << e.seconds << "s)" << std::setprecision(6) << '\n';
    }
  };
  const auto fitted = train::fit(cfg, ds, opts);

  train::Checkpoint best;
  best.config_hash = cfg.hash();
  best.epoch = fitted.best_epoch;
  best.embeddings = fitted.embeddings;
  best.adam = train::AdamState::zeros_like(fitted.embeddings);
  best.best_embeddings = fitted.embeddings;
  best.best_epoch = fitted.best_epoch;
  best.best_metric = fitted.best_metric;
  train::save_checkpoint(dir / "best.ckpt", best);

  const auto adj = graph::build_adjacency(ds);
  const Matrix z = model::aggregate(model::forward(adj, fitted.embeddings, cfg.layers));
  SeedOutcome o;
  o.seed = cfg.seed;
  o.best_epoch = fitted.best_epoch;
  o.epochs_run = fitted.log.empty() ? 0 : fitted.log.back().epoch;
  o.val_metric = fitted.best_metric;
  o.test = eval::evaluate(z, ds, eval::Split::kTest);
  write_json(done, {{"config_hash", hex64(cfg.hash())}, {"outcome", o.to_json()}});
  return o;
}

inline RunResult cmd_train(const TrainOptions& opts, std::ostream& out) {
  opts.config.validate();
  if (opts.seeds.empty()) throw ConfigError("at least one seed is required");
  if (opts.output_dir.empty()) throw ConfigError("an output directory is required");
  const auto ds = data::load_dataset(opts.dataset);

  RunResult result;
  result.manifest.config = opts.config;
  result.manifest.config.seed = opts.seeds.front();
  result.manifest.dataset_fingerprint = ds.fingerprint();
  result.manifest.seeds = opts.seeds;
  result.manifest.output_dir = opts.output_dir.string();
  fs::create_directories(opts.output_dir);
  write_json(opts.output_dir / "manifest.json", result.manifest.to_json());

  const std::string id = result.manifest.id();
  const std::string label = opts.config.label();
  std::vector<json> records;
  for (auto seed : opts.seeds) {
    train::TrainConfig cfg = opts.config;
    cfg.seed = seed;
    const auto o = run_seed(ds, cfg, opts.output_dir / ("seed-" + std::to_string(seed)), opts.resume,
                            opts.quiet ? nullptr : &out);
    for (auto& r : report_records(o.test, id, label, seed, "test")) records.push_back(std::move(r));
    records.push_back({{"manifest", id}, {"label", label}, {"seed", seed}, {"split", "valid"}, {"group", "all"},
                       {"metric", opts.config.eval_metric}, {"k", train::EvalMetric::parse(opts.config.eval_metric).k},
                       {"value", o.val_metric}});
    result.seeds.push_back(o);
  }
  for (const char* metric : {"recall", "ndcg"}) {
    for (Index k : {10, 20, 50}) {
      const auto ms = result.test(metric, k);
      records.push_back({{"manifest", id}, {"label", label}, {"seed", "mean"}, {"split", "test"}, {"group", "all"},
                         {"metric", metric}, {"k", k}, {"value", ms.mean}, {"std", ms.std}});
    }
  }
  write_lines(opts.output_dir / "reports.jsonl", records);
  write_json(opts.output_dir / "summary.json",
             {{"manifest", id}, {"label", label}, {"val_metric", result.val_metric().mean},
              {"seeds", [&] {
                 json a = json::array();
                 for (const auto& s : result.seeds) a.push_back(s.to_json());
                 return a;
               }()}});
  print_run(out, result);
  return result;
}

// ---------------------------------------------------------------------------
// evaluate / group-eval / export
// ---------------------------------------------------------------------------

/// A trained seed directory: its config and best embeddings.
struct TrainedModel {
  train::TrainConfig config;
  Matrix embeddings;

  static TrainedModel load(const fs::path& seed_dir) {
    TrainedModel m;
    m.config = train::TrainConfig::from_json(read_json(seed_dir / "config.json"));
    const auto ckpt = train::load_checkpoint(seed_dir / "best.ckpt");
    if (ckpt.config_hash != m.config.hash()) throw DataError("best.ckpt does not match config.json in " + seed_dir.string());
    m.embeddings = ckpt.best_embeddings;
    return m;
  }

  Matrix aggregate(const data::ImplicitDataset& ds) const {
    if (embeddings.rows() != ds.num_nodes()) throw DataError("checkpoint does not match the dataset's node count");
    return model::aggregate(model::forward(graph::build_adjacency(ds), embeddings, config.layers));
  }
};

inline eval::RankReport cmd_evaluate(const fs::path& dataset, const fs::path& seed_dir, eval::Split split, std::ostream& out) {
  const auto ds = data::load_dataset(dataset);
  const auto model = TrainedModel::load(seed_dir);
  const auto report = eval::evaluate(model.aggregate(ds), ds, split);
  const std::string split_name = split == eval::Split::kTest ? "test" : "valid";
  for (const auto& r : report_records(report, hex64(model.config.hash()), model.config.label(), model.config.seed, split_name)) {
    out << r.dump() << '\n';
  }
  return report;
}

inline std::vector<json> group_records(const eval::GroupReport& g, const std::string& label, std::uint64_t seed) {
  std::vector<json> out;
  const auto add = [&](const std::string& group, const std::string& metric, double v) {
    out.push_back({{"label", label}, {"seed", seed}, {"split", "test"}, {"group", group}, {"metric", metric}, {"k", g.k},
                   {"value", v}});
  };
  for (std::size_t i = 0; i < g.user_groups.size(); ++i) {
    add("user_G" + std::to_string(i), "recall", g.user_groups[i].recall);
    add("user_G" + std::to_string(i), "ndcg", g.user_groups[i].ndcg);
  }
  for (std::size_t i = 0; i < g.item_groups.size(); ++i) {
    add("item_G" + std::to_string(i), "decomposed_recall", g.item_groups[i].recall);
    add("item_G" + std::to_string(i), "decomposed_ndcg", g.item_groups[i].ndcg);
  }
  add("all", "recall", g.overall_recall);
  add("all", "ndcg", g.overall_ndcg);
  add("all", "decomposed_recall", g.overall_decomposed_recall);
  add("all", "decomposed_ndcg", g.overall_decomposed_ndcg);
  return out;
}

inline eval::GroupReport cmd_group_eval(const fs::path& dataset, const fs::path& seed_dir, Index k, std::ostream& out) {
  const auto ds = data::load_dataset(dataset);
  const auto model = TrainedModel::load(seed_dir);
  const auto g = eval::group_eval(model.aggregate(ds), ds, k);
  out << std::left << std::setw(8) << "group" << std::setw(8) << "size" << std::setw(14) << "degree" << std::setw(12)
      << ("R@" + std::to_string(k)) << std::setw(12) << ("N@" + std::to_string(k)) << '\n'
      << std::fixed << std::setprecision(4);
  const auto rows = [&](const char* prefix, const std::vector<eval::GroupMetrics>& groups) {
    for (std::size_t i = 0; i < groups.size(); ++i) {
      const auto& m = groups[i];
      out << std::setw(8) << (prefix + std::to_string(i)) << std::setw(8) << m.size << std::setw(14)
          << (std::to_string(m.min_degree) + "-" + std::to_string(m.max_degree)) << std::setw(12) << m.recall
          << std::setw(12) << m.ndcg << '\n';
    }
  };
  rows("user", g.user_groups);
  rows("item", g.item_groups);
  out.unsetf(std::ios::fixed);
  std::ofstream records(seed_dir / ("group_eval_k" + std::to_string(k) + ".jsonl"));
  for (const auto& r : group_records(g, model.config.label(), model.config.seed)) records << r.dump() << '\n';
  return g;
}

/// Writes aggregate (z.tsv) and raw (e.tsv) embeddings of a trained seed.
inline void cmd_export(const fs::path& dataset, const fs::path& seed_dir, const fs::path& out_dir) {
  const auto ds = data::load_dataset(dataset);
  const auto model = TrainedModel::load(seed_dir);
  fs::create_directories(out_dir);
  model::export_embeddings(out_dir / "z.tsv", model.aggregate(ds), ds);
  model::export_embeddings(out_dir / "e.tsv", model.embeddings, ds);
}

// ---------------------------------------------------------------------------
// ablate / sweep
// ---------------------------------------------------------------------------

inline const std::vector<std::string>& ablation_variants() {
  static const std::vector<std::string> kVariants = {"full", "no_cons", "no_rand", "no_ac", "no_adv"};
  return kVariants;
}

inline train::TrainConfig with_ablation(train::TrainConfig cfg, const std::string& flag) {
  if (flag == "full") return cfg;
  cfg.set("ablation", flag, true);
  return cfg;
}

/// Full model plus each single-flag variant, same seeds, one run directory per variant.
inline std::vector<RunResult> cmd_ablate(const TrainOptions& base, std::ostream& out) {
  std::vector<RunResult> runs;
  for (const auto& v : ablation_variants()) {
    TrainOptions o = base;
    o.config = with_ablation(base.config, v);
    o.output_dir = base.output_dir / v;
    runs.push_back(cmd_train(o, out));
  }
  out << "\n" << std::left << std::setw(10) << "variant" << std::setw(22) << "R@20" << std::setw(22) << "N@20"
      << "seeds<=full\n";
  for (std::size_t r = 0; r < runs.size(); ++r) {
    std::size_t not_better = 0;
    for (std::size_t s = 0; s < runs[r].seeds.size(); ++s) {
      if (runs[r].seeds[s].test.recall.at(20) <= runs[0].seeds[s].test.recall.at(20)) ++not_better;
    }
    out << std::setw(10) << ablation_variants()[r] << std::setw(22) << format_mean_std(runs[r].test("recall", 20))
        << std::setw(22) << format_mean_std(runs[r].test("ndcg", 20)) << not_better << "/" << runs[r].seeds.size() << '\n';
  }
  return runs;
}

struct GridAxis {
  std::string section;  // may be empty
  std::string key;
  std::vector<json> values;
};

/// {"base": {sections...}, "grid": {"tau": [..], "objective.alpha": [..]}, "seeds": [..]}
struct SweepSpec {
  train::TrainConfig base;
  std::vector<GridAxis> axes;
  std::vector<std::uint64_t> seeds{1};

  static SweepSpec from_json(const json& j, const train::TrainConfig& defaults) {
    SweepSpec s;
    s.base = defaults;
    for (const auto& [key, _] : j.items()) {
      if (key != "base" && key != "grid" && key != "seeds") throw ConfigError("unknown sweep key '" + key + "'");
    }
    if (j.contains("base")) s.base.merge_json(j.at("base"));
    if (j.contains("seeds")) s.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    if (!j.contains("grid") || !j.at("grid").is_object() || j.at("grid").empty()) throw ConfigError("sweep grid is empty");
    for (const auto& [name, values] : j.at("grid").items()) {
      GridAxis a;
      const auto dot = name.find('.');
      a.section = dot == std::string::npos ? "" : name.substr(0, dot);
      a.key = dot == std::string::npos ? name : name.substr(dot + 1);
      if (!values.is_array() || values.empty()) throw ConfigError("sweep grid axis '" + name + "' is empty");
      a.values.assign(values.begin(), values.end());
      train::TrainConfig probe = s.base;
      for (const auto& v : a.values) probe.set(a.section, a.key, v);
      s.axes.push_back(std::move(a));
    }
    return s;
  }

  /// Cartesian product in row-major order (last axis varies fastest).
  std::vector<train::TrainConfig> points() const {
    std::vector<train::TrainConfig> out{base};
    for (const auto& a : axes) {
      std::vector<train::TrainConfig> next;
      for (const auto& c : out) {
        for (const auto& v : a.values) {
          train::TrainConfig p = c;
          p.set(a.section, a.key, v);
          p.validate();
          next.push_back(std::move(p));
        }
      }
      out = std::move(next);
    }
    return out;
  }
};

/// Runs every grid point sequentially; finished points are picked up from their outcome files.
inline std::vector<RunResult> cmd_sweep(const fs::path& dataset, const SweepSpec& spec, const fs::path& output_dir,
                                        std::ostream& out) {
  const auto points = spec.points();
  if (points.empty()) throw ConfigError("sweep grid is empty");
  std::vector<RunResult> runs;
  for (std::size_t p = 0; p < points.size(); ++p) {
    TrainOptions o;
    o.dataset = dataset;
    o.config = points[p];
    o.seeds = spec.seeds;
    o.output_dir = output_dir / ("point-" + std::to_string(p));
    o.resume = true;
    runs.push_back(cmd_train(o, out));
  }
  std::vector<std::size_t> order(runs.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return runs[a].val_metric().mean > runs[b].val_metric().mean; });
  std::vector<json> summary;
  out << "\n" << std::left << std::setw(10) << "point";
  for (const auto& a : spec.axes) out << std::setw(14) << a.key;
  out << std::setw(12) << "valid" << std::setw(22) << "R@20" << "N@20\n";
  for (std::size_t idx : order) {
    const auto& r = runs[idx];
    const json cfg = r.manifest.config.to_json();
    json row = {{"point", idx}, {"manifest", r.manifest.id()}, {"val_metric", r.val_metric().mean},
                {"recall@20", r.test("recall", 20).mean}, {"ndcg@20", r.test("ndcg", 20).mean}};
    out << std::setw(10) << idx;
    for (const auto& a : spec.axes) {
      const auto section = a.section.empty() ? *train::TrainConfig::section_of(a.key) : a.section;
      const json v = cfg.at(section).at(a.key);
      row[a.key] = v;
      out << std::setw(14) << v.dump();
    }
    out << std::fixed << std::setprecision(4) << std::setw(12) << r.val_metric().mean << std::setw(22)
        << format_mean_std(r.test("recall", 20)) << format_mean_std(r.test("ndcg", 20)) << '\n';
    out.unsetf(std::ios::fixed);
    summary.push_back(std::move(row));
  }
  write_lines(output_dir / "sweep_summary.jsonl", summary);
  return runs;
}

}  // namespace rgcl::cli
