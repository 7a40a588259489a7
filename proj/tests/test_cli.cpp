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

#include <gtest/gtest.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "rgcl/commands.hpp"

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct Result {
  int code = -1;
  std::string out;
};

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = fs::temp_directory_path() / ("rgcl_cli_" + std::to_string(::getpid()));
    fs::remove_all(root_);
    fs::create_directories(root_);
    std::mt19937_64 rng(3);
    std::ofstream raw(root_ / "ratings.tsv");
    raw << "user\titem\trating\ttimestamp\n";
    for (int u = 0; u < 30; ++u) {
      for (int i = 0; i < 40; ++i) {
        if ((u + i) % 3 == 0 || rng() % 5 == 0) raw << "u" << u << '\t' << "i" << i << '\t' << 1 + rng() % 5 << '\t' << u * 100 + i << '\n';
      }
    }
    raw.close();
    const auto r = run("prepare " + (root_ / "ratings.tsv").string() + " -o " + (root_ / "ds.bin").string() + " --header");
    ASSERT_EQ(r.code, 0) << r.out;
    std::ofstream cfg(root_ / "small.json");
    cfg << R"({"model": {"dim": 8}, "train": {"batch_size": 64, "max_epochs": 3, "patience": 3}})";
  }

  static void TearDownTestSuite() { fs::remove_all(root_); }

  static Result run(const std::string& args) {
    const fs::path out = root_ / "stdout.txt";
    const std::string cmd = std::string(RGCL_CLI_PATH) + " " + args + " > " + out.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    Result r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    std::ifstream in(out);
    std::stringstream ss;
    ss << in.rdbuf();
    r.out = ss.str();
    return r;
  }

  static std::string train_args(const fs::path& dir) {
    return "train " + ds() + " -o " + dir.string() + " -q --config " + (root_ / "small.json").string();
  }

  static std::string ds() { return (root_ / "ds.bin").string(); }

  static std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }

  static fs::path root_;
};

fs::path Cli::root_;

TEST_F(Cli, PrepareIsDeterministic) {
  const auto a = run("prepare " + (root_ / "ratings.tsv").string() + " -o " + (root_ / "a.bin").string() + " --header --seed 7");
  const auto b = run("prepare " + (root_ / "ratings.tsv").string() + " -o " + (root_ / "b.bin").string() + " --header --seed 7");
  ASSERT_EQ(a.code, 0) << a.out;
  EXPECT_EQ(a.out, b.out);
  EXPECT_NE(a.out.find("fingerprint"), std::string::npos);
  EXPECT_EQ(slurp(root_ / "a.bin"), slurp(root_ / "b.bin"));
}

TEST_F(Cli, ExitCodes) {
  EXPECT_EQ(run("prepare " + (root_ / "missing.tsv").string() + " -o " + (root_ / "x.bin").string()).code, 2);
  EXPECT_EQ(run(train_args(root_ / "bad") + " --set bogus=1").code, 1);
  EXPECT_EQ(run(train_args(root_ / "bad") + " --set tau=-1").code, 1);
  EXPECT_EQ(run(train_args(root_ / "bad") + " --ablate no_such_flag").code, 1);
  std::ofstream(root_ / "unknown.json") << R"({"objective": {"temperature": 0.2}})";
  EXPECT_EQ(run("train " + ds() + " -o " + (root_ / "bad").string() + " --config " + (root_ / "unknown.json").string()).code, 1);
  EXPECT_EQ(run("train " + (root_ / "nope.bin").string() + " -o " + (root_ / "bad").string()).code, 2);
  EXPECT_EQ(run("frobnicate").code, 1);
}

TEST_F(Cli, MultiSeedRunWritesReportsAndSummary) {
  const fs::path dir = root_ / "multi";
  const auto r = run(train_args(dir) + " --seeds 1,2,3");
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("mean±std"), std::string::npos);
  const auto records = rgcl::cli::read_lines(dir / "reports.jsonl");
  std::set<std::string> seeds;
  int mean_records = 0;
  for (const auto& rec : records) {
    EXPECT_TRUE(rec.contains("manifest"));
    seeds.insert(rec.at("seed").dump());
    if (rec.at("seed") == "mean") {
      ++mean_records;
      EXPECT_TRUE(rec.contains("std"));
    }
  }
  EXPECT_EQ(seeds, (std::set<std::string>{"1", "2", "3", "\"mean\""}));
  EXPECT_EQ(mean_records, 6);
  const auto summary = rgcl::cli::read_json(dir / "summary.json");
  EXPECT_EQ(summary.at("seeds").size(), 3u);
  const auto manifest = rgcl::cli::read_json(dir / "manifest.json");
  EXPECT_EQ(manifest.at("id"), summary.at("manifest"));
  for (int s : {1, 2, 3}) {
    const fs::path sd = dir / ("seed-" + std::to_string(s));
    for (const char* f : {"config.json", "train_log.jsonl", "state.ckpt", "best.ckpt", "outcome.json"}) {
      EXPECT_TRUE(fs::exists(sd / f)) << sd / f;
    }
    EXPECT_EQ(rgcl::cli::read_lines(sd / "train_log.jsonl").size(), 3u);
  }
}

TEST_F(Cli, RerunReproducesOutputsBitForBit) {
  const fs::path dir = root_ / "repro";
  ASSERT_EQ(run(train_args(dir)).code, 0);
  const std::string first = slurp(dir / "reports.jsonl");
  const std::string ckpt = slurp(dir / "seed-1" / "best.ckpt");
  ASSERT_EQ(run(train_args(dir)).code, 0);
  EXPECT_EQ(slurp(dir / "reports.jsonl"), first);
  ASSERT_EQ(run(train_args(dir) + " --fresh").code, 0);
  EXPECT_EQ(slurp(dir / "reports.jsonl"), first);
  EXPECT_EQ(slurp(dir / "seed-1" / "best.ckpt"), ckpt);
}

TEST_F(Cli, BaselineAndAblationLabels) {
  ASSERT_EQ(run(train_args(root_ / "base") + " --set alpha=0 --set objective.mu=0").code, 0);
  EXPECT_EQ(rgcl::cli::read_json(root_ / "base" / "manifest.json").at("label"), "lightgcn-baseline");
  ASSERT_EQ(run(train_args(root_ / "noadv") + " --ablate no_adv").code, 0);
  EXPECT_EQ(rgcl::cli::read_json(root_ / "noadv" / "manifest.json").at("label"), "rgcl-no_adv");
  const auto log = rgcl::cli::read_lines(root_ / "noadv" / "seed-1" / "train_log.jsonl");
  for (const auto& e : log) EXPECT_EQ(e.at("l_adv").get<double>(), 0.0);
}

TEST_F(Cli, AblateRunsEveryVariant) {
  const fs::path dir = root_ / "ablate";
  const auto r = run("ablate " + ds() + " -o " + dir.string() + " -q --config " + (root_ / "small.json").string() +
                     " --set max_epochs=1");
  ASSERT_EQ(r.code, 0) << r.out;
  for (const char* v : {"full", "no_cons", "no_rand", "no_ac", "no_adv"}) EXPECT_TRUE(fs::exists(dir / v / "summary.json")) << v;
  EXPECT_NE(r.out.find("seeds<=full"), std::string::npos);
}

TEST_F(Cli, SinglePointSweepEqualsTrain) {
  std::ofstream(root_ / "grid.json") << R"({"grid": {"tau": [0.2]}, "seeds": [1]})";
  const fs::path sweep = root_ / "sweep";
  const auto r = run("sweep " + ds() + " " + (root_ / "grid.json").string() + " -o " + sweep.string() + " --config " +
                     (root_ / "small.json").string());
  ASSERT_EQ(r.code, 0) << r.out;
  const fs::path single = root_ / "single";
  ASSERT_EQ(run(train_args(single) + " --set tau=0.2").code, 0);
  EXPECT_EQ(rgcl::cli::read_json(sweep / "point-0" / "seed-1" / "outcome.json"),
            rgcl::cli::read_json(single / "seed-1" / "outcome.json"));
  const auto summary = rgcl::cli::read_lines(sweep / "sweep_summary.jsonl");
  ASSERT_EQ(summary.size(), 1u);
  EXPECT_EQ(summary[0].at("tau"), 0.2);

  // Resume: a finished point is not retrained.
  const auto log_before = slurp(sweep / "point-0" / "seed-1" / "train_log.jsonl");
  const auto again = run("sweep " + ds() + " " + (root_ / "grid.json").string() + " -o " + sweep.string() + " --config " +
                         (root_ / "small.json").string());
  ASSERT_EQ(again.code, 0);
  EXPECT_EQ(slurp(sweep / "point-0" / "seed-1" / "train_log.jsonl"), log_before);
  EXPECT_EQ(rgcl::cli::read_lines(sweep / "sweep_summary.jsonl"), summary);
}

TEST_F(Cli, SweepGridErrors) {
  std::ofstream(root_ / "empty.json") << R"({"grid": {}})";
  EXPECT_EQ(run("sweep " + ds() + " " + (root_ / "empty.json").string() + " -o " + (root_ / "s2").string()).code, 1);
  std::ofstream(root_ / "badkey.json") << R"({"grid": {"temperature": [1]}})";
  EXPECT_EQ(run("sweep " + ds() + " " + (root_ / "badkey.json").string() + " -o " + (root_ / "s3").string()).code, 1);
}

TEST(SweepSpec, CartesianOrder) {
  const auto spec = rgcl::cli::SweepSpec::from_json(json::parse(R"({"grid": {"tau": [0.1, 0.2], "objective.alpha": [1, 2, 3]}})"),
                                                    rgcl::train::TrainConfig{});
  const auto pts = spec.points();
  ASSERT_EQ(pts.size(), 6u);
  // nlohmann orders object keys, so "objective.alpha" is the outer axis.
  EXPECT_EQ(pts[0].alpha, 1.0);
  EXPECT_EQ(pts[0].tau, 0.1);
  EXPECT_EQ(pts[1].tau, 0.2);
  EXPECT_EQ(pts[5].alpha, 3.0);
}

TEST_F(Cli, EvaluateGroupEvalAndExport) {
  const fs::path dir = root_ / "trained";
  ASSERT_EQ(run(train_args(dir)).code, 0);
  const fs::path seed = dir / "seed-1";
  const auto ev = run("evaluate " + ds() + " " + seed.string());
  ASSERT_EQ(ev.code, 0) << ev.out;
  const auto outcome = rgcl::cli::read_json(seed / "outcome.json").at("outcome");
  std::istringstream lines(ev.out);
  std::string line;
  int n = 0;
  while (std::getline(lines, line)) {
    const auto rec = json::parse(line);
    EXPECT_EQ(rec.at("value"), outcome.at(rec.at("metric").get<std::string>()).at(rec.at("k").dump()));
    ++n;
  }
  EXPECT_EQ(n, 6);
  EXPECT_EQ(run("evaluate " + ds() + " " + seed.string() + " --split valid").code, 0);

  const auto g = run("group-eval " + ds() + " " + seed.string() + " -k 10");
  ASSERT_EQ(g.code, 0) << g.out;
  const auto records = rgcl::cli::read_lines(seed / "group_eval_k10.jsonl");
  EXPECT_EQ(records.size(), 24u);

  const fs::path out = root_ / "export";
  ASSERT_EQ(run("export " + ds() + " " + seed.string() + " -o " + out.string()).code, 0);
  const auto count = [](const fs::path& p) {
    std::ifstream in(p);
    std::string l;
    int c = 0;
    while (std::getline(in, l)) ++c;
    return c;
  };
  const auto dataset = rgcl::data::load_dataset(root_ / "ds.bin");
  EXPECT_EQ(count(out / "z.tsv"), dataset.num_nodes() + 1);  // plus header
  EXPECT_EQ(count(out / "e.tsv"), dataset.num_nodes() + 1);
  EXPECT_EQ(run("evaluate " + ds() + " " + (root_ / "nowhere").string()).code, 2);
}

}  // namespace
