// Copyright 2026 The CrossPT Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <fstream>
#include <sstream>
#include <vector>

#include <json.hpp>

#include "crosspt/errors.hpp"
#include "crosspt/harness.hpp"
#include "test_util.hpp"

using namespace crosspt;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ExperimentConfig quick_config(const std::string& name, const std::string& methods) {
  const auto out = crosspt::testing::scratch_dir(name);
  return parse_experiment_config(R"({"methods": )" + methods +
                                 R"(, "shots": [8], "seeds": [1, 2, 3], "pool_size": 64, "prompt_length": 4,
      "overrides": {"epochs": 1, "stage1_epochs": 1}, "out": ")" +
                                 out.string() + "\"}");
}

std::vector<std::vector<std::string>> csv_rows(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::stringstream ss(text);
  std::string line;
  while (std::getline(ss, line)) {
    std::vector<std::string> cells;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

}  // namespace

TEST_CASE("config parsing") {
  const ExperimentConfig c = parse_experiment_config(
      R"({"methods": ["P", "silp"], "shots": [8, 16], "seeds": [4], "family": "contradictory",
          "label_scheme": "standardized", "prefixes": false, "backbone_seed": 3,
          "overrides": {"lr_source": 0.2, "encoder_reuse": "carryover"}, "task_shots": {"a": 4}, "out": "x"})");
  CHECK(c.methods == std::vector<std::string>{"P", "silp"});
  CHECK(c.shots == std::vector<std::size_t>{8, 16});
  CHECK(c.family == FamilyKind::Contradictory);
  CHECK(c.label_scheme == LabelScheme::Standardized);
  CHECK_FALSE(c.prefixes);
  CHECK(c.backbone.seed == 3);
  CHECK(c.overrides.at("lr_source") == 0.2);
  CHECK(c.encoder_reuse == EncoderReuse::Carryover);
  CHECK(c.task_shots.at("a") == 4);
  CHECK(c.out == "x");

  CHECK_THROWS_AS(parse_experiment_config("{"), ConfigError);
  CHECK_THROWS_AS(parse_experiment_config(R"({"methods": ["XYZ"]})"), ConfigError);
  CHECK_THROWS_AS(parse_experiment_config(R"({"methods": ["P"], "seeds": []})"), ConfigError);
  CHECK_THROWS_AS(parse_experiment_config(R"({"methods": ["P"], "colour": 1})"), ConfigError);
  CHECK_THROWS_AS(parse_experiment_config(R"({"methods": ["P"], "overrides": {"lr_private": -1}})"), ConfigError);
  CHECK_THROWS_AS(parse_experiment_config(R"({"methods": ["P"], "overrides": {"momentum": 1}})"), ConfigError);
  CHECK_THROWS_AS(parse_experiment_config(R"({"methods": ["P"], "shots": [-2]})"), ConfigError);
  CHECK_THROWS_AS(parse_experiment_config(R"({"methods": ["P"], "overrides": {"a": {"b": 1}}})"), ConfigError);
  CHECK_THROWS_AS(load_experiment_config("/nonexistent/config.json"), ConfigError);
}

TEST_CASE("minimal grid writes one cell") {
  ExperimentConfig cfg = quick_config("minimal", R"(["P"])");
  cfg.seeds = {1};
  const RunReport r = run_experiment(cfg);
  REQUIRE(r.cells.size() == 1);
  CHECK(r.all_ok());
  const auto cell = cfg.out / "P" / "8" / "1";
  for (const char* f : {"metrics.json", "weights.csv", "sim.svg", "crosstask.svg", "trace.csv"}) {
    CHECK(std::filesystem::exists(cell / f));
  }
  CHECK(std::filesystem::exists(cfg.out / "aggregate.csv"));
  CHECK(std::filesystem::exists(cfg.out / "backbone.cptb"));
  CHECK(inspect_cell(cell) == slurp(cell / "metrics.json"));
  CHECK_THROWS_AS(inspect_cell(cfg.out / "P"), StoreError);
}

TEST_CASE("aggregate matches the per-cell metrics") {
  const ExperimentConfig cfg = quick_config("aggregate", R"(["SLP", "P"])");
  const RunReport r = run_experiment(cfg, 2);
  CHECK(r.all_ok());
  const auto rows = csv_rows(slurp(cfg.out / "aggregate.csv"));
  REQUIRE(rows.size() == 3);
  CHECK(rows[0] == std::vector<std::string>{"method", "shots", "cells_ok", "cells_failed", "accuracy_mean",
                                            "accuracy_std", "weighted_sim_mean", "weighted_sim_std"});
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const std::string method = rows[i][0];
    std::vector<double> acc;
    for (int seed = 1; seed <= 3; ++seed) {
      std::ifstream in(cfg.out / method / "8" / std::to_string(seed) / "metrics.json");
      acc.push_back(nlohmann::json::parse(in)["mean_accuracy"].get<double>());
    }
    const double mean = (acc[0] + acc[1] + acc[2]) / 3.0;
    double var = 0.0;
    for (double a : acc) var += (a - mean) * (a - mean);
    const double sd = std::sqrt(var / 2.0);
    CHECK(rows[i][2] == "3");
    CHECK(std::abs(std::stod(rows[i][4]) - mean) < 1e-6);
    CHECK(std::abs(std::stod(rows[i][5]) - sd) < 1e-6);
    if (method == "P") CHECK(rows[i][6] == "undefined");
  }

  const std::string first = slurp(cfg.out / "aggregate.csv");
  run_experiment(cfg, 1);
  CHECK(slurp(cfg.out / "aggregate.csv") == first);
}

TEST_CASE("failed cells are recorded and the rest still run") {
  ExperimentConfig cfg = quick_config("failure", R"(["P", "SL"])");
  cfg.seeds = {1};
  cfg.task_shots["c0_t0"] = 1000;
  cfg.task_shots["c1_t1"] = 4;
  const RunReport r = run_experiment(cfg);
  CHECK_FALSE(r.all_ok());
  for (const CellResult& c : r.cells) {
    CHECK_FALSE(c.ok);
    CHECK(std::filesystem::exists(c.dir / "error.txt"));
    CHECK(inspect_cell(c.dir).find("shots") != std::string::npos);
  }
  const auto rows = csv_rows(slurp(cfg.out / "aggregate.csv"));
  CHECK(rows[1][2] == "0");
  CHECK(rows[1][3] == "1");
  CHECK(rows[1][4] == "nan");
}

TEST_CASE("task files as the family") {
  const auto dir = crosspt::testing::scratch_dir("filefamily");
  FamilyOptions o;
  o.pool_size = 64;
  const TaskFamily f = make_family(o, BackboneConfig{});
  save_task_file(f.tasks[0], dir / "alpha.tsv", TaskFileFormat::Tsv);
  save_task_file(f.tasks[1], dir / "beta.jsonl", TaskFileFormat::Jsonl);
  ExperimentConfig cfg = quick_config("filefamily_out", R"(["SLPN"])");
  cfg.seeds = {1};
  cfg.family = FamilyKind::Files;
  cfg.task_files = {dir / "alpha.tsv", dir / "beta.jsonl"};
  const RunReport r = run_experiment(cfg);
  REQUIRE(r.all_ok());
  CHECK(r.cells[0].task_names == std::vector<std::string>{"alpha", "beta"});
}

TEST_CASE("sweeps") {
  ExperimentConfig cfg = quick_config("sweeps", R"(["SL"])");
  cfg.seeds = {1};
  const auto reports = sweep_sources(cfg, {1});
  CHECK(reports.size() == 1);
  const auto rows = csv_rows(slurp(cfg.out / "sources.csv"));
  CHECK(rows.size() == 2);
  CHECK(std::filesystem::exists(cfg.out / "sources.svg"));
  CHECK(std::filesystem::exists(cfg.out / "M1" / "aggregate.csv"));
  CHECK_THROWS_AS(sweep_sources(cfg, {0}), ConfigError);
  ExperimentConfig wrong = cfg;
  wrong.methods = {"SILP"};
  CHECK_THROWS_AS(sweep_sources(wrong, {1}), ConfigError);

  ExperimentConfig lr = quick_config("sweeps_lr", R"(["SLP"])");
  lr.seeds = {1};
  sweep_lr(lr, {0.2}, {0.1});
  const auto grid = csv_rows(slurp(lr.out / "lr_grid_SLP.csv"));
  CHECK(grid.size() == 2);
  CHECK(grid[0].size() == 2);
  CHECK(std::filesystem::exists(lr.out / "lr_grid_SLP.svg"));
  CHECK_THROWS_AS(sweep_lr(lr, {-0.1}, {0.1}), ConfigError);
  CHECK_THROWS_AS(sweep_lr(cfg, {0.1}, {0.1}), ConfigError);
}
