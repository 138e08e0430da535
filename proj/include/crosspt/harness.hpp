// Copyright 2026 The CrossPT Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "crosspt/backbone.hpp"
#include "crosspt/taskgen.hpp"
#include "crosspt/trainer.hpp"

namespace crosspt {

enum class FamilyKind { Synthetic, Contradictory, Files };

/// Flat experiment description. Only `overrides` and `task_shots` nest one level.
///
///   {"methods": ["P", "SLP"], "shots": [32], "seeds": [1, 2, 3],
///    "family": "synthetic", "clusters": 2, "tasks_per_cluster": 2,
///    "label_scheme": "natural", "prefixes": true,
///    "overrides": {"epochs": 10}, "task_shots": {"c0_t0": 8}, "out": "out"}
struct ExperimentConfig {
  std::vector<std::string> methods;
  std::vector<std::size_t> shots{32};
  std::vector<std::uint64_t> seeds{1};

  FamilyKind family = FamilyKind::Synthetic;
  std::size_t clusters = 2;
  std::size_t tasks_per_cluster = 2;
  std::size_t num_classes = 2;
  LabelScheme label_scheme = LabelScheme::Natural;
  bool prefixes = true;
  std::size_t pool_size = 512;
  double boundary_gap = 0.5;
  double token_skew = 1.0;
  /// Family seed; the cell seed is used when absent.
  std::optional<std::uint64_t> family_seed;
  std::vector<std::filesystem::path> task_files;

  BackboneConfig backbone;
  std::size_t prompt_length = kDefaultPromptLength;

  /// Stage-2 hyperparameter and composition overrides: lr_source, lr_private,
  /// lr_attention, lr_encoder, batch_size, epochs, stage1_epochs,
  /// num_source_prompts, tau_counts_private, encoder_reuse.
  std::map<std::string, double> overrides;
  std::optional<EncoderReuse> encoder_reuse;
  /// Per-task shot counts replacing the cell's shot count.
  std::map<std::string, std::size_t> task_shots;

  std::filesystem::path out = "out";

  void validate() const;
};

ExperimentConfig parse_experiment_config(const std::string& json_text);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

struct CellKey {
  std::string method;
  std::size_t shots = 0;
  std::uint64_t seed = 0;
};

struct CellResult {
  CellKey key;
  std::filesystem::path dir;
  bool ok = false;
  std::string error;
  std::vector<std::string> task_names;
  std::vector<double> task_accuracy;
  double mean_accuracy = 0.0;
  std::optional<double> weighted_sim;
  Tensor weights;
};

/// Tasks of the experiment for one seed: the generated family or the task files.
std::vector<Task> experiment_tasks(const ExperimentConfig& cfg, std::uint64_t seed);

/// Runs one (method, shots, seed) cell and writes its artifacts into `dir`.
/// Failures are returned, not thrown, and leave an error.txt behind.
CellResult run_cell(const ExperimentConfig& cfg, const FrozenBackbone& model, const CellKey& key,
                    const std::filesystem::path& dir);

struct AggregateRow {
  std::string method;
  std::size_t shots = 0;
  std::size_t ok = 0;
  std::size_t failed = 0;
  double accuracy_mean = 0.0;
  double accuracy_std = 0.0;  // sample std; NaN with fewer than two cells
  std::optional<double> weighted_sim_mean;
  std::optional<double> weighted_sim_std;
};

std::vector<AggregateRow> aggregate(const std::vector<CellResult>& cells);
void write_aggregate_csv(const std::vector<AggregateRow>& rows, const std::filesystem::path& path);

struct RunReport {
  std::vector<CellResult> cells;
  std::vector<AggregateRow> rows;
  bool all_ok() const;
};

/// Every (method, shots, seed) cell under `out/<method>/<shots>/<seed>/`, then
/// `out/aggregate.csv`. `jobs` cells run concurrently.
RunReport run_experiment(const ExperimentConfig& cfg, std::size_t jobs = 1);

/// One experiment per M under `out/M<m>/`, then `sources.csv` and
/// `sources.svg` (mean accuracy against M).
std::vector<RunReport> sweep_sources(const ExperimentConfig& cfg, const std::vector<std::size_t>& m_values,
                                     std::size_t jobs = 1);

/// One experiment per (lr_source, lr_private) under `out/lr_<s>_<p>/`, then
/// `lr_grid_<method>.csv` and `.svg` with lr_source rows and lr_private columns.
std::vector<RunReport> sweep_lr(const ExperimentConfig& cfg, const std::vector<double>& source_lrs,
                                const std::vector<double>& private_lrs, std::size_t jobs = 1);

/// metrics.json of a cell, or its error.txt for a failed cell.
std::string inspect_cell(const std::filesystem::path& dir);

}  // namespace crosspt
