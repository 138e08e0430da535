// Copyright 2026 The CrossPT Authors
// SPDX-License-Identifier: Apache-2.0

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "crosspt/errors.hpp"
#include "crosspt/harness.hpp"
#include "crosspt/taskgen.hpp"

namespace {

void print_report(const crosspt::RunReport& report) {
  for (const crosspt::CellResult& c : report.cells) {
    if (c.ok) {
      std::printf("%-5s shots=%-4zu seed=%-4llu acc=%.4f\n", c.key.method.c_str(), c.key.shots,
                  static_cast<unsigned long long>(c.key.seed), c.mean_accuracy);
    } else {
      std::printf("%-5s shots=%-4zu seed=%-4llu FAILED: %s\n", c.key.method.c_str(), c.key.shots,
                  static_cast<unsigned long long>(c.key.seed), c.error.c_str());
    }
  }
}

crosspt::ExperimentConfig load(const std::string& path, const std::optional<std::string>& out) {
  crosspt::ExperimentConfig cfg = crosspt::load_experiment_config(path);
  if (out) cfg.out = *out;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cross-task prompt composition experiments"};
  app.require_subcommand(1);
  app.fallthrough();

  std::size_t jobs = 1;
  std::optional<std::string> out;
  app.add_option("--jobs,-j", jobs, "Cells run concurrently")->check(CLI::PositiveNumber);
  app.add_option("--out,-o", out, "Output directory, overriding the config");

  std::string config_path;
  auto* run = app.add_subcommand("run", "Run every (method, shots, seed) cell of a config");
  run->add_option("config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);

  std::vector<std::size_t> m_values{1, 2, 4, 8};
  auto* sweep_sources = app.add_subcommand("sweep-sources", "Run a config for several source counts M");
  sweep_sources->add_option("config", config_path, "Experiment config (JSON)")
      ->required()
      ->check(CLI::ExistingFile);
  sweep_sources->add_option("--m", m_values, "Source counts")->delimiter(',');

  std::vector<double> source_lrs{0.01, 0.05, 0.1};
  std::vector<double> private_lrs{0.01, 0.02, 0.05};
  auto* sweep_lr = app.add_subcommand("sweep-lr", "Run a config over a source x private learning-rate grid");
  sweep_lr->add_option("config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  sweep_lr->add_option("--source-lrs", source_lrs, "Source learning rates")->delimiter(',');
  sweep_lr->add_option("--private-lrs", private_lrs, "Private learning rates")->delimiter(',');

  std::string cell_dir;
  auto* inspect = app.add_subcommand("inspect", "Print the metrics of one result cell");
  inspect->add_option("cell-dir", cell_dir, "Cell directory")->required()->check(CLI::ExistingDirectory);

  crosspt::FamilyOptions family;
  std::string family_dir;
  std::string family_format = "tsv";
  auto* make_family = app.add_subcommand("make-family", "Write a synthetic task family as task files");
  make_family->add_option("dir", family_dir, "Destination directory")->required();
  make_family->add_option("--clusters", family.n_clusters);
  make_family->add_option("--tasks-per-cluster", family.tasks_per_cluster);
  make_family->add_option("--classes", family.num_classes);
  make_family->add_option("--seed", family.seed);
  make_family->add_option("--format", family_format)->check(CLI::IsMember({"tsv", "jsonl"}));

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      const auto report = crosspt::run_experiment(load(config_path, out), jobs);
      print_report(report);
      return report.all_ok() ? 0 : 1;
    }
    if (*sweep_sources) {
      bool ok = true;
      for (const auto& r : crosspt::sweep_sources(load(config_path, out), m_values, jobs)) {
        print_report(r);
        ok = ok && r.all_ok();
      }
      return ok ? 0 : 1;
    }
    if (*sweep_lr) {
      bool ok = true;
      for (const auto& r : crosspt::sweep_lr(load(config_path, out), source_lrs, private_lrs, jobs)) {
        print_report(r);
        ok = ok && r.all_ok();
      }
      return ok ? 0 : 1;
    }
    if (*inspect) {
      std::cout << crosspt::inspect_cell(cell_dir);
      return 0;
    }
    if (*make_family) {
      const crosspt::TaskFamily f = crosspt::make_family(family, crosspt::BackboneConfig{});
      std::filesystem::create_directories(family_dir);
      const auto fmt = family_format == "jsonl" ? crosspt::TaskFileFormat::Jsonl : crosspt::TaskFileFormat::Tsv;
      for (const crosspt::Task& t : f.tasks) {
        crosspt::save_task_file(t, std::filesystem::path(family_dir) / (t.spec.name + "." + family_format), fmt);
      }
      crosspt::write_family_manifest(f, std::filesystem::path(family_dir) / "family.json");
      return 0;
    }
  } catch (const crosspt::Error& e) {
    std::cerr << "crosspt: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
