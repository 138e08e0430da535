// Copyright 2026 The CrossPT Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "crosspt/backbone.hpp"
#include "crosspt/composer.hpp"
#include "crosspt/metrics.hpp"
#include "crosspt/optim.hpp"
#include "crosspt/prompt_bank.hpp"
#include "crosspt/taskgen.hpp"

namespace crosspt {

/// n training examples drawn without replacement, class balanced; the
/// remainder goes to the lowest class indices first.
std::vector<LabeledExample> few_shot_sample(const Task& task, std::size_t n, std::uint64_t seed);

/// Everything Stage 2 optimizes besides the attention table.
struct PromptBank {
  PromptEncoder encoder;
  std::vector<SoftPrompt> sources;   // M prompts, empty when sources are unused
  std::vector<SoftPrompt> privates;  // one per task, empty when unused

  std::size_t prompt_parameter_count() const;
};

/// Builds the Stage-2 bank for `task_names`. Initialized slots are read from
/// `store` under the task's name; the rest are Gaussian.
PromptBank init_bank(const CompositionConfig& cfg, std::span<const std::string> task_names, std::size_t d,
                     std::size_t prompt_length, std::uint64_t seed, const PromptStore* store);

/// Optimizer groups for a configuration. Sources are left out when they are
/// not learned (SIP, which also freezes the encoder); P and PI get no
/// attention group.
std::vector<ParamGroup> build_param_groups(const CompositionConfig& cfg, PromptBank& bank, AttentionTable& table,
                                           const Hyperparams& hp);

std::size_t trainable_parameter_count(std::span<const ParamGroup> groups);

struct TraceRow {
  std::size_t epoch = 0;
  std::string task;
  double loss = 0.0;
  double accuracy = 0.0;
};

struct TrainRun {
  CompositionConfig config;
  Hyperparams hp;
  std::vector<std::string> task_names;
  std::vector<TraceRow> trace;
  PromptBank bank;
  AttentionTable table;
  std::size_t trainable_parameters = 0;
  std::vector<double> test_accuracy;  // final epoch, per task
  std::vector<double> test_loss;

  double mean_accuracy() const;
  /// Normalized weights, tasks x slots. Empty (0 columns) without sources.
  Tensor weights() const;
  /// Encoded prompt of every slot: sources, then one private per task.
  std::vector<Tensor> encoded_sources() const;
  /// Encoded target prompt used at inference for each task.
  std::vector<Tensor> target_prompts() const;
};

/// Stage 2. `tasks[t].train` is the (already sampled) training set and
/// `tasks[t].test` the evaluation set.
TrainRun train_multitask(const CompositionConfig& cfg, std::span<const Task> tasks, const FrozenBackbone& model,
                         PromptBank bank, const Hyperparams& hp, std::size_t prompt_length = kDefaultPromptLength);

enum class EncoderReuse {
  PerStage,   // each Stage-1 task and Stage 2 start from a fresh identity encoder
  Carryover,  // one encoder trained through Stage 1 in task order, then into Stage 2
};

struct PipelineOptions {
  std::size_t prompt_length = kDefaultPromptLength;
  EncoderReuse encoder_reuse = EncoderReuse::PerStage;
};

/// Stage 1 (only for initialized configs) then Stage 2. Stage-1 prompts are
/// persisted in `store` under each task's name.
TrainRun run_pipeline(std::span<const Task> stage1_tasks, CompositionConfig cfg, std::span<const Task> stage2_tasks,
                      const FrozenBackbone& model, const Hyperparams& hp1, const Hyperparams& hp2,
                      const PromptStore& store, const PipelineOptions& options = {});

struct RunMetrics {
  std::optional<double> weighted_sim;
  SimMatrix sim;         // target x slot cosine of mean embeddings
  SimMatrix cross_task;  // normalized cross-task similarity of target prompts
};

RunMetrics compute_metrics(const TrainRun& run);

void write_trace_csv(const TrainRun& run, const std::filesystem::path& path);

/// Per-task and mean accuracy, WeightedSim (null when undefined) and the
/// weight matrix path.
void write_metrics_json(const TrainRun& run, const RunMetrics& metrics, const std::string& weights_path,
                        const std::filesystem::path& path);

}  // namespace crosspt
