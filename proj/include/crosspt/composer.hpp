// Copyright 2026 The CrossPT Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "crosspt/tensor.hpp"

namespace crosspt {

enum class Sharing { SingleShared, PerTask };

/// One row of the target-prompt configuration table plus the source count.
///
///   name  use_src init_src learn_src use_priv init_priv
///   P       no      -        -        yes      no
///   PI      no      -        -        yes      yes
///   SL      yes     no       yes      no       -
///   SLP     yes     no       yes      yes      no
///   SIL     yes     yes      yes      no       -
///   SIP     yes     yes      no       yes      no
///   SILP    yes     yes      yes      yes      no
///   SLN / SLPN: SL / SLP with one dedicated source per target task.
struct CompositionConfig {
  std::string name;
  bool use_source = false;
  bool init_source = false;
  bool learn_source = false;
  bool use_private = false;
  bool init_private = false;
  /// Number of source prompts M. Zero for SI* and *N configs until
  /// resolve_sources() fixes it from the task count.
  std::size_t num_source_prompts = 0;
  Sharing sharing = Sharing::SingleShared;
  /// Count the private slot in the temperature denominator as well.
  bool tau_counts_private = false;

  bool initialized() const { return init_source || init_private; }
  std::size_t slot_count() const { return num_source_prompts + (use_private ? 1 : 0); }
  /// M used in tau = 1/M.
  std::size_t temperature_count() const;

  /// Sets M for configs whose source count follows the task count (SI*, SLN, SLPN).
  void resolve_sources(std::size_t num_tasks);
  /// Throws ConfigError when the flags are inconsistent.
  void validate() const;
};

/// Case-insensitive lookup of P, PI, SL, SLN, SLP, SLPN, SIL, SIP, SILP.
CompositionConfig config_from_name(std::string_view name);

const std::vector<std::string>& config_names();

/// Per-target-task logits over [sources..., private?].
struct AttentionTable {
  std::vector<Tensor> rows;
  bool trainable = true;

  static AttentionTable zeros(std::size_t tasks, std::size_t slots);

  std::size_t tasks() const { return rows.size(); }
  std::size_t slots() const { return rows.empty() ? 0 : rows.front().size(); }
  std::size_t parameter_count() const { return tasks() * slots(); }
  Tensor matrix() const;
  void set_trainable(bool flag);
};

/// softmax(z / tau) with tau = 1 / M.
Tensor attention_weights(const Tensor& z, std::size_t M);
Var attention_weights(const Var& z, std::size_t M);

/// Recording composition of the target prompt for one task. `sources` are the
/// encoded source prompts, `private_prompt` the task's encoded private prompt.
/// When sources are unused the private prompt is returned unchanged.
Var compose_target(std::span<const Var> sources, const std::optional<Var>& private_prompt,
                   const std::optional<Var>& logits, const CompositionConfig& cfg);

/// Plain composition from live logits.
Tensor compose_target(std::size_t task, std::span<const Tensor> sources, const Tensor* private_prompt,
                      const AttentionTable& table, const CompositionConfig& cfg);

/// sum_s weights[s] * slots[s], accumulated in slot order.
Tensor compose_from_weights(std::span<const double> weights, std::span<const Tensor* const> slots);

/// Normalized weights for every task (rows) over every slot (columns).
Tensor precompute_inference_weights(const AttentionTable& table, const CompositionConfig& cfg);

/// Writes the T x (M + 1?) weight matrix as CSV: a "task" column, one column
/// per source, then one "private:<task>" column per task where only the row's
/// own private column is nonzero. Values use 6 decimals.
void export_weights_csv(const Tensor& weights, std::span<const std::string> task_names,
                        std::span<const std::string> source_names, bool has_private,
                        const std::filesystem::path& path);

/// Inverse of export_weights_csv: collapses the private columns back into one
/// slot per row.
struct WeightMatrix {
  std::vector<std::string> task_names;
  std::vector<std::string> source_names;
  bool has_private = false;
  Tensor weights;
};
WeightMatrix import_weights_csv(const std::filesystem::path& path);

}  // namespace crosspt
