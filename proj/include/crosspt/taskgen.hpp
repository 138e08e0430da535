// Copyright 2026 The CrossPT Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "crosspt/backbone.hpp"

namespace crosspt {

enum class LabelScheme { Natural, Synthetic, Standardized };

std::string to_string(LabelScheme scheme);
LabelScheme label_scheme_from_string(std::string_view name);

struct TaskSpec {
  std::string name;
  std::size_t cluster_id = 0;
  std::size_t num_classes = 2;
  LabelScheme label_scheme = LabelScheme::Natural;
  bool prefix_enabled = false;
  std::size_t pool_size = 512;
  std::uint64_t seed = 0;
};

struct LabeledExample {
  TokenSeq tokens;
  TokenId label_token = 0;
  std::size_t label_class = 0;
  std::string task_name;
};

/// A task together with its materialized pool. The pool is split in half:
/// the first half is the training pool, the second half the held-out test set.
struct Task {
  TaskSpec spec;
  std::vector<LabeledExample> train;
  std::vector<LabeledExample> test;
  /// label_tokens[c] is the output token for class c.
  std::vector<TokenId> label_tokens;
};

/// Reserved, disjoint token ranges: [prefix | labels | content].
struct VocabLayout {
  std::size_t prefix_begin = 0, prefix_count = 0;
  std::size_t label_begin = 0, label_count = 0;
  std::size_t content_begin = 0, content_count = 0;
};

struct FamilyOptions {
  std::size_t n_clusters = 2;
  std::size_t tasks_per_cluster = 2;
  std::size_t num_classes = 2;
  LabelScheme scheme = LabelScheme::Natural;
  bool prefixes = true;
  std::size_t pool_size = 512;
  std::uint64_t seed = 0;
  std::size_t min_len = 8;
  std::size_t max_len = 16;
  std::size_t feature_dim = 8;
  double max_rotation_deg = 15.0;
  /// Fraction of oversampled candidates dropped next to the class boundaries.
  double boundary_gap = 0.5;
  /// Spread of the log token weights of each task; larger means fewer dominant tokens.
  double token_skew = 1.0;
};

struct TaskFamily {
  std::vector<Task> tasks;
  VocabLayout layout;
  FamilyOptions options;
  std::size_t vocab_size = 0;

  std::vector<std::string> names() const;
};

TaskFamily make_family(const FamilyOptions& options, const BackboneConfig& backbone);

/// Two tasks over an identical input pool whose labels are flipped.
TaskFamily make_contradictory_pair(std::uint64_t seed, const BackboneConfig& backbone,
                                   bool prefixes = false, std::size_t pool_size = 512);

/// Remaps every label token per `scheme`; the class of each example is kept.
void apply_label_scheme(TaskFamily& family, LabelScheme scheme);

TokenId label_token_for(const VocabLayout& layout, LabelScheme scheme, std::size_t task_index,
                        std::size_t cluster_id, std::size_t num_classes, std::size_t cls);

enum class TaskFileFormat { Tsv, Jsonl };

TaskFileFormat task_file_format_from_path(const std::filesystem::path& path);

/// Loads `tokens<TAB>label` lines or {"tokens": [...], "label": n} objects. The
/// label is a token id; classes are numbered by ascending label token. The task
/// name is the file stem. The first half of the examples forms the training
/// pool and the rest the test set.
Task load_task_file(const std::filesystem::path& path, TaskFileFormat format, std::size_t vocab_size);

/// Writes all examples (train first, then test) in the given format.
void save_task_file(const Task& task, const std::filesystem::path& path, TaskFileFormat format);

/// JSON manifest listing task names, clusters, schemes and seeds.
void write_family_manifest(const TaskFamily& family, const std::filesystem::path& path);

}  // namespace crosspt
