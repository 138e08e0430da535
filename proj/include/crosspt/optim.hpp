// Copyright 2026 The CrossPT Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "crosspt/tensor.hpp"

namespace crosspt {

struct Hyperparams {
  double lr_source = 0.05;
  double lr_private = 0.02;
  double lr_attention = 0.1;
  double lr_encoder = 0.01;
  std::size_t batch_size = 16;
  std::size_t epochs = 20;
  std::uint64_t seed = 1;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;

  /// Rates for configurations that start from pre-trained prompts (20 epochs)
  /// or from scratch (30 epochs, faster prompt rates).
  static Hyperparams for_initialized();
  static Hyperparams for_scratch();

  void validate() const;
};

enum class GroupLabel { Source, Private, Attention, Encoder };

std::string to_string(GroupLabel label);

struct AdamState {
  std::vector<double> m, v;
  std::size_t steps = 0;
};

/// Tensors sharing one learning rate, with per-tensor Adam moments.
struct ParamGroup {
  GroupLabel label = GroupLabel::Source;
  std::vector<Tensor*> tensors;
  double lr = 0.0;
  std::vector<AdamState> state;

  ParamGroup(GroupLabel label, std::vector<Tensor*> tensors, double lr);
  std::size_t parameter_count() const;
};

/// One bias-corrected Adam update for every tensor of `group` that holds a
/// gradient. Tensors without a gradient this step are skipped and keep their
/// moments and step count. A gradient of the wrong size is a contract error.
void adam_step(ParamGroup& group, const Hyperparams& hp);

/// A fresh permutation of [0, n) cut into consecutive batches; the last batch
/// may be short.
std::vector<std::vector<std::size_t>> shuffled_batches(std::size_t n, std::size_t batch_size, Rng& rng);

}  // namespace crosspt
