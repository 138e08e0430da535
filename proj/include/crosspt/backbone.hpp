// Copyright 2026 The CrossPT Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

#include "crosspt/tensor.hpp"

namespace crosspt {

using TokenId = std::uint32_t;
using TokenSeq = std::vector<TokenId>;

struct BackboneConfig {
  std::size_t d_model = 32;
  std::size_t n_layers = 2;
  std::size_t n_heads = 2;
  std::size_t d_ff = 64;
  std::size_t vocab_size = 64;
  std::size_t max_len = 48;
  std::uint64_t seed = 0;

  /// Throws ConfigError on an inconsistent configuration.
  void validate() const;
  /// Closed-form number of scalar parameters of the architecture.
  std::size_t parameter_count() const;

  friend bool operator==(const BackboneConfig&, const BackboneConfig&) = default;
};

struct BlockWeights {
  Tensor ln1_gamma, ln1_beta;
  Tensor wq, wk, wv, wo;
  Tensor ln2_gamma, ln2_beta;
  Tensor w1, b1, w2, b2;
};

/// Pre-norm transformer encoder with sinusoidal positions, mean pooling and a
/// projection onto the token vocabulary. Immutable after construction; only the
/// prompt input ever carries gradient.
class FrozenBackbone {
 public:
  explicit FrozenBackbone(const BackboneConfig& cfg);

  const BackboneConfig& config() const { return cfg_; }
  bool frozen() const { return true; }

  /// Parameters in checkpoint order.
  std::vector<const Tensor*> parameters() const;
  std::size_t parameter_count() const;

  const Tensor& token_embedding() const { return token_embedding_; }
  const Tensor& output_projection() const { return output_projection_; }
  const std::vector<BlockWeights>& blocks() const { return blocks_; }

  /// Records the forward pass of [prompt; tokens] on the prompt's tape and
  /// returns 1 x vocab_size logits. The prompt may have zero rows.
  Var forward(const Var& prompt, std::span<const TokenId> tokens) const;

  /// B x vocab_size logits for a batch that shares one prompt.
  Var batch_logits(const Var& prompt, std::span<const TokenSeq> inputs) const;

  /// Mean cross-entropy over a batch that shares one prompt.
  Var batch_loss(const Var& prompt, std::span<const TokenSeq> inputs,
                 std::span<const std::size_t> labels) const;

  void save(const std::filesystem::path& path) const;
  static FrozenBackbone load(const std::filesystem::path& path);

  friend bool bit_equal(const FrozenBackbone& a, const FrozenBackbone& b);

 private:
  std::vector<Tensor*> mutable_parameters();
  void check_input(std::size_t prompt_rows, std::span<const TokenId> tokens) const;

  BackboneConfig cfg_;
  Tensor token_embedding_;
  std::vector<BlockWeights> blocks_;
  Tensor output_projection_;
  Tensor positions_;  // max_len x d_model sinusoidal table, not a parameter
};

FrozenBackbone build_backbone(const BackboneConfig& cfg);

/// Plain-value convenience wrapper: logits (length vocab_size) for one input.
Tensor forward(const FrozenBackbone& model, const Tensor& prompt, std::span<const TokenId> tokens);

/// Cross-entropy of one example and its gradient with respect to the prompt.
std::pair<double, Tensor> loss_and_prompt_grad(const FrozenBackbone& model, const Tensor& prompt,
                                               std::span<const TokenId> tokens, std::size_t label_token);

}  // namespace crosspt
