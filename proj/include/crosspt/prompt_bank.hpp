// Copyright 2026 The CrossPT Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "crosspt/backbone.hpp"
#include "crosspt/optim.hpp"
#include "crosspt/taskgen.hpp"
#include "crosspt/tensor.hpp"

namespace crosspt {

inline constexpr std::size_t kDefaultPromptLength = 10;
inline constexpr double kPromptInitStddev = 0.5;

/// Shared linear map h_i = W e_i + b applied to every raw prompt row.
struct PromptEncoder {
  Tensor W;  // d x d
  Tensor b;  // d
  bool trainable = true;

  /// W = I, b = 0.
  static PromptEncoder identity(std::size_t d);

  std::size_t dim() const { return b.size(); }
  std::size_t parameter_count() const { return W.size() + b.size(); }
  void set_trainable(bool flag);
};

/// Plain encode: row i of the result is W * E[i] + b.
Tensor encode(const PromptEncoder& enc, const Tensor& E);
/// Recording encode, E * W^T + b, differentiable in all three inputs.
Var encode(const Var& W, const Var& b, const Var& E);

enum class PromptRole : std::uint8_t { Source = 0, Private = 1, Target = 2 };

std::string to_string(PromptRole role);

struct SoftPrompt {
  std::string name;
  PromptRole role = PromptRole::Source;
  Tensor E;  // k x d raw token embeddings

  std::size_t length() const { return E.rows(); }
  std::size_t dim() const { return E.cols(); }
};

/// Directory of prompt checkpoints, one `<name>.cptp` file per prompt.
class PromptStore {
 public:
  explicit PromptStore(std::filesystem::path directory);

  const std::filesystem::path& directory() const { return dir_; }
  bool contains(std::string_view name) const;
  std::vector<std::string> names() const;

  void save(const SoftPrompt& prompt) const;
  SoftPrompt load(std::string_view name) const;

 private:
  std::filesystem::path path_for(std::string_view name) const;

  std::filesystem::path dir_;
};

void write_prompt(const SoftPrompt& prompt, const std::filesystem::path& path);
SoftPrompt read_prompt(const std::filesystem::path& path);

enum class InitScheme { Gaussian, FromCheckpoint };

/// Gaussian: E ~ N(0, 0.5^2) from `seed`. FromCheckpoint: E copied from the
/// stored prompt `name` (shape must be k x d).
SoftPrompt init_prompt(const std::string& name, std::size_t k, std::size_t d, std::uint64_t seed,
                       InitScheme scheme, PromptRole role = PromptRole::Source,
                       const PromptStore* store = nullptr);

/// Stable per-name seed used for Gaussian prompt initialization.
std::uint64_t prompt_seed(std::uint64_t base, std::string_view name);

struct SourceTrainingResult {
  SoftPrompt prompt;
  std::vector<double> epoch_loss;      // mean training loss per epoch
  std::vector<double> epoch_accuracy;  // training accuracy per epoch
  double initial_loss = 0.0;           // loss over the training set before any step
  double final_loss = 0.0;             // loss over the training set after the last step
};

/// Stage-1 prompt tuning on one task: Adam on E (lr_source) and, when the
/// encoder is trainable, on W and b (lr_encoder). The backbone is untouched.
SourceTrainingResult train_source_prompt(const std::string& name, std::span<const LabeledExample> train,
                                         const FrozenBackbone& model, PromptEncoder& enc, const Hyperparams& hp,
                                         std::size_t prompt_length = kDefaultPromptLength);

/// Mean loss and argmax accuracy (over the full vocabulary) of one encoded prompt.
struct Evaluation {
  double loss = 0.0;
  double accuracy = 0.0;
};
Evaluation evaluate_prompt(const FrozenBackbone& model, const Tensor& encoded_prompt,
                           std::span<const LabeledExample> examples);

/// Index of the largest logit; ties resolve to the lowest index.
std::size_t argmax(std::span<const double> values);

}  // namespace crosspt
