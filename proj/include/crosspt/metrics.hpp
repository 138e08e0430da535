// Copyright 2026 The CrossPT Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "crosspt/tensor.hpp"

namespace crosspt {

struct SimMatrix {
  std::vector<std::string> row_labels;
  std::vector<std::string> col_labels;
  Tensor values;  // rows x cols
};

/// Column-wise mean over the k rows of a prompt.
Tensor mean_embedding(const Tensor& prompt);

/// Sim_ij = cosine(mean(target_i), mean(slot_j)).
SimMatrix target_source_sim(std::span<const Tensor> targets, std::span<const std::string> target_names,
                            std::span<const Tensor> slots, std::span<const std::string> slot_names);

/// Weighted similarity to source prompts: (1/N) sum_i sum_j w_ij Sim_ij.
/// `weights` holds only the source-slot entries of each normalized attention
/// row (not renormalized). Returns nullopt when there are no source columns.
std::optional<double> weighted_sim_source(const Tensor& weights, const Tensor& sim);

/// The x100 display scale.
inline double weighted_sim_display(double raw) { return 100.0 * raw; }

/// S_ij = R_ij / sqrt(R_ii R_jj), where R_ij is the mean cosine between every
/// row of prompt i and every row of prompt j.
SimMatrix cross_task_sim(std::span<const Tensor> prompts, std::span<const std::string> names);

enum class MatrixFormat { Csv, Svg };

void export_matrix(const SimMatrix& m, const std::filesystem::path& path, MatrixFormat format,
                   const std::string& title = "");
SimMatrix import_matrix_csv(const std::filesystem::path& path);

struct LineSeries {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

/// Minimal line chart, one polyline with point markers per series.
void export_line_plot(std::span<const LineSeries> series, const std::string& x_label, const std::string& y_label,
                      const std::filesystem::path& path, const std::string& title = "");

}  // namespace crosspt
