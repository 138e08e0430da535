// Copyright 2026 The CrossPT Authors
// SPDX-License-Identifier: Apache-2.0

#include "crosspt/composer.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "crosspt/errors.hpp"

namespace crosspt {

const std::vector<std::string>& config_names() {
  static const std::vector<std::string> names{"P", "PI", "SL", "SLN", "SLP", "SLPN", "SIL", "SIP", "SILP"};
  return names;
}

CompositionConfig config_from_name(std::string_view name) {
  std::string upper(name);
  std::transform(upper.begin(), upper.end(), upper.begin(),
                 [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  CompositionConfig c;
  c.name = upper;
  if (upper == "P" || upper == "PI") {
    c.use_private = true;
    c.init_private = upper == "PI";
    return c;
  }
  if (upper == "SL" || upper == "SLN" || upper == "SLP" || upper == "SLPN") {
    c.use_source = true;
    c.learn_source = true;
    c.use_private = upper == "SLP" || upper == "SLPN";
    const bool per_task = upper.back() == 'N';
    c.sharing = per_task ? Sharing::PerTask : Sharing::SingleShared;
    c.num_source_prompts = per_task ? 0 : 1;
    return c;
  }
  if (upper == "SIL" || upper == "SIP" || upper == "SILP") {
    c.use_source = true;
    c.init_source = true;
    c.learn_source = upper != "SIP";
    c.use_private = upper != "SIL";
    c.sharing = Sharing::PerTask;
    return c;
  }
  std::string valid;
  for (const std::string& n : config_names()) valid += (valid.empty() ? "" : ", ") + n;
  throw ConfigError("unknown configuration \"" + std::string(name) + "\"; valid names: " + valid);
}

std::size_t CompositionConfig::temperature_count() const {
  return num_source_prompts + (tau_counts_private && use_private ? 1 : 0);
}

void CompositionConfig::resolve_sources(std::size_t num_tasks) {
  if (use_source && sharing == Sharing::PerTask && num_source_prompts == 0) num_source_prompts = num_tasks;
}

void CompositionConfig::validate() const {
  if (!use_source) {
    if (num_source_prompts != 0 || init_source || learn_source) {
      throw ConfigError(name + ": configurations without sources cannot have source settings");
    }
    if (!use_private) throw ConfigError(name + ": a configuration needs sources or a private prompt");
    if (name != "P" && name != "PI") throw ConfigError(name + ": only P and PI run without source prompts");
    return;
  }
  if (num_source_prompts == 0) throw ConfigError(name + ": number of source prompts is unresolved");
  if (!use_private && init_private) throw ConfigError(name + ": cannot initialize an unused private prompt");
}

AttentionTable AttentionTable::zeros(std::size_t tasks, std::size_t slots) {
  AttentionTable t;
  for (std::size_t i = 0; i < tasks; ++i) t.rows.push_back(Tensor::zeros({slots}, true));
  return t;
}

Tensor AttentionTable::matrix() const {
  Tensor m = Tensor::zeros({tasks(), slots()});
  for (std::size_t t = 0; t < tasks(); ++t)
    for (std::size_t s = 0; s < slots(); ++s) m(t, s) = rows[t][s];
  return m;
}

void AttentionTable::set_trainable(bool flag) {
  trainable = flag;
  for (Tensor& r : rows) r.set_requires_grad(flag);
}

Tensor attention_weights(const Tensor& z, std::size_t M) {
  if (M == 0) throw ContractError("attention weights need at least one source prompt (M >= 1)");
  return softmax_with_temperature(z, 1.0 / static_cast<double>(M));
}

Var attention_weights(const Var& z, std::size_t M) {
  if (M == 0) throw ContractError("attention weights need at least one source prompt (M >= 1)");
  return softmax_with_temperature(z, 1.0 / static_cast<double>(M));
}

Var compose_target(std::span<const Var> sources, const std::optional<Var>& private_prompt,
                   const std::optional<Var>& logits, const CompositionConfig& cfg) {
  if (cfg.use_private && !private_prompt) throw ContractError(cfg.name + ": missing private prompt");
  if (!cfg.use_source) return *private_prompt;
  if (sources.size() != cfg.num_source_prompts) {
    throw ContractError(cfg.name + ": expected " + std::to_string(cfg.num_source_prompts) + " source prompts, got " +
                        std::to_string(sources.size()));
  }
  if (!logits) throw ContractError(cfg.name + ": missing attention logits");
  std::vector<Var> slots(sources.begin(), sources.end());
  if (cfg.use_private) slots.push_back(*private_prompt);
  if (logits->value().size() != slots.size()) {
    throw DimensionError("attention row of size " + std::to_string(logits->value().size()) + " for " +
                         std::to_string(slots.size()) + " slots");
  }
  return weighted_sum(slots, attention_weights(*logits, cfg.temperature_count()));
}

Tensor compose_from_weights(std::span<const double> weights, std::span<const Tensor* const> slots) {
  if (slots.empty() || weights.size() != slots.size()) {
    throw DimensionError("compose: " + std::to_string(weights.size()) + " weights for " +
                         std::to_string(slots.size()) + " slots");
  }
  Tensor out = Tensor::zeros(slots[0]->shape());
  for (std::size_t s = 0; s < slots.size(); ++s) {
    if (slots[s]->shape() != out.shape()) {
      throw DimensionError("compose: slot shapes " + shape_string(out.shape()) + " and " +
                           shape_string(slots[s]->shape()) + " differ");
    }
    const double w = weights[s];
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += w * (*slots[s])[i];
  }
  return out;
}

Tensor compose_target(std::size_t task, std::span<const Tensor> sources, const Tensor* private_prompt,
                      const AttentionTable& table, const CompositionConfig& cfg) {
  if (cfg.use_private && private_prompt == nullptr) throw ContractError(cfg.name + ": missing private prompt");
  if (!cfg.use_source) return *private_prompt;
  std::vector<const Tensor*> slots;
  for (const Tensor& s : sources) slots.push_back(&s);
  if (cfg.use_private) slots.push_back(private_prompt);
  if (task >= table.tasks() || table.slots() != slots.size()) {
    throw DimensionError("attention table " + std::to_string(table.tasks()) + "x" + std::to_string(table.slots()) +
                         " does not cover task " + std::to_string(task) + " with " + std::to_string(slots.size()) +
                         " slots");
  }
  const Tensor w = attention_weights(table.rows[task], cfg.temperature_count());
  return compose_from_weights(w.values(), slots);
}

Tensor precompute_inference_weights(const AttentionTable& table, const CompositionConfig& cfg) {
  Tensor out = Tensor::zeros({table.tasks(), table.slots()});
  for (std::size_t t = 0; t < table.tasks(); ++t) {
    const Tensor w = attention_weights(table.rows[t], cfg.temperature_count());
    for (std::size_t s = 0; s < w.size(); ++s) out(t, s) = w[s];
  }
  return out;
}

namespace {

std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

void export_weights_csv(const Tensor& weights, std::span<const std::string> task_names,
                        std::span<const std::string> source_names, bool has_private,
                        const std::filesystem::path& path) {
  const std::size_t T = task_names.size();
  const std::size_t M = source_names.size();
  if (weights.rows() != T || weights.cols() != M + (has_private ? 1 : 0)) {
    throw DimensionError("weight matrix " + shape_string(weights.shape()) + " does not match " + std::to_string(T) +
                         " tasks and " + std::to_string(M) + " sources");
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ExportError("cannot write " + path.string());
  out << "task";
  for (const std::string& s : source_names) out << ',' << s;
  if (has_private)
    for (const std::string& t : task_names) out << ",private:" << t;
  out << '\n';
  for (std::size_t t = 0; t < T; ++t) {
    out << task_names[t];
    for (std::size_t s = 0; s < M; ++s) out << ',' << fixed6(weights(t, s));
    if (has_private)
      for (std::size_t u = 0; u < T; ++u) out << ',' << fixed6(u == t ? weights(t, M) : 0.0);
    out << '\n';
  }
  if (!out) throw ExportError("write failed for " + path.string());
}

WeightMatrix import_weights_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw FormatError(path.string() + ": empty file");
  const auto header = split_csv(line);
  if (header.empty() || header[0] != "task") throw FormatError(path.string() + ": missing task column");
  WeightMatrix wm;
  std::vector<std::string> private_cols;
  for (std::size_t i = 1; i < header.size(); ++i) {
    if (header[i].rfind("private:", 0) == 0) {
      private_cols.push_back(header[i].substr(8));
    } else {
      if (!private_cols.empty()) throw FormatError(path.string() + ": source column after private columns");
      wm.source_names.push_back(header[i]);
    }
  }
  wm.has_private = !private_cols.empty();
  std::vector<double> values;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != header.size()) throw FormatError(path.string() + ":" + std::to_string(line_no) + ": wrong column count");
    const std::size_t row = wm.task_names.size();
    wm.task_names.push_back(cells[0]);
    for (std::size_t i = 1; i <= wm.source_names.size(); ++i) values.push_back(std::stod(cells[i]));
    if (wm.has_private) {
      if (row >= private_cols.size() || private_cols[row] != cells[0]) {
        throw FormatError(path.string() + ":" + std::to_string(line_no) + ": private columns do not follow task rows");
      }
      values.push_back(std::stod(cells[1 + wm.source_names.size() + row]));
    }
  }
  const std::size_t cols = wm.source_names.size() + (wm.has_private ? 1 : 0);
  wm.weights = Tensor({wm.task_names.size(), cols}, std::move(values));
  return wm;
}

}  // namespace crosspt
