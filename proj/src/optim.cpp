// Copyright 2026 The CrossPT Authors
// SPDX-License-Identifier: Apache-2.0

#include "crosspt/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "crosspt/errors.hpp"

namespace crosspt {

Hyperparams Hyperparams::for_initialized() {
  Hyperparams hp;
  hp.lr_source = 0.05;
  hp.lr_private = 0.02;
  hp.epochs = 20;
  return hp;
}

Hyperparams Hyperparams::for_scratch() {
  Hyperparams hp;
  hp.lr_source = 0.15;
  hp.lr_private = 0.07;
  hp.epochs = 30;
  return hp;
}

void Hyperparams::validate() const {
  for (double lr : {lr_source, lr_private, lr_attention, lr_encoder}) {
    if (!(lr >= 0.0)) throw ConfigError("learning rates must be non-negative");
  }
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    throw ConfigError("Adam betas must lie in [0, 1)");
  }
  if (!(adam_eps > 0.0)) throw ConfigError("adam_eps must be positive");
}

std::string to_string(GroupLabel label) {
  switch (label) {
    case GroupLabel::Source: return "source";
    case GroupLabel::Private: return "private";
    case GroupLabel::Attention: return "attention";
    case GroupLabel::Encoder: return "encoder";
  }
  return "source";
}

ParamGroup::ParamGroup(GroupLabel label_, std::vector<Tensor*> tensors_, double lr_)
    : label(label_), tensors(std::move(tensors_)), lr(lr_), state(tensors.size()) {
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    state[i].m.assign(tensors[i]->size(), 0.0);
    state[i].v.assign(tensors[i]->size(), 0.0);
  }
}

std::size_t ParamGroup::parameter_count() const {
  std::size_t n = 0;
  for (const Tensor* t : tensors) n += t->size();
  return n;
}

void adam_step(ParamGroup& group, const Hyperparams& hp) {
  const double b1 = hp.adam_beta1, b2 = hp.adam_beta2;
  for (std::size_t i = 0; i < group.tensors.size(); ++i) {
    Tensor& p = *group.tensors[i];
    if (!p.has_grad()) continue;
    const auto g = p.grad();
    AdamState& s = group.state[i];
    if (g.size() != p.size() || s.m.size() != p.size()) {
      throw ContractError("gradient of size " + std::to_string(g.size()) + " for " + to_string(group.label) +
                          " tensor " + shape_string(p.shape()));
    }
    ++s.steps;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(s.steps));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(s.steps));
    auto values = p.values();
    for (std::size_t j = 0; j < values.size(); ++j) {
      s.m[j] = b1 * s.m[j] + (1.0 - b1) * g[j];
      s.v[j] = b2 * s.v[j] + (1.0 - b2) * g[j] * g[j];
      const double mhat = s.m[j] / c1;
      const double vhat = s.v[j] / c2;
      values[j] -= group.lr * mhat / (std::sqrt(vhat) + hp.adam_eps);
    }
  }
}

std::vector<std::vector<std::size_t>> shuffled_batches(std::size_t n, std::size_t batch_size, Rng& rng) {
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng.engine());
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t i = 0; i < n; i += batch_size) {
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                         order.begin() + static_cast<std::ptrdiff_t>(std::min(n, i + batch_size)));
  }
  return batches;
}

}  // namespace crosspt
