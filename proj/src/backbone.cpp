// Copyright 2026 The CrossPT Authors
// SPDX-License-Identifier: Apache-2.0

#include "crosspt/backbone.hpp"

#include <cmath>
#include <fstream>

#include "crosspt/binary_io.hpp"
#include "crosspt/errors.hpp"

namespace crosspt {

namespace {

constexpr char kBackboneMagic[] = "CPTB1";

// Sinusoids scaled by 1/sqrt(d) to match the embedding init scale.
Tensor sinusoidal_positions(std::size_t max_len, std::size_t d) {
  const double amp = 1.0 / std::sqrt(static_cast<double>(d));
  Tensor pe = Tensor::zeros({max_len, d});
  for (std::size_t pos = 0; pos < max_len; ++pos) {
    for (std::size_t i = 0; i < d; i += 2) {
      const double freq = std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(d));
      pe(pos, i) = amp * std::sin(static_cast<double>(pos) * freq);
      if (i + 1 < d) pe(pos, i + 1) = amp * std::cos(static_cast<double>(pos) * freq);
    }
  }
  return pe;
}

}  // namespace

void BackboneConfig::validate() const {
  if (d_model == 0 || n_heads == 0 || n_layers == 0 || d_ff == 0 || vocab_size == 0 || max_len == 0) {
    throw ConfigError("backbone dimensions must be positive");
  }
  if (d_model % n_heads != 0) {
    throw ConfigError("d_model (" + std::to_string(d_model) + ") is not divisible by n_heads (" +
                      std::to_string(n_heads) + ")");
  }
}

std::size_t BackboneConfig::parameter_count() const {
  const std::size_t d = d_model, v = vocab_size, f = d_ff;
  const std::size_t per_block = 4 * d * d + 4 * d + 2 * d * f + f + d;
  return v * d + n_layers * per_block + d * v;
}

FrozenBackbone::FrozenBackbone(const BackboneConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  const std::size_t d = cfg_.d_model, f = cfg_.d_ff, v = cfg_.vocab_size;
  const double s = 1.0 / std::sqrt(static_cast<double>(d));
  Rng rng(cfg_.seed);

  token_embedding_ = gaussian({v, d}, s, rng);
  blocks_.resize(cfg_.n_layers);
  for (BlockWeights& b : blocks_) {
    b.ln1_gamma = Tensor::filled({d}, 1.0);
    b.ln1_beta = Tensor::zeros({d});
    b.wq = gaussian({d, d}, s, rng);
    b.wk = gaussian({d, d}, s, rng);
    b.wv = gaussian({d, d}, s, rng);
    b.wo = gaussian({d, d}, s, rng);
    b.ln2_gamma = Tensor::filled({d}, 1.0);
    b.ln2_beta = Tensor::zeros({d});
    b.w1 = gaussian({d, f}, s, rng);
    b.b1 = Tensor::zeros({f});
    b.w2 = gaussian({f, d}, s, rng);
    b.b2 = Tensor::zeros({d});
  }
  output_projection_ = gaussian({d, v}, s, rng);
  positions_ = sinusoidal_positions(cfg_.max_len, d);
}

std::vector<const Tensor*> FrozenBackbone::parameters() const {
  std::vector<const Tensor*> out{&token_embedding_};
  for (const BlockWeights& b : blocks_) {
    for (const Tensor* t : {&b.ln1_gamma, &b.ln1_beta, &b.wq, &b.wk, &b.wv, &b.wo, &b.ln2_gamma,
                            &b.ln2_beta, &b.w1, &b.b1, &b.w2, &b.b2}) {
      out.push_back(t);
    }
  }
  out.push_back(&output_projection_);
  return out;
}

std::vector<Tensor*> FrozenBackbone::mutable_parameters() {
  std::vector<Tensor*> out;
  for (const Tensor* t : parameters()) out.push_back(const_cast<Tensor*>(t));
  return out;
}

std::size_t FrozenBackbone::parameter_count() const {
  std::size_t n = 0;
  for (const Tensor* t : parameters()) n += t->size();
  return n;
}

void FrozenBackbone::check_input(std::size_t prompt_rows, std::span<const TokenId> tokens) const {
  if (prompt_rows + tokens.size() > cfg_.max_len) {
    throw LengthError("sequence of " + std::to_string(prompt_rows) + " prompt rows and " +
                      std::to_string(tokens.size()) + " tokens exceeds max_len " +
                      std::to_string(cfg_.max_len));
  }
  for (TokenId t : tokens) {
    if (t >= cfg_.vocab_size) {
      throw VocabError("token id " + std::to_string(t) + " outside vocabulary of size " +
                       std::to_string(cfg_.vocab_size));
    }
  }
}

Var FrozenBackbone::forward(const Var& prompt, std::span<const TokenId> tokens) const {
  const std::size_t d = cfg_.d_model;
  const Tensor& pv = prompt.value();
  const std::size_t k = pv.size() == 0 ? 0 : pv.rows();
  if (k > 0 && pv.cols() != d) {
    throw DimensionError("prompt " + shape_string(pv.shape()) + " does not match d_model " +
                         std::to_string(d));
  }
  check_input(k, tokens);
  Tape& tape = prompt.tape();
  const std::size_t n = k + tokens.size();
  if (n == 0) throw LengthError("empty input sequence");

  Tensor tok = Tensor::zeros({tokens.size(), d});
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      tok(i, j) = token_embedding_(tokens[i], j) + positions_(k + i, j);
    }
  }
  Var x;
  if (k == 0) {
    x = tape.constant(std::move(tok));
  } else {
    Tensor pos = Tensor::zeros({k, d});
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = 0; j < d; ++j) pos(i, j) = positions_(i, j);
    Var placed = add(reshape(prompt, {k, d}), tape.constant(std::move(pos)));
    if (tokens.empty()) {
      x = placed;
    } else {
      const Var parts[] = {placed, tape.constant(std::move(tok))};
      x = concat_rows(parts);
    }
  }

  const std::size_t heads = cfg_.n_heads, dh = d / heads;
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
  for (const BlockWeights& b : blocks_) {
    Var h = layer_norm_rows(x, tape.borrow(b.ln1_gamma), tape.borrow(b.ln1_beta));
    Var q = matmul(h, tape.borrow(b.wq));
    Var kk = matmul(h, tape.borrow(b.wk));
    Var v = matmul(h, tape.borrow(b.wv));
    std::vector<Var> outs;
    outs.reserve(heads);
    for (std::size_t hd = 0; hd < heads; ++hd) {
      Var qh = slice_cols(q, hd * dh, (hd + 1) * dh);
      Var kh = slice_cols(kk, hd * dh, (hd + 1) * dh);
      Var vh = slice_cols(v, hd * dh, (hd + 1) * dh);
      Var att = softmax_rows(scale(matmul(qh, transpose(kh)), inv_sqrt_dh));
      outs.push_back(matmul(att, vh));
    }
    Var merged = heads == 1 ? outs[0] : concat_cols(outs);
    x = add(x, matmul(merged, tape.borrow(b.wo)));

    Var h2 = layer_norm_rows(x, tape.borrow(b.ln2_gamma), tape.borrow(b.ln2_beta));
    Var ff = gelu(add_bias(matmul(h2, tape.borrow(b.w1)), tape.borrow(b.b1)));
    x = add(x, add_bias(matmul(ff, tape.borrow(b.w2)), tape.borrow(b.b2)));
  }
  // Pool the residual stream directly; a final norm would cap how far the
  // prompt rows can move the pooled state.
  const Var pooled = mean_rows(x);
  return matmul(pooled, tape.borrow(output_projection_));
}

Var FrozenBackbone::batch_logits(const Var& prompt, std::span<const TokenSeq> inputs) const {
  if (inputs.empty()) throw DataError("empty batch");
  std::vector<Var> rows;
  rows.reserve(inputs.size());
  for (const TokenSeq& seq : inputs) rows.push_back(forward(prompt, seq));
  return rows.size() == 1 ? rows[0] : concat_rows(rows);
}

Var FrozenBackbone::batch_loss(const Var& prompt, std::span<const TokenSeq> inputs,
                               std::span<const std::size_t> labels) const {
  if (inputs.size() != labels.size()) {
    throw DimensionError("batch has " + std::to_string(inputs.size()) + " inputs and " +
                         std::to_string(labels.size()) + " labels");
  }
  return cross_entropy(batch_logits(prompt, inputs), labels);
}

void FrozenBackbone::save(const std::filesystem::path& path) const {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw StoreError("cannot open " + path.string() + " for writing");
  os.write(kBackboneMagic, 5);
  for (std::size_t dim : {cfg_.d_model, cfg_.n_layers, cfg_.n_heads, cfg_.d_ff, cfg_.vocab_size, cfg_.max_len}) {
    io::write_u32(os, static_cast<std::uint32_t>(dim));
  }
  io::write_u64(os, cfg_.seed);
  for (const Tensor* t : parameters())
    for (double v : t->values()) io::write_f64(os, v);
  if (!os) throw StoreError("write failed for " + path.string());
}

FrozenBackbone FrozenBackbone::load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw StoreError("cannot open " + path.string());
  io::expect_magic(is, kBackboneMagic);
  BackboneConfig cfg;
  cfg.d_model = io::read_u32(is);
  cfg.n_layers = io::read_u32(is);
  cfg.n_heads = io::read_u32(is);
  cfg.d_ff = io::read_u32(is);
  cfg.vocab_size = io::read_u32(is);
  cfg.max_len = io::read_u32(is);
  cfg.seed = io::read_u64(is);
  FrozenBackbone model(cfg);
  for (Tensor* t : model.mutable_parameters())
    for (double& v : t->values()) v = io::read_f64(is);
  if (is.peek() != std::char_traits<char>::eof()) throw FormatError("trailing bytes in " + path.string());
  return model;
}

bool bit_equal(const FrozenBackbone& a, const FrozenBackbone& b) {
  if (!(a.cfg_ == b.cfg_)) return false;
  const auto pa = a.parameters(), pb = b.parameters();
  for (std::size_t i = 0; i < pa.size(); ++i)
    if (!bit_equal(*pa[i], *pb[i])) return false;
  return true;
}

FrozenBackbone build_backbone(const BackboneConfig& cfg) { return FrozenBackbone(cfg); }

Tensor forward(const FrozenBackbone& model, const Tensor& prompt, std::span<const TokenId> tokens) {
  Tape tape;
  Tensor p = prompt;
  p.set_requires_grad(false);
  Var logits = model.forward(tape.constant(std::move(p)), tokens);
  return Tensor::vector(std::vector<double>(logits.value().values().begin(), logits.value().values().end()));
}

std::pair<double, Tensor> loss_and_prompt_grad(const FrozenBackbone& model, const Tensor& prompt,
                                               std::span<const TokenId> tokens, std::size_t label_token) {
  if (label_token >= model.config().vocab_size) {
    throw VocabError("label token " + std::to_string(label_token) + " outside vocabulary");
  }
  Tensor p(prompt.shape(), std::vector<double>(prompt.values().begin(), prompt.values().end()), true);
  Tape tape;
  Var logits = model.forward(tape.watch(p), tokens);
  const std::size_t label[] = {label_token};
  Var loss = cross_entropy(logits, label);
  tape.backward(loss);
  if (!p.has_grad()) p.zero_grad();
  Tensor grad(prompt.shape(), std::vector<double>(p.grad().begin(), p.grad().end()));
  return {loss.value()[0], std::move(grad)};
}

}  // namespace crosspt
