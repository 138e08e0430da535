// Copyright 2026 The CrossPT Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <fstream>
#include <vector>

#include "crosspt/backbone.hpp"
#include "crosspt/errors.hpp"
#include "test_util.hpp"

using namespace crosspt;

namespace {

BackboneConfig tiny(std::uint64_t seed = 1) {
  BackboneConfig c;
  c.d_model = 8;
  c.n_layers = 1;
  c.n_heads = 2;
  c.d_ff = 12;
  c.vocab_size = 20;
  c.max_len = 16;
  c.seed = seed;
  return c;
}

Tensor logits(const FrozenBackbone& m, const Tensor& prompt, const TokenSeq& tokens) {
  Tape tape;
  return m.forward(tape.borrow(prompt), tokens).value();
}

}  // namespace

TEST_CASE("construction is deterministic and seed sensitive") {
  const FrozenBackbone a(tiny(1)), b(tiny(1)), c(tiny(2));
  CHECK(bit_equal(a, b));
  CHECK_FALSE(bit_equal(a, c));
  for (const Tensor* p : a.parameters()) CHECK_FALSE(p->requires_grad());
  CHECK(a.frozen());
}

TEST_CASE("parameter count matches the closed form") {
  for (const BackboneConfig& c : {tiny(), BackboneConfig{}}) {
    const std::size_t d = c.d_model, L = c.n_layers, f = c.d_ff, V = c.vocab_size;
    const std::size_t expected = V * d + L * (4 * d * d + 4 * d + 2 * d * f + f + d) + d * V;
    CHECK(c.parameter_count() == expected);
    CHECK(FrozenBackbone(c).parameter_count() == expected);
  }
}

TEST_CASE("invalid configs are rejected") {
  BackboneConfig c = tiny();
  c.n_heads = 3;
  CHECK_THROWS_AS(FrozenBackbone{c}, ConfigError);
  c = tiny();
  c.d_model = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("forward contracts") {
  const FrozenBackbone m(tiny());
  const TokenSeq tokens{3, 4, 5, 6};
  Rng rng(4);
  const Tensor empty = Tensor::zeros({0, 8});
  const Tensor p1 = gaussian({3, 8}, 1.0, rng), p2 = gaussian({3, 8}, 1.0, rng);

  const Tensor base = logits(m, empty, tokens);
  CHECK(base.shape() == Shape{1, 20});
  CHECK(bit_equal(base, logits(m, empty, tokens)));
  CHECK_FALSE(bit_equal(logits(m, p1, tokens), logits(m, p2, tokens)));

  Tensor swapped = p1;
  for (std::size_t c = 0; c < 8; ++c) std::swap(swapped(0, c), swapped(2, c));
  CHECK_FALSE(bit_equal(logits(m, p1, tokens), logits(m, swapped, tokens)));

  // A zero prompt still shifts token positions, so the output moves.
  CHECK_FALSE(bit_equal(base, logits(m, Tensor::zeros({2, 8}), tokens)));

  const Tensor long_prompt = Tensor::zeros({14, 8});
  CHECK_THROWS_AS(logits(m, long_prompt, tokens), LengthError);
  CHECK_THROWS_AS(logits(m, empty, TokenSeq{1, 20}), VocabError);
}

TEST_CASE("prompt gradients only, matching finite differences") {
  const FrozenBackbone m(tiny(3));
  const std::vector<TokenSeq> inputs{{1, 2, 3, 4, 5}, {6, 7, 8}};
  const std::vector<std::size_t> labels{9, 10};
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    CAPTURE(seed);
    Rng rng(seed);
    const Tensor prompt = gaussian({2, 8}, 0.5, rng);
    const double err = finite_diff_check(
        [&](Tape&, const Var& p) { return m.batch_loss(p, inputs, labels); }, prompt, 1e-5);
    CHECK(err < 1e-4);
  }
  for (const Tensor* p : m.parameters()) CHECK_FALSE(p->has_grad());
}

TEST_CASE("duplicated example gives the same mean loss") {
  const FrozenBackbone m(tiny(5));
  Rng rng(2);
  const Tensor prompt = gaussian({2, 8}, 1.0, rng);
  Tape tape;
  const Var p = tape.borrow(prompt);
  const std::vector<TokenSeq> one{{1, 2, 3}}, two{{1, 2, 3}, {1, 2, 3}};
  const std::vector<std::size_t> l1{4}, l2{4, 4};
  CHECK(m.batch_loss(p, one, l1).value()[0] == doctest::Approx(m.batch_loss(p, two, l2).value()[0]).epsilon(1e-14));
}

TEST_CASE("checkpoint round trip and corruption") {
  const auto dir = crosspt::testing::scratch_dir("backbone");
  const FrozenBackbone m(tiny(8));
  m.save(dir / "m.cptb");
  const FrozenBackbone back = FrozenBackbone::load(dir / "m.cptb");
  CHECK(bit_equal(m, back));
  CHECK(back.config() == m.config());

  {
    std::ofstream bad(dir / "bad.cptb", std::ios::binary);
    bad << "NOTCPTB";
  }
  CHECK_THROWS_AS(FrozenBackbone::load(dir / "bad.cptb"), FormatError);
  CHECK_THROWS_AS(FrozenBackbone::load(dir / "missing.cptb"), StoreError);

  std::filesystem::resize_file(dir / "m.cptb", std::filesystem::file_size(dir / "m.cptb") - 8);
  CHECK_THROWS_AS(FrozenBackbone::load(dir / "m.cptb"), FormatError);
}
