// Copyright 2026 The CrossPT Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <vector>

#include "crosspt/composer.hpp"
#include "crosspt/errors.hpp"
#include "test_util.hpp"

using namespace crosspt;

namespace {

struct Flags {
  const char* name;
  bool use_source, init_source, learn_source, use_private, init_private;
};

}  // namespace

TEST_CASE("configuration table") {
  const Flags table[] = {
      {"P", false, false, false, true, false},   {"PI", false, false, false, true, true},
      {"SL", true, false, true, false, false},   {"SLN", true, false, true, false, false},
      {"SLP", true, false, true, true, false},   {"SLPN", true, false, true, true, false},
      {"SIL", true, true, true, false, false},   {"SIP", true, true, false, true, false},
      {"SILP", true, true, true, true, false},
  };
  CHECK(config_names().size() == 9);
  for (const Flags& f : table) {
    CAPTURE(f.name);
    const CompositionConfig c = config_from_name(f.name);
    CHECK(c.name == f.name);
    CHECK(c.use_source == f.use_source);
    CHECK(c.use_private == f.use_private);
    CHECK(c.init_private == f.init_private);
    if (c.use_source) {
      CHECK(c.init_source == f.init_source);
      CHECK(c.learn_source == f.learn_source);
    } else {
      CHECK(c.num_source_prompts == 0);
    }
  }
  CHECK(config_from_name("silp").name == "SILP");
  CHECK(config_from_name("SLN").sharing == Sharing::PerTask);
  CHECK(config_from_name("SLPN").sharing == Sharing::PerTask);
  CHECK(config_from_name("SL").sharing == Sharing::SingleShared);
  CHECK(config_from_name("SL").num_source_prompts == 1);

  try {
    config_from_name("XYZ");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("SILP") != std::string::npos);
  }

  CompositionConfig sln = config_from_name("SLN");
  sln.resolve_sources(4);
  CHECK(sln.num_source_prompts == 4);
  CompositionConfig sil = config_from_name("SIL");
  sil.resolve_sources(3);
  CHECK(sil.num_source_prompts == 3);
}

TEST_CASE("attention weights with adaptive temperature") {
  const Tensor half = attention_weights(Tensor::vector({0, 0}), 1);
  CHECK(half[0] == 0.5);
  CHECK(half[1] == 0.5);
  const Tensor m1 = attention_weights(Tensor::vector({1, 0}), 1);
  CHECK(std::abs(m1[0] - 0.7311) < 1e-4);
  CHECK(std::abs(m1[1] - 0.2689) < 1e-4);
  const Tensor m4 = attention_weights(Tensor::vector({1, 0}), 4);
  CHECK(std::abs(m4[0] - 0.9820) < 1e-4);
  CHECK(std::abs(m4[1] - 0.0180) < 1e-4);
  CHECK(m4[0] == doctest::Approx(std::exp(4.0) / (std::exp(4.0) + 1.0)).epsilon(1e-12));
  CHECK_THROWS_AS(attention_weights(Tensor::vector({1, 0}), 0), ContractError);
}

TEST_CASE("property: argmax mass grows with M") {
  Rng rng(17);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng.below(5);
    const Tensor z = gaussian({n}, 1.0, rng);
    double prev = 0.0;
    for (std::size_t M = 1; M <= 6; ++M) {
      const Tensor w = attention_weights(z, M);
      const double top = *std::max_element(w.values().begin(), w.values().end());
      double s = 0.0;
      for (double v : w.values()) {
        CHECK(v > 0.0);
        s += v;
      }
      CHECK(std::abs(s - 1.0) < 1e-9);
      CHECK(top > prev);
      prev = top;
    }
  }
}

TEST_CASE("composition examples") {
  Rng rng(2);
  const Tensor ps = gaussian({3, 4}, 1.0, rng);

  CompositionConfig sl = config_from_name("SL");
  const AttentionTable t1 = AttentionTable::zeros(1, 1);
  const Tensor one[] = {ps};
  CHECK(bit_equal(compose_target(0, one, nullptr, t1, sl), ps));

  CompositionConfig two = config_from_name("SL");
  two.num_source_prompts = 2;
  AttentionTable t2 = AttentionTable::zeros(1, 2);
  t2.rows[0] = Tensor::vector({0.7, -1.3});
  const Tensor dup[] = {ps, ps};
  const Tensor out = compose_target(0, dup, nullptr, t2, two);
  for (std::size_t i = 0; i < out.size(); ++i) CHECK(out[i] == doctest::Approx(ps[i]).epsilon(1e-14));

  const Tensor zeros = Tensor::zeros({3, 4}), ones = Tensor::filled({3, 4}, 1.0);
  const double w[] = {0.25, 0.75};
  const Tensor* slots[] = {&zeros, &ones};
  const Tensor mixed = compose_from_weights(w, slots);
  for (double v : mixed.values()) CHECK(v == 0.75);

  const CompositionConfig p = config_from_name("P");
  CHECK(bit_equal(compose_target(0, {}, &ps, AttentionTable{}, p), ps));

  CompositionConfig slp = config_from_name("SLP");
  const AttentionTable t3 = AttentionTable::zeros(1, 2);
  CHECK_THROWS_AS(compose_target(0, one, nullptr, t3, slp), ContractError);
  const Tensor bad = Tensor::zeros({2, 4});
  CHECK_THROWS_AS(compose_target(0, one, &bad, t3, slp), DimensionError);
}

TEST_CASE("property: composition is convex") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(seed);
    CompositionConfig cfg = config_from_name("SLP");
    cfg.num_source_prompts = 3;
    std::vector<Tensor> sources;
    for (int s = 0; s < 3; ++s) sources.push_back(gaussian({2, 3}, 1.0, rng));
    const Tensor priv = gaussian({2, 3}, 1.0, rng);
    AttentionTable table = AttentionTable::zeros(1, 4);
    table.rows[0] = gaussian({4}, 2.0, rng);
    const Tensor out = compose_target(0, sources, &priv, table, cfg);
    for (std::size_t i = 0; i < out.size(); ++i) {
      double lo = priv[i], hi = priv[i];
      for (const Tensor& s : sources) {
        lo = std::min(lo, s[i]);
        hi = std::max(hi, s[i]);
      }
      CHECK(out[i] >= lo - 1e-12);
      CHECK(out[i] <= hi + 1e-12);
    }
  }
}

TEST_CASE("gradient into the attention logits matches finite differences") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    CAPTURE(seed);
    Rng rng(seed);
    CompositionConfig cfg = config_from_name("SLP");
    cfg.num_source_prompts = 2;
    const Tensor s0 = gaussian({2, 3}, 1.0, rng), s1 = gaussian({2, 3}, 1.0, rng), pu = gaussian({2, 3}, 1.0, rng);
    const Tensor target = gaussian({2, 3}, 1.0, rng);
    const Tensor z = gaussian({3}, 1.0, rng);
    auto f = [&](Tape& t, const Var& zv) {
      const Var src[] = {t.constant(s0), t.constant(s1)};
      const Var out = compose_target(src, t.constant(pu), zv, cfg);
      const Var d = sub(out, t.constant(target));
      return sum(mul(d, d));
    };
    CHECK(finite_diff_check(f, z, 1e-5) < 1e-4);
  }
}

TEST_CASE("precomputed inference weights") {
  Rng rng(6);
  CompositionConfig cfg = config_from_name("SLP");
  cfg.num_source_prompts = 2;
  AttentionTable table = AttentionTable::zeros(3, 3);
  for (Tensor& r : table.rows) r = gaussian({3}, 1.0, rng);
  std::vector<Tensor> sources{gaussian({2, 4}, 1.0, rng), gaussian({2, 4}, 1.0, rng)};
  std::vector<Tensor> privates{gaussian({2, 4}, 1.0, rng), gaussian({2, 4}, 1.0, rng), gaussian({2, 4}, 1.0, rng)};

  const Tensor W = precompute_inference_weights(table, cfg);
  REQUIRE(W.shape() == Shape{3, 3});
  const auto dir = crosspt::testing::scratch_dir("weights");
  const std::vector<std::string> tasks{"a", "b", "c"}, names{"s0", "s1"};
  export_weights_csv(W, tasks, names, true, dir / "w.csv");
  const WeightMatrix back = import_weights_csv(dir / "w.csv");
  CHECK(back.task_names == tasks);
  CHECK(back.source_names == names);
  CHECK(back.has_private);

  for (std::size_t t = 0; t < 3; ++t) {
    double s = 0.0;
    for (std::size_t j = 0; j < 3; ++j) s += W(t, j);
    CHECK(std::abs(s - 1.0) < 1e-9);
    const Tensor live = compose_target(t, sources, &privates[t], table, cfg);
    const Tensor* slots[] = {&sources[0], &sources[1], &privates[t]};
    const std::vector<double> row{W(t, 0), W(t, 1), W(t, 2)};
    CHECK(bit_equal(compose_from_weights(row, slots), live));
    const std::vector<double> row2{back.weights(t, 0), back.weights(t, 1), back.weights(t, 2)};
    const Tensor again = compose_from_weights(row2, slots);
    const Tensor again2 = compose_from_weights(row2, slots);
    CHECK(bit_equal(again, again2));
    for (std::size_t i = 0; i < live.size(); ++i) CHECK(std::abs(again[i] - live[i]) < 1e-5);
  }

  std::ifstream in(dir / "w.csv");
  std::string header;
  std::getline(in, header);
  CHECK(header == "task,s0,s1,private:a,private:b,private:c");
}
