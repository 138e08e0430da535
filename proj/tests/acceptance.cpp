// Copyright 2026 The CrossPT Authors
// SPDX-License-Identifier: Apache-2.0
//
// Acceptance suite. Prints one PASS/FAIL line per criterion and exits
// non-zero when any criterion fails. Usage: acceptance [output-dir]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "crosspt/composer.hpp"
#include "crosspt/errors.hpp"
#include "crosspt/harness.hpp"
#include "crosspt/metrics.hpp"
#include "crosspt/optim.hpp"
#include "crosspt/trainer.hpp"

using namespace crosspt;

namespace {

// Pinned tolerances.
constexpr double kGradTol = 1e-4;
constexpr double kGradEps = 1e-5;
constexpr std::size_t kGradSeeds = 50;
constexpr double kGradSeconds = 30.0;
constexpr double kTempTol = 1e-4;
constexpr double kSymTol = 1e-12;
constexpr double kOracleTol = 1e-10;
constexpr double kContradictoryCeiling = 0.6;
constexpr double kPrivateLift = 0.15;
constexpr double kPrefixLift = 0.1;
constexpr double kContradictorySeconds = 180.0;
constexpr double kTransferMargin = 0.05;
constexpr double kSweepGain = 0.05;
constexpr double kSweepSpread = 0.05;
constexpr std::uint64_t kBackboneSeed = 7;
const std::vector<std::uint64_t> kSeeds{1, 2, 3};

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string format(const char* fmt, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, fmt, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ExperimentConfig base_config(const std::filesystem::path& out, std::vector<std::string> methods) {
  ExperimentConfig c;
  c.methods = std::move(methods);
  c.shots = {32};
  c.seeds = kSeeds;
  c.backbone.seed = kBackboneSeed;
  c.out = out;
  return c;
}

/// Mean over seeds of each cell's mean accuracy, for one method.
double method_mean(const RunReport& r, const std::string& method) {
  double s = 0.0;
  std::size_t n = 0;
  for (const CellResult& c : r.cells) {
    if (c.key.method != method) continue;
    if (!c.ok) throw Error("cell " + c.key.method + "/" + std::to_string(c.key.seed) + " failed: " + c.error);
    s += c.mean_accuracy;
    ++n;
  }
  return s / static_cast<double>(n);
}

BackboneConfig tiny_backbone() {
  BackboneConfig c;
  c.d_model = 8;
  c.n_layers = 1;
  c.n_heads = 2;
  c.d_ff = 16;
  c.vocab_size = 24;
  c.max_len = 16;
  c.seed = 5;
  return c;
}

// 1 -------------------------------------------------------------------------

Verdict gradient_correctness() {
  const auto t0 = std::chrono::steady_clock::now();
  const FrozenBackbone model(tiny_backbone());
  CompositionConfig cfg = config_from_name("SLP");
  cfg.num_source_prompts = 2;
  const std::vector<TokenSeq> inputs{{3, 4, 5, 6}, {7, 8, 9}};
  const std::vector<std::size_t> labels{1, 2};
  double worst_z = 0.0, worst_e = 0.0, worst_w = 0.0, worst_b = 0.0;
  for (std::uint64_t seed = 0; seed < kGradSeeds; ++seed) {
    Rng rng(seed);
    Tensor W = gaussian({8, 8}, 0.4, rng), b = gaussian({8}, 0.2, rng);
    for (std::size_t i = 0; i < 8; ++i) W(i, i) += 1.0;
    Tensor E0 = gaussian({3, 8}, 0.5, rng), E1 = gaussian({3, 8}, 0.5, rng), Eu = gaussian({3, 8}, 0.5, rng);
    Tensor z = gaussian({3}, 1.0, rng);
    // loss(W, b, E0, Eu, z) with E1 fixed; `which` picks the free argument.
    auto loss = [&](int which) {
      return [&, which](Tape& t, const Var& x) {
        const Var w = which == 2 ? x : t.constant(W);
        const Var bias = which == 3 ? x : t.constant(b);
        const Var e0 = which == 1 ? x : t.constant(E0);
        const Var src[] = {encode(w, bias, e0), encode(w, bias, t.constant(E1))};
        const Var pu = encode(w, bias, t.constant(Eu));
        const Var zv = which == 0 ? x : t.constant(z);
        return model.batch_loss(compose_target(src, pu, zv, cfg), inputs, labels);
      };
    };
    worst_z = std::max(worst_z, finite_diff_check(loss(0), z, kGradEps));
    worst_e = std::max(worst_e, finite_diff_check(loss(1), E0, kGradEps));
    worst_w = std::max(worst_w, finite_diff_check(loss(2), W, kGradEps));
    worst_b = std::max(worst_b, finite_diff_check(loss(3), b, kGradEps));
  }
  const double secs = seconds_since(t0);
  const double worst = std::max({worst_z, worst_e, worst_w, worst_b});
  return {worst < kGradTol && secs < kGradSeconds,
          format("max rel err dZ %.2e, dE %.2e, dW %.2e, db %.2e over %zu seeds (tol %.0e), %.1f s (limit %.0f s)",
                 worst_z, worst_e, worst_w, worst_b, kGradSeeds, kGradTol, secs, kGradSeconds)};
}

// 2 -------------------------------------------------------------------------

Verdict temperature_exactness() {
  const Tensor m1 = attention_weights(Tensor::vector({1, 0}), 1);
  const Tensor m4 = attention_weights(Tensor::vector({1, 0}), 4);
  const bool closed = std::abs(m1[0] - 0.7311) <= kTempTol && std::abs(m1[1] - 0.2689) <= kTempTol &&
                      std::abs(m4[0] - 0.9820) <= kTempTol && std::abs(m4[1] - 0.0180) <= kTempTol;
  Rng rng(2024);
  std::size_t monotone = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const Tensor z = gaussian({2 + rng.below(6)}, 1.0, rng);
    double prev = 0.0;
    bool ok = true;
    for (std::size_t M = 1; M <= 8; ++M) {
      const Tensor w = attention_weights(z, M);
      const double top = *std::max_element(w.values().begin(), w.values().end());
      ok = ok && top > prev;
      prev = top;
    }
    monotone += ok ? 1 : 0;
  }
  return {closed && monotone == 100,
          format("M=1 [%.4f, %.4f], M=4 [%.4f, %.4f] (tol %.0e); sharpening monotone for %zu/100 vectors", m1[0],
                 m1[1], m4[0], m4[1], kTempTol, monotone)};
}

// 3 -------------------------------------------------------------------------

std::vector<Task> small_tasks(std::size_t shots) {
  FamilyOptions o;
  o.pool_size = 128;
  o.seed = 3;
  std::vector<Task> tasks = make_family(o, BackboneConfig{}).tasks;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    tasks[i].train = few_shot_sample(tasks[i], shots, i);
    tasks[i].test.resize(32);
  }
  return tasks;
}

std::vector<std::string> names_of(const std::vector<Task>& tasks) {
  std::vector<std::string> n;
  for (const Task& t : tasks) n.push_back(t.spec.name);
  return n;
}

/// Per-epoch, per-task losses of plain prompt tuning with one prompt per task
/// and a shared encoder.
std::pair<std::vector<double>, std::vector<Tensor>> vanilla_prompt_tuning(const std::vector<Task>& tasks,
                                                                          const FrozenBackbone& model,
                                                                          const Hyperparams& hp, std::size_t k) {
  const std::size_t T = tasks.size(), d = model.config().d_model;
  std::vector<Tensor> E;
  for (const Task& t : tasks) {
    const std::string name = "private:" + t.spec.name;
    E.push_back(init_prompt(name, k, d, prompt_seed(hp.seed, name), InitScheme::Gaussian).E);
    E.back().set_requires_grad(true);
  }
  std::vector<Tensor*> ptrs;
  for (Tensor& e : E) ptrs.push_back(&e);
  PromptEncoder enc = PromptEncoder::identity(d);
  enc.set_trainable(true);
  ParamGroup prompts(GroupLabel::Private, ptrs, hp.lr_private);
  ParamGroup encoder(GroupLabel::Encoder, {&enc.W, &enc.b}, hp.lr_encoder);
  Rng rng(mix_seed(hp.seed, 0x7a5c));
  std::vector<double> losses;
  for (std::size_t epoch = 0; epoch < hp.epochs; ++epoch) {
    std::vector<std::vector<std::vector<std::size_t>>> schedule(T);
    std::size_t rounds = 0;
    for (std::size_t t = 0; t < T; ++t) {
      schedule[t] = shuffled_batches(tasks[t].train.size(), hp.batch_size, rng);
      rounds = std::max(rounds, schedule[t].size());
    }
    std::vector<double> sums(T, 0.0);
    for (std::size_t r = 0; r < rounds; ++r) {
      for (std::size_t t = 0; t < T; ++t) {
        if (r >= schedule[t].size()) continue;
        std::vector<TokenSeq> inputs;
        std::vector<std::size_t> labels;
        for (std::size_t i : schedule[t][r]) {
          inputs.push_back(tasks[t].train[i].tokens);
          labels.push_back(tasks[t].train[i].label_token);
        }
        enc.W.clear_grad();
        enc.b.clear_grad();
        for (Tensor& e : E) e.clear_grad();
        Tape tape;
        const Var loss =
            model.batch_loss(encode(tape.watch(enc.W), tape.watch(enc.b), tape.watch(E[t])), inputs, labels);
        tape.backward(loss);
        adam_step(prompts, hp);
        adam_step(encoder, hp);
        sums[t] += loss.value()[0] * static_cast<double>(inputs.size());
      }
    }
    for (std::size_t t = 0; t < T; ++t) losses.push_back(sums[t] / static_cast<double>(tasks[t].train.size()));
  }
  return {losses, E};
}

Verdict config_semantics(const FrozenBackbone& model, const std::filesystem::path& out) {
  const std::size_t k = kDefaultPromptLength, d = model.config().d_model;
  const std::vector<Task> tasks = small_tasks(16);
  const std::vector<std::string> names = names_of(tasks);

  Hyperparams hp = Hyperparams::for_scratch();
  hp.epochs = 3;
  hp.seed = 5;
  CompositionConfig p = config_from_name("P");
  const TrainRun run = train_multitask(p, tasks, model, init_bank(p, names, d, k, hp.seed, nullptr), hp, k);
  const auto [ref_loss, ref_prompts] = vanilla_prompt_tuning(tasks, model, hp, k);
  bool p_equal = run.trace.size() == ref_loss.size();
  for (std::size_t i = 0; p_equal && i < ref_loss.size(); ++i) p_equal = run.trace[i].loss == ref_loss[i];
  for (std::size_t t = 0; p_equal && t < tasks.size(); ++t) p_equal = bit_equal(run.bank.privates[t].E, ref_prompts[t]);

  CompositionConfig sl = config_from_name("SL");
  const TrainRun slrun = train_multitask(sl, tasks, model, init_bank(sl, names, d, k, hp.seed, nullptr), hp, k);
  const Tensor ps = slrun.encoded_sources().front();
  bool sl_equal = true;
  for (const Tensor& t : slrun.target_prompts()) sl_equal = sl_equal && bit_equal(t, ps);

  const PromptStore store(out / "sip_store");
  for (const std::string& n : names) store.save(init_prompt(n, k, d, prompt_seed(9, n), InitScheme::Gaussian));
  CompositionConfig sip = config_from_name("SIP");
  sip.resolve_sources(tasks.size());
  const PromptBank before = init_bank(sip, names, d, k, hp.seed, &store);
  Hyperparams hp20 = Hyperparams::for_initialized();
  hp20.seed = 5;
  const TrainRun siprun = train_multitask(sip, tasks, model, before, hp20, k);
  bool sip_frozen = hp20.epochs == 20;
  for (std::size_t s = 0; s < before.sources.size(); ++s) {
    sip_frozen = sip_frozen && bit_equal(siprun.bank.sources[s].E, before.sources[s].E);
  }
  return {p_equal && sl_equal && sip_frozen,
          format("P vs vanilla reference bit-identical: %s (%zu losses); SL M=1 P_t == P_s: %s; SIP sources "
                 "unchanged after %zu epochs: %s",
                 p_equal ? "yes" : "no", ref_loss.size(), sl_equal ? "yes" : "no", hp20.epochs,
                 sip_frozen ? "yes" : "no")};
}

// 4 -------------------------------------------------------------------------

Verdict weighted_sim_boundary(const FrozenBackbone& model, const std::filesystem::path& out) {
  const std::vector<Task> tasks = small_tasks(16);
  Hyperparams hp1 = Hyperparams::for_scratch(), hp2 = Hyperparams::for_scratch();
  hp1.epochs = 2;
  hp2.epochs = 3;
  const PromptStore store(out / "ws_store");
  const TrainRun sl = run_pipeline(tasks, config_from_name("SL"), tasks, model, hp1, hp2, store);
  const auto ws = compute_metrics(sl).weighted_sim;
  const TrainRun p = run_pipeline(tasks, config_from_name("P"), tasks, model, hp1, hp2, store);
  const TrainRun pi = run_pipeline(tasks, config_from_name("PI"), tasks, model, hp1, hp2, store);
  const bool p_undef = !compute_metrics(p).weighted_sim && !compute_metrics(pi).weighted_sim;
  const bool exact = ws && *ws == 1.0 && weighted_sim_display(*ws) == 100.0;
  return {exact && p_undef, format("SL WeightedSim %.17g (display %.17g); P/PI undefined: %s", ws ? *ws : NAN,
                                   ws ? weighted_sim_display(*ws) : NAN, p_undef ? "yes" : "no")};
}

// 5 -------------------------------------------------------------------------

Verdict cross_task_contract(const FrozenBackbone& model, const std::filesystem::path& out) {
  double asym = 0.0, diag = 0.0;
  // Trained target prompts plus random positive-mean prompts.
  const std::vector<Task> tasks = small_tasks(16);
  Hyperparams hp = Hyperparams::for_scratch();
  hp.epochs = 2;
  const PromptStore store(out / "ct_store");
  const TrainRun run = run_pipeline(tasks, config_from_name("SLPN"), tasks, model, hp, hp, store);
  std::vector<std::vector<Tensor>> sets{run.target_prompts()};
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    std::vector<Tensor> ps;
    for (int i = 0; i < 5; ++i) {
      Tensor t = gaussian({4, 6}, 1.0, rng);
      for (double& v : t.values()) v += 1.0;
      ps.push_back(t);
    }
    sets.push_back(ps);
  }
  for (const auto& ps : sets) {
    std::vector<std::string> names;
    for (std::size_t i = 0; i < ps.size(); ++i) names.push_back("p" + std::to_string(i));
    const SimMatrix s = cross_task_sim(ps, names);
    for (std::size_t i = 0; i < ps.size(); ++i) {
      diag = std::max(diag, std::abs(s.values(i, i) - 1.0));
      for (std::size_t j = 0; j < ps.size(); ++j) asym = std::max(asym, std::abs(s.values(i, j) - s.values(j, i)));
    }
  }
  Tensor p = sets[1][0], twice = p;
  for (double& v : twice.values()) v *= 2.0;
  const std::vector<Tensor> pair{p, twice};
  const double scale = std::abs(cross_task_sim(pair, std::vector<std::string>{"a", "b"}).values(0, 1) - 1.0);

  const Tensor a = Tensor::matrix(2, 2, {1, 0, 0, 1}), b = Tensor::matrix(2, 2, {1, 1, 1, -1});
  const double c = 1.0 / std::sqrt(2.0);
  const double expected = ((c + c + c - c) / 4.0) / std::sqrt(0.5 * 0.5);
  const std::vector<Tensor> ab{a, b};
  const double oracle = std::abs(cross_task_sim(ab, std::vector<std::string>{"a", "b"}).values(0, 1) - expected);
  return {asym <= kSymTol && diag <= kSymTol && scale <= kSymTol && oracle <= kOracleTol,
          format("max |S-S^T| %.1e, max |S_ii-1| %.1e, |S(P,2P)-1| %.1e (tol %.0e); 2-token oracle err %.1e (tol %.0e)",
                 asym, diag, scale, kSymTol, oracle, kOracleTol)};
}

// 6 -------------------------------------------------------------------------

Verdict interference(const std::filesystem::path& out, std::string& aggregate_bytes) {
  const auto t0 = std::chrono::steady_clock::now();
  ExperimentConfig plain = base_config(out / "contradictory", {"SL", "SLP"});
  plain.family = FamilyKind::Contradictory;
  plain.prefixes = false;
  const RunReport r = run_experiment(plain);
  aggregate_bytes = slurp(plain.out / "aggregate.csv");
  ExperimentConfig pre = plain;
  pre.methods = {"SL"};
  pre.prefixes = true;
  pre.out = out / "contradictory_prefix";
  const RunReport rp = run_experiment(pre);
  const double sl = method_mean(r, "SL"), slp = method_mean(r, "SLP"), slpre = method_mean(rp, "SL");
  const double secs = seconds_since(t0);
  const bool a = sl <= kContradictoryCeiling, b = slp - sl >= kPrivateLift, c = slpre - sl >= kPrefixLift;
  return {a && b && c && secs < kContradictorySeconds,
          format("SL %.3f (<= %.2f: %s); SLP %.3f, lift %+.3f (>= %.2f: %s); SL+prefix %.3f, lift %+.3f (>= %.2f: %s); "
                 "%.0f s (limit %.0f s)",
                 sl, kContradictoryCeiling, a ? "ok" : "no", slp, slp - sl, kPrivateLift, b ? "ok" : "no", slpre,
                 slpre - sl, kPrefixLift, c ? "ok" : "no", secs, kContradictorySeconds)};
}

// 7 -------------------------------------------------------------------------

ExperimentConfig transfer_config(const std::filesystem::path& out) {
  ExperimentConfig cfg = base_config(out, {"P", "SLPN", "SILP"});
  cfg.task_shots = {{"c0_t0", 8}, {"c0_t1", 64}};
  return cfg;
}

Verdict transfer(const std::filesystem::path& out, std::string& aggregate_bytes) {
  const ExperimentConfig cfg = transfer_config(out / "transfer");
  const RunReport r = run_experiment(cfg);
  aggregate_bytes = slurp(cfg.out / "aggregate.csv");
  auto low = [&](const std::string& m) {
    double s = 0.0;
    for (const CellResult& c : r.cells) {
      if (c.key.method != m) continue;
      if (!c.ok) throw Error("transfer cell failed: " + c.error);
      s += c.task_accuracy[0];
    }
    return s / static_cast<double>(kSeeds.size());
  };
  const double p = low("P"), slpn = low("SLPN"), silp = low("SILP");
  return {slpn - p >= kTransferMargin && silp - p >= kTransferMargin,
          format("low-resource task (8 shots, clustermate 64): P %.3f, SLPN %.3f (%+.3f), SILP %.3f (%+.3f); margin "
                 "%.2f",
                 p, slpn, slpn - p, silp, silp - p, kTransferMargin)};
}

// 8 -------------------------------------------------------------------------

Verdict source_sweep(const std::filesystem::path& out) {
  const ExperimentConfig cfg = base_config(out / "sweep", {"SL", "SLP"});
  const std::vector<RunReport> reports = sweep_sources(cfg, {1, 2, 3});
  std::vector<double> sl, slp;
  for (const RunReport& r : reports) {
    sl.push_back(method_mean(r, "SL"));
    slp.push_back(method_mean(r, "SLP"));
  }
  const double gain = sl[1] - sl[0];
  const double spread = *std::max_element(slp.begin(), slp.end()) - *std::min_element(slp.begin(), slp.end());
  return {gain >= kSweepGain && spread <= kSweepSpread,
          format("SL M=1 %.3f, M=2 %.3f, M=3 %.3f (gain %+.3f, need >= %.2f); SLP %.3f/%.3f/%.3f (spread %.3f, "
                 "need <= %.2f)",
                 sl[0], sl[1], sl[2], gain, kSweepGain, slp[0], slp[1], slp[2], spread, kSweepSpread)};
}

// 9 -------------------------------------------------------------------------

Verdict cluster_recovery(const std::filesystem::path& out) {
  const ExperimentConfig cfg = base_config(out / "clusters", {"SIL", "SLN"});
  const RunReport r = run_experiment(cfg);
  std::string detail;
  bool pass = true;
  for (const std::string method : {"SIL", "SLN"}) {
    std::size_t wins = 0;
    std::string per_seed;
    for (const CellResult& c : r.cells) {
      if (c.key.method != method) continue;
      if (!c.ok) throw Error("cluster cell failed: " + c.error);
      const std::size_t T = c.weights.rows(), per = cfg.tasks_per_cluster;
      double within = 0.0, between = 0.0;
      for (std::size_t t = 0; t < T; ++t)
        for (std::size_t s = 0; s < T; ++s) (t / per == s / per ? within : between) += c.weights(t, s);
      within /= static_cast<double>(T);
      between /= static_cast<double>(T);
      wins += within > between ? 1 : 0;
      per_seed += format(" %.2f/%.2f", within, between);
    }
    pass = pass && wins == kSeeds.size();
    detail += format("%s within/between per seed%s (%zu/%zu seeds); ", method.c_str(), per_seed.c_str(), wins,
                     kSeeds.size());
  }
  detail.resize(detail.size() - 2);
  return {pass, detail};
}

// 10 ------------------------------------------------------------------------

Verdict label_schemes(const std::filesystem::path& out) {
  ExperimentConfig natural = base_config(out / "labels_natural", {"SLP"});
  ExperimentConfig standard = natural;
  standard.label_scheme = LabelScheme::Standardized;
  standard.out = out / "labels_standardized";
  const double n = method_mean(run_experiment(natural), "SLP");
  const double s = method_mean(run_experiment(standard), "SLP");
  return {n >= s, format("SLP natural %.3f, standardized %.3f, gap %+.3f", n, s, n - s)};
}

// 11 ------------------------------------------------------------------------

Verdict parameter_audit(const FrozenBackbone& model, const std::filesystem::path& out) {
  const std::vector<Task> tasks = small_tasks(16);
  const std::size_t T = tasks.size(), k = kDefaultPromptLength, d = model.config().d_model;
  Hyperparams hp = Hyperparams::for_scratch();
  hp.epochs = 0;
  Hyperparams hp1 = hp;
  hp1.epochs = 1;
  std::size_t matched = 0, total = 0;
  std::string sip_note;
  for (const std::string& name : config_names()) {
    const PromptStore store(out / ("audit_" + name));
    const TrainRun run = run_pipeline(tasks, config_from_name(name), tasks, model, hp1, hp, store);
    const CompositionConfig& c = run.config;
    const std::size_t P = c.use_private ? T : 0;
    const std::size_t table = run.table.parameter_count();
    if (c.use_source && !c.learn_source) {
      // Frozen sources and encoder: only private prompts and the table train.
      const bool ok = run.trainable_parameters == P * k * d + table;
      sip_note = format("; %s (sources and encoder frozen) %zu == T*k*d + |table|: %s", name.c_str(),
                        run.trainable_parameters, ok ? "yes" : "no");
      matched += ok ? 1 : 0;
    } else {
      const std::size_t S = c.num_source_prompts;
      matched += run.trainable_parameters == (S + P) * k * d + d * d + d + table ? 1 : 0;
    }
    ++total;
  }
  return {matched == total, format("%zu/%zu configurations match (S+T)*k*d + d^2 + d + |table| with k=%zu d=%zu%s",
                                   matched, total, k, d, sip_note.c_str())};
}

// 12 ------------------------------------------------------------------------

Verdict determinism(const std::filesystem::path& out, const std::string& contradictory, const std::string& transfer_csv) {
  ExperimentConfig plain = base_config(out / "rerun_contradictory", {"SL", "SLP"});
  plain.family = FamilyKind::Contradictory;
  plain.prefixes = false;
  run_experiment(plain, 2);
  const ExperimentConfig t = transfer_config(out / "rerun_transfer");
  run_experiment(t, 2);
  const bool a = slurp(plain.out / "aggregate.csv") == contradictory;
  const bool b = slurp(t.out / "aggregate.csv") == transfer_csv;
  return {a && b && !contradictory.empty(),
          format("rerun with 2 jobs: contradictory grid aggregate identical: %s; transfer grid aggregate identical: %s",
                 a ? "yes" : "no", b ? "yes" : "no")};
}

}  // namespace

int main(int argc, char** argv) {
  const std::filesystem::path out =
      argc > 1 ? std::filesystem::path(argv[1]) : std::filesystem::temp_directory_path() / "crosspt_acceptance";
  std::filesystem::remove_all(out);
  std::filesystem::create_directories(out);
  BackboneConfig bc;
  bc.seed = kBackboneSeed;
  const FrozenBackbone model(bc);

  std::string contradictory_csv, transfer_csv;
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
      {"gradient correctness", [] { return gradient_correctness(); }},
      {"adaptive temperature", [] { return temperature_exactness(); }},
      {"configuration semantics", [&] { return config_semantics(model, out); }},
      {"WeightedSim boundary", [&] { return weighted_sim_boundary(model, out); }},
      {"cross-task similarity", [&] { return cross_task_contract(model, out); }},
      {"interference", [&] { return interference(out, contradictory_csv); }},
      {"transfer", [&] { return transfer(out, transfer_csv); }},
      {"source-count sweep", [&] { return source_sweep(out); }},
      {"cluster recovery", [&] { return cluster_recovery(out); }},
      {"label schemes", [&] { return label_schemes(out); }},
      {"parameter audit", [&] { return parameter_audit(model, out); }},
      {"determinism", [&] { return determinism(out, contradictory_csv, transfer_csv); }},
  };
  std::size_t failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("error: ") + e.what()};
    }
    failed += v.pass ? 0 : 1;
    std::printf("%s %2zu %s: %s [%.1f s]\n", v.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(),
                v.detail.c_str(), seconds_since(t0));
    std::fflush(stdout);
  }
  std::printf("%zu/%zu criteria passed\n", criteria.size() - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
