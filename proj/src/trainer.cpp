// Copyright 2026 The CrossPT Authors
// SPDX-License-Identifier: Apache-2.0

#include "crosspt/trainer.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "crosspt/errors.hpp"

namespace crosspt {

namespace {

constexpr std::uint64_t kSampleStream = 0x5a3d;
constexpr std::uint64_t kStage2Stream = 0x7a5c;

std::string private_name(const std::string& task) { return "private:" + task; }

std::string fmt6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

std::vector<LabeledExample> few_shot_sample(const Task& task, std::size_t n, std::uint64_t seed) {
  const std::size_t classes = std::max<std::size_t>(task.label_tokens.size(), task.spec.num_classes);
  if (classes == 0) throw DataError("task \"" + task.spec.name + "\" has no classes");
  std::vector<std::vector<std::size_t>> by_class(classes);
  for (std::size_t i = 0; i < task.train.size(); ++i) {
    const std::size_t c = task.train[i].label_class;
    if (c >= classes) throw DataError("task \"" + task.spec.name + "\": class index out of range");
    by_class[c].push_back(i);
  }
  std::vector<std::size_t> quota(classes, n / classes);
  for (std::size_t c = 0; c < n % classes; ++c) ++quota[c];
  for (std::size_t c = 0; c < classes; ++c) {
    if (by_class[c].size() < quota[c]) {
      throw DataError("task \"" + task.spec.name + "\": " + std::to_string(n) + " shots need " +
                      std::to_string(quota[c]) + " examples of class " + std::to_string(c) + ", pool has " +
                      std::to_string(by_class[c].size()));
    }
  }
  Rng rng(mix_seed(seed, kSampleStream));
  std::vector<std::size_t> picked;
  for (std::size_t c = 0; c < classes; ++c) {
    std::shuffle(by_class[c].begin(), by_class[c].end(), rng.engine());
    picked.insert(picked.end(), by_class[c].begin(), by_class[c].begin() + static_cast<std::ptrdiff_t>(quota[c]));
  }
  std::shuffle(picked.begin(), picked.end(), rng.engine());
  std::vector<LabeledExample> out;
  out.reserve(n);
  for (std::size_t i : picked) out.push_back(task.train[i]);
  return out;
}

std::size_t PromptBank::prompt_parameter_count() const {
  std::size_t n = 0;
  for (const SoftPrompt& p : sources) n += p.E.size();
  for (const SoftPrompt& p : privates) n += p.E.size();
  return n;
}

PromptBank init_bank(const CompositionConfig& cfg, std::span<const std::string> task_names, std::size_t d,
                     std::size_t prompt_length, std::uint64_t seed, const PromptStore* store) {
  PromptBank bank;
  bank.encoder = PromptEncoder::identity(d);
  auto stored = [&](const std::string& task, const std::string& name, PromptRole role) {
    if (store == nullptr || !store->contains(task)) {
      throw StoreError(cfg.name + " needs the Stage-1 prompt \"" + task + "\", which is missing");
    }
    SoftPrompt p = init_prompt(task, prompt_length, d, 0, InitScheme::FromCheckpoint, role, store);
    p.name = name;
    return p;
  };
  if (cfg.use_source) {
    if (cfg.init_source && cfg.num_source_prompts != task_names.size()) {
      throw ContractError(cfg.name + ": initialized sources need one source per task");
    }
    for (std::size_t s = 0; s < cfg.num_source_prompts; ++s) {
      if (cfg.init_source) {
        bank.sources.push_back(stored(task_names[s], task_names[s], PromptRole::Source));
      } else {
        const std::string name = cfg.sharing == Sharing::PerTask ? "source:" + task_names[s]
                                                                  : "source_" + std::to_string(s);
        bank.sources.push_back(
            init_prompt(name, prompt_length, d, prompt_seed(seed, name), InitScheme::Gaussian, PromptRole::Source));
      }
    }
  }
  if (cfg.use_private) {
    for (const std::string& task : task_names) {
      const std::string name = private_name(task);
      if (cfg.init_private) {
        bank.privates.push_back(stored(task, name, PromptRole::Private));
      } else {
        bank.privates.push_back(
            init_prompt(name, prompt_length, d, prompt_seed(seed, name), InitScheme::Gaussian, PromptRole::Private));
      }
    }
  }
  return bank;
}

std::vector<ParamGroup> build_param_groups(const CompositionConfig& cfg, PromptBank& bank, AttentionTable& table,
                                           const Hyperparams& hp) {
  if (cfg.use_source != !bank.sources.empty() || bank.sources.size() != cfg.num_source_prompts) {
    throw ContractError(cfg.name + ": bank holds " + std::to_string(bank.sources.size()) + " sources, expected " +
                        std::to_string(cfg.num_source_prompts));
  }
  if (cfg.use_private == bank.privates.empty()) {
    throw ContractError(cfg.name + ": private prompts do not match the configuration");
  }
  if (cfg.use_source && table.slots() != cfg.slot_count()) {
    throw ContractError(cfg.name + ": attention table has " + std::to_string(table.slots()) + " slots, expected " +
                        std::to_string(cfg.slot_count()));
  }
  const bool frozen_sources = cfg.use_source && !cfg.learn_source;
  std::vector<ParamGroup> groups;
  if (cfg.use_source) {
    std::vector<Tensor*> ts;
    for (SoftPrompt& p : bank.sources) {
      p.E.set_requires_grad(cfg.learn_source);
      ts.push_back(&p.E);
    }
    if (cfg.learn_source) groups.emplace_back(GroupLabel::Source, ts, hp.lr_source);
  }
  if (cfg.use_private) {
    std::vector<Tensor*> ts;
    for (SoftPrompt& p : bank.privates) {
      p.E.set_requires_grad(true);
      ts.push_back(&p.E);
    }
    groups.emplace_back(GroupLabel::Private, ts, hp.lr_private);
  }
  if (cfg.use_source) {
    table.set_trainable(true);
    std::vector<Tensor*> ts;
    for (Tensor& r : table.rows) ts.push_back(&r);
    groups.emplace_back(GroupLabel::Attention, ts, hp.lr_attention);
  }
  bank.encoder.set_trainable(!frozen_sources);
  if (!frozen_sources) {
    groups.emplace_back(GroupLabel::Encoder, std::vector<Tensor*>{&bank.encoder.W, &bank.encoder.b}, hp.lr_encoder);
  }
  return groups;
}

std::size_t trainable_parameter_count(std::span<const ParamGroup> groups) {
  std::size_t n = 0;
  for (const ParamGroup& g : groups) n += g.parameter_count();
  return n;
}

double TrainRun::mean_accuracy() const {
  if (test_accuracy.empty()) return 0.0;
  return std::accumulate(test_accuracy.begin(), test_accuracy.end(), 0.0) /
         static_cast<double>(test_accuracy.size());
}

Tensor TrainRun::weights() const {
  if (!config.use_source) return Tensor::zeros({task_names.size(), 0});
  return precompute_inference_weights(table, config);
}

std::vector<Tensor> TrainRun::encoded_sources() const {
  std::vector<Tensor> out;
  for (const SoftPrompt& p : bank.sources) out.push_back(encode(bank.encoder, p.E));
  return out;
}

std::vector<Tensor> TrainRun::target_prompts() const {
  const std::vector<Tensor> sources = encoded_sources();
  std::vector<Tensor> out;
  for (std::size_t t = 0; t < task_names.size(); ++t) {
    std::optional<Tensor> priv;
    if (config.use_private) priv = encode(bank.encoder, bank.privates[t].E);
    out.push_back(compose_target(t, sources, priv ? &*priv : nullptr, table, config));
  }
  return out;
}

namespace {

void clear_all(std::span<ParamGroup> groups) {
  for (ParamGroup& g : groups)
    for (Tensor* t : g.tensors) t->clear_grad();
}

void evaluate_run(TrainRun& run, std::span<const Task> tasks, const FrozenBackbone& model) {
  const std::vector<Tensor> targets = run.target_prompts();
  run.test_accuracy.clear();
  run.test_loss.clear();
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    const Evaluation e = evaluate_prompt(model, targets[t], tasks[t].test);
    run.test_accuracy.push_back(e.accuracy);
    run.test_loss.push_back(e.loss);
  }
}

}  // namespace

TrainRun train_multitask(const CompositionConfig& cfg, std::span<const Task> tasks, const FrozenBackbone& model,
                         PromptBank bank, const Hyperparams& hp, std::size_t prompt_length) {
  hp.validate();
  cfg.validate();
  if (tasks.empty()) throw DataError("no tasks to train");
  const std::size_t T = tasks.size();
  const std::size_t v = model.config().vocab_size;

  TrainRun run;
  run.config = cfg;
  run.hp = hp;
  for (const Task& t : tasks) {
    if (t.train.empty()) throw DataError("task \"" + t.spec.name + "\" has no training examples");
    if (t.test.empty()) throw DataError("task \"" + t.spec.name + "\" has no test examples");
    run.task_names.push_back(t.spec.name);
  }
  for (const SoftPrompt& p : bank.sources) {
    if (p.length() != prompt_length) throw DimensionError("source prompt \"" + p.name + "\" has the wrong length");
  }
  run.bank = std::move(bank);
  if (cfg.use_source) run.table = AttentionTable::zeros(T, cfg.slot_count());
  if (cfg.use_private && run.bank.privates.size() != T) {
    throw ContractError(cfg.name + ": need one private prompt per task");
  }

  std::vector<ParamGroup> groups = build_param_groups(cfg, run.bank, run.table, hp);
  run.trainable_parameters = trainable_parameter_count(groups);
  PromptBank& b = run.bank;

  Rng rng(mix_seed(hp.seed, kStage2Stream));
  for (std::size_t epoch = 0; epoch < hp.epochs; ++epoch) {
    std::vector<std::vector<std::vector<std::size_t>>> schedule(T);
    std::size_t rounds = 0;
    for (std::size_t t = 0; t < T; ++t) {
      schedule[t] = shuffled_batches(tasks[t].train.size(), hp.batch_size, rng);
      rounds = std::max(rounds, schedule[t].size());
    }
    std::vector<double> loss_sum(T, 0.0);
    std::vector<std::size_t> correct(T, 0);
    for (std::size_t r = 0; r < rounds; ++r) {
      for (std::size_t t = 0; t < T; ++t) {
        if (r >= schedule[t].size()) continue;
        const auto& batch = schedule[t][r];
        std::vector<TokenSeq> inputs;
        std::vector<std::size_t> labels;
        for (std::size_t i : batch) {
          inputs.push_back(tasks[t].train[i].tokens);
          labels.push_back(tasks[t].train[i].label_token);
        }
        clear_all(groups);
        Tape tape;
        const Var W = tape.watch(b.encoder.W);
        const Var bias = tape.watch(b.encoder.b);
        std::vector<Var> sources;
        for (SoftPrompt& p : b.sources) sources.push_back(encode(W, bias, tape.watch(p.E)));
        std::optional<Var> priv;
        if (cfg.use_private) priv = encode(W, bias, tape.watch(b.privates[t].E));
        std::optional<Var> logits_z;
        if (cfg.use_source) logits_z = tape.watch(run.table.rows[t]);
        const Var P = compose_target(sources, priv, logits_z, cfg);
        const Var logits = model.batch_logits(P, inputs);
        const Var loss = cross_entropy(logits, labels);
        tape.backward(loss);
        for (ParamGroup& g : groups) adam_step(g, hp);

        loss_sum[t] += loss.value()[0] * static_cast<double>(batch.size());
        for (std::size_t k = 0; k < batch.size(); ++k) {
          if (argmax(logits.value().values().subspan(k * v, v)) == labels[k]) ++correct[t];
        }
      }
    }
    for (std::size_t t = 0; t < T; ++t) {
      const double n = static_cast<double>(tasks[t].train.size());
      run.trace.push_back({epoch + 1, run.task_names[t], loss_sum[t] / n, static_cast<double>(correct[t]) / n});
    }
  }
  clear_all(groups);
  evaluate_run(run, tasks, model);
  return run;
}

TrainRun run_pipeline(std::span<const Task> stage1_tasks, CompositionConfig cfg, std::span<const Task> stage2_tasks,
                      const FrozenBackbone& model, const Hyperparams& hp1, const Hyperparams& hp2,
                      const PromptStore& store, const PipelineOptions& options) {
  cfg.resolve_sources(stage2_tasks.size());
  cfg.validate();
  const std::size_t d = model.config().d_model;
  PromptEncoder carried = PromptEncoder::identity(d);
  if (cfg.initialized()) {
    for (const Task& task : stage1_tasks) {
      PromptEncoder fresh = PromptEncoder::identity(d);
      PromptEncoder& enc = options.encoder_reuse == EncoderReuse::Carryover ? carried : fresh;
      SourceTrainingResult r = train_source_prompt(task.spec.name, task.train, model, enc, hp1, options.prompt_length);
      store.save(r.prompt);
    }
  }
  std::vector<std::string> names;
  for (const Task& t : stage2_tasks) names.push_back(t.spec.name);
  PromptBank bank = init_bank(cfg, names, d, options.prompt_length, hp2.seed, &store);
  if (options.encoder_reuse == EncoderReuse::Carryover) bank.encoder = carried;
  return train_multitask(cfg, stage2_tasks, model, std::move(bank), hp2, options.prompt_length);
}

RunMetrics compute_metrics(const TrainRun& run) {
  RunMetrics m;
  const std::vector<Tensor> targets = run.target_prompts();
  std::vector<Tensor> slots = run.encoded_sources();
  std::vector<std::string> slot_names;
  for (const SoftPrompt& p : run.bank.sources) slot_names.push_back(p.name);
  const std::size_t M = slots.size();
  for (const SoftPrompt& p : run.bank.privates) {
    slots.push_back(encode(run.bank.encoder, p.E));
    slot_names.push_back(p.name);
  }
  m.sim = target_source_sim(targets, run.task_names, slots, slot_names);

  const Tensor w = run.weights();
  Tensor ws = Tensor::zeros({run.task_names.size(), M});
  Tensor ss = Tensor::zeros({run.task_names.size(), M});
  for (std::size_t t = 0; t < run.task_names.size(); ++t) {
    for (std::size_t s = 0; s < M; ++s) {
      ws(t, s) = w(t, s);
      ss(t, s) = m.sim.values(t, s);
    }
  }
  m.weighted_sim = weighted_sim_source(ws, ss);
  m.cross_task = cross_task_sim(targets, run.task_names);
  return m;
}

void write_trace_csv(const TrainRun& run, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ExportError("cannot write " + path.string());
  out << "epoch,task,loss,accuracy\n";
  for (const TraceRow& r : run.trace) out << r.epoch << ',' << r.task << ',' << fmt6(r.loss) << ',' << fmt6(r.accuracy) << '\n';
  if (!out) throw ExportError("write failed for " + path.string());
}

void write_metrics_json(const TrainRun& run, const RunMetrics& metrics, const std::string& weights_path,
                        const std::filesystem::path& path) {
  nlohmann::ordered_json j;
  j["method"] = run.config.name;
  j["seed"] = run.hp.seed;
  j["epochs"] = run.hp.epochs;
  nlohmann::ordered_json tasks = nlohmann::ordered_json::object();
  for (std::size_t t = 0; t < run.task_names.size(); ++t) {
    tasks[run.task_names[t]] = {{"accuracy", run.test_accuracy[t]}, {"loss", run.test_loss[t]}};
  }
  j["tasks"] = tasks;
  j["mean_accuracy"] = run.mean_accuracy();
  if (metrics.weighted_sim) {
    j["weighted_sim"] = *metrics.weighted_sim;
    j["weighted_sim_display"] = weighted_sim_display(*metrics.weighted_sim);
  } else {
    j["weighted_sim"] = nullptr;
    j["weighted_sim_display"] = nullptr;
  }
  j["num_source_prompts"] = run.config.num_source_prompts;
  j["trainable_parameters"] = run.trainable_parameters;
  j["weights_path"] = weights_path;
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ExportError("cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw ExportError("write failed for " + path.string());
}

}  // namespace crosspt
