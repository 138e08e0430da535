// Copyright 2026 The CrossPT Authors
// SPDX-License-Identifier: Apache-2.0

#include "crosspt/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "crosspt/errors.hpp"
#include "crosspt/metrics.hpp"

namespace crosspt {

namespace {

using nlohmann::json;

const std::set<std::string> kOverrideKeys{"lr_source",  "lr_private",         "lr_attention",       "lr_encoder",
                                          "batch_size", "epochs",             "stage1_epochs",      "num_source_prompts",
                                          "tau_counts_private"};

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

std::string lr_label(double v) {
  std::string s = fmt("%g", v);
  std::replace(s.begin(), s.end(), '.', 'p');
  return s;
}

template <class T>
T get_as(const json& j, const std::string& key) {
  try {
    return j.get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config key \"" + key + "\" has the wrong type");
  }
}

std::size_t count_of(const json& j, const std::string& key) {
  if (!j.is_number_integer() || j.get<long long>() < 0) {
    throw ConfigError("config key \"" + key + "\" must be a non-negative integer");
  }
  return j.get<std::size_t>();
}

FamilyKind family_kind_from_string(const std::string& s) {
  if (s == "synthetic") return FamilyKind::Synthetic;
  if (s == "contradictory") return FamilyKind::Contradictory;
  if (s == "files") return FamilyKind::Files;
  throw ConfigError("unknown family \"" + s + "\" (synthetic, contradictory or files)");
}

double mean_of(const std::vector<double>& xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

double sample_std(const std::vector<double>& xs) {
  if (xs.size() < 2) return std::nan("");
  const double m = mean_of(xs);
  double s = 0.0;
  for (double x : xs) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(xs.size() - 1));
}

std::string csv_number(double v) { return std::isnan(v) ? "nan" : fmt("%.6f", v); }

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ExportError("cannot write " + path.string());
  out << text;
}

Hyperparams stage2_hyperparams(const ExperimentConfig& cfg, const CompositionConfig& comp, std::uint64_t seed) {
  Hyperparams hp = comp.initialized() ? Hyperparams::for_initialized() : Hyperparams::for_scratch();
  hp.seed = seed;
  for (const auto& [key, value] : cfg.overrides) {
    if (key == "lr_source") hp.lr_source = value;
    if (key == "lr_private") hp.lr_private = value;
    if (key == "lr_attention") hp.lr_attention = value;
    if (key == "lr_encoder") hp.lr_encoder = value;
    if (key == "batch_size") hp.batch_size = static_cast<std::size_t>(value);
    if (key == "epochs") hp.epochs = static_cast<std::size_t>(value);
  }
  hp.validate();
  return hp;
}

Hyperparams stage1_hyperparams(const ExperimentConfig& cfg, std::uint64_t seed) {
  Hyperparams hp = Hyperparams::for_scratch();
  hp.seed = seed;
  if (auto it = cfg.overrides.find("stage1_epochs"); it != cfg.overrides.end()) {
    hp.epochs = static_cast<std::size_t>(it->second);
  }
  if (auto it = cfg.overrides.find("lr_encoder"); it != cfg.overrides.end()) hp.lr_encoder = it->second;
  if (auto it = cfg.overrides.find("batch_size"); it != cfg.overrides.end()) {
    hp.batch_size = static_cast<std::size_t>(it->second);
  }
  hp.validate();
  return hp;
}

CompositionConfig composition_for(const ExperimentConfig& cfg, const std::string& method, std::size_t num_tasks) {
  CompositionConfig comp = config_from_name(method);
  if (auto it = cfg.overrides.find("num_source_prompts"); it != cfg.overrides.end() && comp.use_source) {
    if (comp.sharing == Sharing::PerTask) {
      throw ConfigError(comp.name + " has one source per task; num_source_prompts cannot be overridden");
    }
    comp.num_source_prompts = static_cast<std::size_t>(it->second);
  }
  if (auto it = cfg.overrides.find("tau_counts_private"); it != cfg.overrides.end()) {
    comp.tau_counts_private = it->second != 0.0;
  }
  comp.resolve_sources(num_tasks);
  comp.validate();
  return comp;
}

void save_final_prompts(const TrainRun& run, const std::filesystem::path& dir) {
  PromptStore store(dir);
  auto sanitize = [](std::string s) {
    std::replace(s.begin(), s.end(), ':', '.');
    return s;
  };
  for (const SoftPrompt& p : run.bank.sources) {
    SoftPrompt copy = p;
    copy.name = "source." + sanitize(p.name);
    store.save(copy);
  }
  for (const SoftPrompt& p : run.bank.privates) {
    SoftPrompt copy = p;
    copy.name = sanitize(p.name);
    store.save(copy);
  }
  const std::vector<Tensor> targets = run.target_prompts();
  for (std::size_t t = 0; t < targets.size(); ++t) {
    store.save(SoftPrompt{"target." + run.task_names[t], PromptRole::Target, targets[t]});
  }
}

}  // namespace

void ExperimentConfig::validate() const {
  if (methods.empty()) throw ConfigError("experiment needs at least one method");
  for (const std::string& m : methods) config_from_name(m);
  if (seeds.empty()) throw ConfigError("experiment needs at least one seed");
  if (shots.empty()) throw ConfigError("experiment needs at least one shot count");
  for (std::size_t s : shots) {
    if (s == 0) throw ConfigError("shot counts must be positive");
  }
  if (family == FamilyKind::Files && task_files.empty()) throw ConfigError("family \"files\" needs task_files");
  for (const auto& [key, value] : overrides) {
    if (!kOverrideKeys.contains(key)) throw ConfigError("unknown override \"" + key + "\"");
    if (!std::isfinite(value)) throw ConfigError("override \"" + key + "\" is not finite");
    if (key.rfind("lr_", 0) == 0 && value < 0.0) throw ConfigError("override \"" + key + "\" is negative");
    if (key == "num_source_prompts" && value < 1.0) throw ConfigError("num_source_prompts must be at least 1");
  }
  backbone.validate();
}

ExperimentConfig parse_experiment_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  ExperimentConfig c;
  for (const auto& [key, v] : j.items()) {
    if (key == "methods") {
      c.methods = get_as<std::vector<std::string>>(v, key);
    } else if (key == "shots") {
      c.shots.clear();
      if (!v.is_array()) throw ConfigError("config key \"shots\" must be a list");
      for (const json& x : v) c.shots.push_back(count_of(x, key));
    } else if (key == "seeds") {
      c.seeds = get_as<std::vector<std::uint64_t>>(v, key);
    } else if (key == "family") {
      c.family = family_kind_from_string(get_as<std::string>(v, key));
    } else if (key == "clusters") {
      c.clusters = count_of(v, key);
    } else if (key == "tasks_per_cluster") {
      c.tasks_per_cluster = count_of(v, key);
    } else if (key == "classes") {
      c.num_classes = count_of(v, key);
    } else if (key == "label_scheme") {
      c.label_scheme = label_scheme_from_string(get_as<std::string>(v, key));
    } else if (key == "prefixes") {
      c.prefixes = get_as<bool>(v, key);
    } else if (key == "pool_size") {
      c.pool_size = count_of(v, key);
    } else if (key == "boundary_gap") {
      c.boundary_gap = get_as<double>(v, key);
    } else if (key == "token_skew") {
      c.token_skew = get_as<double>(v, key);
    } else if (key == "family_seed") {
      c.family_seed = get_as<std::uint64_t>(v, key);
    } else if (key == "task_files") {
      for (const std::string& p : get_as<std::vector<std::string>>(v, key)) c.task_files.emplace_back(p);
    } else if (key == "backbone_seed") {
      c.backbone.seed = get_as<std::uint64_t>(v, key);
    } else if (key == "d_model") {
      c.backbone.d_model = count_of(v, key);
    } else if (key == "n_layers") {
      c.backbone.n_layers = count_of(v, key);
    } else if (key == "n_heads") {
      c.backbone.n_heads = count_of(v, key);
    } else if (key == "d_ff") {
      c.backbone.d_ff = count_of(v, key);
    } else if (key == "vocab_size") {
      c.backbone.vocab_size = count_of(v, key);
    } else if (key == "max_len") {
      c.backbone.max_len = count_of(v, key);
    } else if (key == "prompt_length") {
      c.prompt_length = count_of(v, key);
    } else if (key == "overrides") {
      if (!v.is_object()) throw ConfigError("config key \"overrides\" must be an object");
      for (const auto& [ok, ov] : v.items()) {
        if (ok == "encoder_reuse") {
          const std::string mode = get_as<std::string>(ov, ok);
          if (mode == "per_stage") {
            c.encoder_reuse = EncoderReuse::PerStage;
          } else if (mode == "carryover") {
            c.encoder_reuse = EncoderReuse::Carryover;
          } else {
            throw ConfigError("encoder_reuse must be \"per_stage\" or \"carryover\"");
          }
        } else if (ov.is_boolean()) {
          c.overrides[ok] = ov.get<bool>() ? 1.0 : 0.0;
        } else if (ov.is_number()) {
          c.overrides[ok] = ov.get<double>();
        } else {
          throw ConfigError("override \"" + ok + "\" must be a number");
        }
      }
    } else if (key == "task_shots") {
      if (!v.is_object()) throw ConfigError("config key \"task_shots\" must be an object");
      for (const auto& [tk, tv] : v.items()) c.task_shots[tk] = count_of(tv, "task_shots." + tk);
    } else if (key == "out") {
      c.out = get_as<std::string>(v, key);
    } else {
      throw ConfigError("unknown config key \"" + key + "\"");
    }
  }
  c.validate();
  return c;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_experiment_config(ss.str());
}

std::vector<Task> experiment_tasks(const ExperimentConfig& cfg, std::uint64_t seed) {
  switch (cfg.family) {
    case FamilyKind::Synthetic: {
      FamilyOptions o;
      o.n_clusters = cfg.clusters;
      o.tasks_per_cluster = cfg.tasks_per_cluster;
      o.num_classes = cfg.num_classes;
      o.scheme = cfg.label_scheme;
      o.prefixes = cfg.prefixes;
      o.pool_size = cfg.pool_size;
      o.boundary_gap = cfg.boundary_gap;
      o.token_skew = cfg.token_skew;
      o.seed = cfg.family_seed.value_or(seed);
      return make_family(o, cfg.backbone).tasks;
    }
    case FamilyKind::Contradictory:
      return make_contradictory_pair(cfg.family_seed.value_or(seed), cfg.backbone, cfg.prefixes, cfg.pool_size)
          .tasks;
    case FamilyKind::Files: {
      std::vector<Task> tasks;
      for (const auto& p : cfg.task_files) {
        tasks.push_back(load_task_file(p, task_file_format_from_path(p), cfg.backbone.vocab_size));
      }
      return tasks;
    }
  }
  return {};
}

CellResult run_cell(const ExperimentConfig& cfg, const FrozenBackbone& model, const CellKey& key,
                    const std::filesystem::path& dir) {
  CellResult r;
  r.key = key;
  r.dir = dir;
  std::error_code ec;
  std::filesystem::remove_all(dir, ec);
  std::filesystem::create_directories(dir);
  try {
    std::vector<Task> tasks = experiment_tasks(cfg, key.seed);
    for (std::size_t i = 0; i < tasks.size(); ++i) {
      const auto it = cfg.task_shots.find(tasks[i].spec.name);
      const std::size_t n = it != cfg.task_shots.end() ? it->second : key.shots;
      tasks[i].train = few_shot_sample(tasks[i], n, mix_seed(key.seed, i));
    }
    const CompositionConfig comp = composition_for(cfg, key.method, tasks.size());
    const Hyperparams hp2 = stage2_hyperparams(cfg, comp, key.seed);
    const Hyperparams hp1 = stage1_hyperparams(cfg, key.seed);
    PromptStore stage1(dir / "stage1");
    PipelineOptions options;
    options.prompt_length = cfg.prompt_length;
    options.encoder_reuse = cfg.encoder_reuse.value_or(EncoderReuse::PerStage);
    const TrainRun run = run_pipeline(tasks, comp, tasks, model, hp1, hp2, stage1, options);
    const RunMetrics metrics = compute_metrics(run);

    std::vector<std::string> source_names;
    for (const SoftPrompt& p : run.bank.sources) source_names.push_back(p.name);
    Tensor w = run.weights();
    if (!comp.use_source) w = Tensor::filled({run.task_names.size(), 1}, 1.0);
    export_weights_csv(w, run.task_names, source_names, comp.use_private, dir / "weights.csv");
    write_trace_csv(run, dir / "trace.csv");
    export_matrix(metrics.sim, dir / "sim.csv", MatrixFormat::Csv);
    export_matrix(metrics.sim, dir / "sim.svg", MatrixFormat::Svg, key.method + " target-slot similarity");
    export_matrix(metrics.cross_task, dir / "crosstask.csv", MatrixFormat::Csv);
    export_matrix(metrics.cross_task, dir / "crosstask.svg", MatrixFormat::Svg,
                  key.method + " cross-task similarity");
    save_final_prompts(run, dir / "prompts");
    write_metrics_json(run, metrics, "weights.csv", dir / "metrics.json");

    r.ok = true;
    r.task_names = run.task_names;
    r.task_accuracy = run.test_accuracy;
    r.mean_accuracy = run.mean_accuracy();
    r.weighted_sim = metrics.weighted_sim;
    r.weights = run.weights();
  } catch (const std::exception& e) {
    r.ok = false;
    r.error = e.what();
    write_text(dir / "error.txt", r.error + "\n");
  }
  return r;
}

std::vector<AggregateRow> aggregate(const std::vector<CellResult>& cells) {
  std::vector<AggregateRow> rows;
  std::vector<std::pair<std::string, std::size_t>> keys;
  for (const CellResult& c : cells) {
    const std::pair<std::string, std::size_t> k{c.key.method, c.key.shots};
    if (std::find(keys.begin(), keys.end(), k) == keys.end()) keys.push_back(k);
  }
  for (const auto& [method, shots] : keys) {
    AggregateRow row;
    row.method = method;
    row.shots = shots;
    std::vector<double> acc, sim;
    bool sim_defined = true;
    for (const CellResult& c : cells) {
      if (c.key.method != method || c.key.shots != shots) continue;
      if (!c.ok) {
        ++row.failed;
        continue;
      }
      ++row.ok;
      acc.push_back(c.mean_accuracy);
      if (c.weighted_sim) {
        sim.push_back(*c.weighted_sim);
      } else {
        sim_defined = false;
      }
    }
    if (!acc.empty()) {
      row.accuracy_mean = mean_of(acc);
      row.accuracy_std = sample_std(acc);
    } else {
      row.accuracy_mean = row.accuracy_std = std::nan("");
    }
    if (sim_defined && !sim.empty()) {
      row.weighted_sim_mean = mean_of(sim);
      row.weighted_sim_std = sample_std(sim);
    }
    rows.push_back(row);
  }
  return rows;
}

void write_aggregate_csv(const std::vector<AggregateRow>& rows, const std::filesystem::path& path) {
  std::ostringstream out;
  out << "method,shots,cells_ok,cells_failed,accuracy_mean,accuracy_std,weighted_sim_mean,weighted_sim_std\n";
  for (const AggregateRow& r : rows) {
    out << r.method << ',' << r.shots << ',' << r.ok << ',' << r.failed << ',' << csv_number(r.accuracy_mean) << ','
        << csv_number(r.accuracy_std) << ',' << (r.weighted_sim_mean ? csv_number(*r.weighted_sim_mean) : "undefined")
        << ',' << (r.weighted_sim_std ? csv_number(*r.weighted_sim_std) : "undefined") << '\n';
  }
  write_text(path, out.str());
}

bool RunReport::all_ok() const {
  return std::all_of(cells.begin(), cells.end(), [](const CellResult& c) { return c.ok; });
}

RunReport run_experiment(const ExperimentConfig& cfg, std::size_t jobs) {
  cfg.validate();
  std::filesystem::create_directories(cfg.out);
  const FrozenBackbone model(cfg.backbone);
  model.save(cfg.out / "backbone.cptb");

  std::vector<CellKey> keys;
  for (const std::string& m : cfg.methods)
    for (std::size_t s : cfg.shots)
      for (std::uint64_t seed : cfg.seeds) keys.push_back({config_from_name(m).name, s, seed});

  RunReport report;
  report.cells.resize(keys.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < keys.size(); i = next++) {
      const CellKey& k = keys[i];
      const auto dir = cfg.out / k.method / std::to_string(k.shots) / std::to_string(k.seed);
      report.cells[i] = run_cell(cfg, model, k, dir);
    }
  };
  const std::size_t n = std::max<std::size_t>(1, std::min(jobs, keys.size()));
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < n; ++t) pool.emplace_back(worker);
  worker();
  for (std::thread& t : pool) t.join();

  report.rows = aggregate(report.cells);
  write_aggregate_csv(report.rows, cfg.out / "aggregate.csv");
  return report;
}

std::vector<RunReport> sweep_sources(const ExperimentConfig& cfg, const std::vector<std::size_t>& m_values,
                                     std::size_t jobs) {
  if (m_values.empty()) throw ConfigError("sweep-sources needs at least one M");
  for (std::size_t m : m_values) {
    if (m < 1) throw ConfigError("M must be at least 1");
  }
  for (const std::string& method : cfg.methods) {
    const std::string name = config_from_name(method).name;
    if (name != "SL" && name != "SLP") throw ConfigError("sweep-sources supports SL and SLP, not " + name);
  }
  std::vector<RunReport> reports;
  std::ostringstream csv;
  csv << "method,shots,M,cells_ok,accuracy_mean,accuracy_std\n";
  std::map<std::pair<std::string, std::size_t>, LineSeries> series;
  for (std::size_t m : m_values) {
    ExperimentConfig c = cfg;
    c.overrides["num_source_prompts"] = static_cast<double>(m);
    c.out = cfg.out / ("M" + std::to_string(m));
    reports.push_back(run_experiment(c, jobs));
    for (const AggregateRow& r : reports.back().rows) {
      csv << r.method << ',' << r.shots << ',' << m << ',' << r.ok << ',' << csv_number(r.accuracy_mean) << ','
          << csv_number(r.accuracy_std) << '\n';
      LineSeries& s = series[{r.method, r.shots}];
      s.name = r.method + " (" + std::to_string(r.shots) + " shots)";
      s.x.push_back(static_cast<double>(m));
      s.y.push_back(r.accuracy_mean);
    }
  }
  write_text(cfg.out / "sources.csv", csv.str());
  std::vector<LineSeries> lines;
  for (auto& [k, s] : series) lines.push_back(std::move(s));
  export_line_plot(lines, "number of source prompts M", "mean accuracy", cfg.out / "sources.svg",
                   "Accuracy against source count");
  return reports;
}

std::vector<RunReport> sweep_lr(const ExperimentConfig& cfg, const std::vector<double>& source_lrs,
                                const std::vector<double>& private_lrs, std::size_t jobs) {
  if (source_lrs.empty() || private_lrs.empty()) throw ConfigError("sweep-lr needs source and private rates");
  for (double lr : source_lrs) {
    if (!(lr >= 0.0)) throw ConfigError("learning rates must be non-negative");
  }
  for (double lr : private_lrs) {
    if (!(lr >= 0.0)) throw ConfigError("learning rates must be non-negative");
  }
  std::vector<std::string> methods;
  for (const std::string& method : cfg.methods) {
    const CompositionConfig c = config_from_name(method);
    if (!c.use_source || !c.use_private || c.init_source) {
      throw ConfigError("sweep-lr supports SLP and SLPN, not " + c.name);
    }
    methods.push_back(c.name);
  }
  std::vector<RunReport> reports;
  // method -> (row, col) -> accuracy, pooled over shot counts
  std::map<std::string, Tensor> grids;
  for (const std::string& m : methods) grids[m] = Tensor::zeros({source_lrs.size(), private_lrs.size()});
  for (std::size_t i = 0; i < source_lrs.size(); ++i) {
    for (std::size_t j = 0; j < private_lrs.size(); ++j) {
      ExperimentConfig c = cfg;
      c.overrides["lr_source"] = source_lrs[i];
      c.overrides["lr_private"] = private_lrs[j];
      c.out = cfg.out / ("lr_" + lr_label(source_lrs[i]) + "_" + lr_label(private_lrs[j]));
      reports.push_back(run_experiment(c, jobs));
      for (const std::string& m : methods) {
        std::vector<double> acc;
        for (const AggregateRow& r : reports.back().rows) {
          if (r.method == m) acc.push_back(r.accuracy_mean);
        }
        grids[m](i, j) = mean_of(acc);
      }
    }
  }
  for (const auto& [m, grid] : grids) {
    SimMatrix sm;
    for (double lr : source_lrs) sm.row_labels.push_back("source " + fmt("%g", lr));
    for (double lr : private_lrs) sm.col_labels.push_back("private " + fmt("%g", lr));
    sm.values = grid;
    export_matrix(sm, cfg.out / ("lr_grid_" + m + ".csv"), MatrixFormat::Csv);
    export_matrix(sm, cfg.out / ("lr_grid_" + m + ".svg"), MatrixFormat::Svg, m + " accuracy by learning rate");
  }
  return reports;
}

std::string inspect_cell(const std::filesystem::path& dir) {
  for (const char* name : {"metrics.json", "error.txt"}) {
    std::ifstream in(dir / name);
    if (in) {
      std::stringstream ss;
      ss << in.rdbuf();
      return ss.str();
    }
  }
  throw StoreError("no metrics.json or error.txt in " + dir.string());
}

}  // namespace crosspt
