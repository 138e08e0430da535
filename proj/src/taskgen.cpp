// Copyright 2026 The CrossPT Authors
// SPDX-License-Identifier: Apache-2.0

#include "crosspt/taskgen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

#include "crosspt/errors.hpp"

namespace crosspt {

namespace {

constexpr double kPi = 3.14159265358979323846;

using Vec = std::vector<double>;

double dot(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

void normalize(Vec& v) {
  const double n = std::sqrt(dot(v, v));
  for (double& x : v) x /= n;
}

// Random unit vector orthogonal to every vector in `basis` (assumed orthonormal).
Vec orthogonal_unit(const std::vector<Vec>& basis, std::size_t dim, Rng& rng) {
  Vec v(dim);
  for (double& x : v) x = rng.normal();
  for (const Vec& b : basis) {
    const double p = dot(v, b);
    for (std::size_t i = 0; i < dim; ++i) v[i] -= p * b[i];
  }
  normalize(v);
  return v;
}

// Generates one task's inputs and latent classes from its rule vector.
struct RawPool {
  std::vector<TokenSeq> content;
  std::vector<std::size_t> classes;
};

RawPool sample_pool(const FamilyOptions& opt, const VocabLayout& layout,
                    const std::vector<Vec>& token_features, const Vec& rule, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> weights(layout.content_count);
  for (double& w : weights) w = std::exp(rng.normal(0.0, opt.token_skew));
  std::discrete_distribution<std::size_t> pick(weights.begin(), weights.end());

  // Oversample, rank by rule score, then keep from every class the examples
  // farthest from its class boundaries.
  const std::size_t C = opt.num_classes;
  std::size_t n = static_cast<std::size_t>(std::ceil(static_cast<double>(opt.pool_size) / (1.0 - opt.boundary_gap)));
  n = std::max(n, opt.pool_size);
  n = (n + C - 1) / C * C;
  std::vector<TokenSeq> content;
  std::vector<double> scores(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t len = opt.min_len + rng.below(opt.max_len - opt.min_len + 1);
    TokenSeq seq(len);
    Vec feature(opt.feature_dim, 0.0);
    for (TokenId& t : seq) {
      const std::size_t c = pick(rng.engine());
      t = static_cast<TokenId>(layout.content_begin + c);
      for (std::size_t j = 0; j < opt.feature_dim; ++j) feature[j] += token_features[c][j];
    }
    for (double& x : feature) x /= static_cast<double>(len);
    scores[i] = dot(feature, rule);
    content.push_back(std::move(seq));
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  const std::size_t band = n / C;
  std::vector<std::size_t> cls(n, C);  // C marks a dropped candidate
  for (std::size_t c = 0; c < C; ++c) {
    const std::size_t quota = opt.pool_size / C + (c < opt.pool_size % C ? 1 : 0);
    const std::size_t lo = c * band;
    std::size_t begin = lo;
    if (c == C - 1) {
      begin = lo + band - quota;
    } else if (c > 0) {
      begin = lo + (band - quota) / 2;
    }
    for (std::size_t r = begin; r < begin + quota; ++r) cls[order[r]] = c;
  }
  RawPool pool;
  for (std::size_t i = 0; i < n; ++i) {
    if (cls[i] == C) continue;
    pool.content.push_back(std::move(content[i]));
    pool.classes.push_back(cls[i]);
  }
  return pool;
}

Task materialize(TaskSpec spec, const RawPool& raw, const VocabLayout& layout, std::size_t task_index,
                 bool flip) {
  Task task;
  task.spec = std::move(spec);
  const std::size_t c = task.spec.num_classes;
  for (std::size_t cls = 0; cls < c; ++cls) {
    task.label_tokens.push_back(
        label_token_for(layout, task.spec.label_scheme, task_index, task.spec.cluster_id, c, cls));
  }
  const std::size_t half = (raw.content.size() + 1) / 2;
  for (std::size_t i = 0; i < raw.content.size(); ++i) {
    LabeledExample ex;
    if (task.spec.prefix_enabled) ex.tokens.push_back(static_cast<TokenId>(layout.prefix_begin + task_index));
    ex.tokens.insert(ex.tokens.end(), raw.content[i].begin(), raw.content[i].end());
    ex.label_class = flip ? (c - 1 - raw.classes[i]) : raw.classes[i];
    ex.label_token = task.label_tokens[ex.label_class];
    ex.task_name = task.spec.name;
    (i < half ? task.train : task.test).push_back(std::move(ex));
  }
  return task;
}

VocabLayout plan_layout(std::size_t n_tasks, std::size_t num_classes, std::size_t vocab_size) {
  VocabLayout layout;
  layout.prefix_begin = 0;
  layout.prefix_count = n_tasks;
  layout.label_begin = n_tasks;
  layout.label_count = n_tasks * num_classes;
  const std::size_t reserved = layout.prefix_count + layout.label_count;
  constexpr std::size_t kMinContent = 8;
  if (reserved + kMinContent > vocab_size) {
    throw ConfigError("vocabulary of " + std::to_string(vocab_size) + " tokens cannot hold " +
                      std::to_string(layout.prefix_count) + " prefix, " + std::to_string(layout.label_count) +
                      " label and at least " + std::to_string(kMinContent) + " content tokens");
  }
  layout.content_begin = reserved;
  layout.content_count = vocab_size - reserved;
  return layout;
}

void validate_options(const FamilyOptions& opt) {
  if (opt.n_clusters == 0 || opt.tasks_per_cluster == 0) throw ConfigError("family needs at least one task");
  if (opt.num_classes < 2 || opt.num_classes > 3) throw ConfigError("tasks have 2 or 3 classes");
  if (!(opt.boundary_gap >= 0.0 && opt.boundary_gap < 0.9)) throw ConfigError("boundary_gap must lie in [0, 0.9)");
  if (!(opt.token_skew >= 0.0)) throw ConfigError("token_skew must be non-negative");
  if (opt.min_len == 0 || opt.min_len > opt.max_len || opt.max_len > 24) {
    throw ConfigError("sequence lengths must satisfy 1 <= min_len <= max_len <= 24");
  }
  if (opt.pool_size < 2 * opt.num_classes) throw ConfigError("pool too small");
  if (opt.feature_dim <= opt.n_clusters) throw ConfigError("feature_dim must exceed the number of clusters");
}

}  // namespace

std::string to_string(LabelScheme scheme) {
  switch (scheme) {
    case LabelScheme::Natural: return "natural";
    case LabelScheme::Synthetic: return "synthetic";
    case LabelScheme::Standardized: return "standardized";
  }
  return "natural";
}

LabelScheme label_scheme_from_string(std::string_view name) {
  if (name == "natural") return LabelScheme::Natural;
  if (name == "synthetic") return LabelScheme::Synthetic;
  if (name == "standardized") return LabelScheme::Standardized;
  throw ConfigError("unknown label scheme \"" + std::string(name) + "\" (natural, synthetic, standardized)");
}

std::vector<std::string> TaskFamily::names() const {
  std::vector<std::string> out;
  for (const Task& t : tasks) out.push_back(t.spec.name);
  return out;
}

TokenId label_token_for(const VocabLayout& layout, LabelScheme scheme, std::size_t task_index,
                        std::size_t cluster_id, std::size_t num_classes, std::size_t cls) {
  std::size_t offset = 0;
  switch (scheme) {
    case LabelScheme::Standardized: offset = cls; break;
    case LabelScheme::Natural: offset = cluster_id * num_classes + cls; break;
    case LabelScheme::Synthetic: offset = task_index * num_classes + cls; break;
  }
  if (offset >= layout.label_count) throw ConfigError("label token outside the reserved label range");
  return static_cast<TokenId>(layout.label_begin + offset);
}

namespace {

// Content-token features: the backbone's token embeddings under a fixed
// random projection to feature_dim.
std::vector<Vec> project_embeddings(const BackboneConfig& backbone, const VocabLayout& layout, std::size_t f,
                                    Rng& rng) {
  const FrozenBackbone model(backbone);
  const Tensor& emb = model.token_embedding();
  const std::size_t d = backbone.d_model;
  std::vector<Vec> proj(d, Vec(f));
  for (Vec& row : proj)
    for (double& x : row) x = rng.normal();
  std::vector<Vec> out(layout.content_count, Vec(f, 0.0));
  for (std::size_t c = 0; c < layout.content_count; ++c)
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < f; ++j) out[c][j] += emb(layout.content_begin + c, i) * proj[i][j];
  return out;
}

}  // namespace

TaskFamily make_family(const FamilyOptions& options, const BackboneConfig& backbone) {
  validate_options(options);
  const std::size_t n_tasks = options.n_clusters * options.tasks_per_cluster;
  TaskFamily family;
  family.options = options;
  family.vocab_size = backbone.vocab_size;
  family.layout = plan_layout(n_tasks, options.num_classes, backbone.vocab_size);
  const VocabLayout& layout = family.layout;

  Rng rng(options.seed);
  const std::vector<Vec> token_features = project_embeddings(backbone, layout, options.feature_dim, rng);

  std::vector<Vec> cluster_rules;
  for (std::size_t c = 0; c < options.n_clusters; ++c) {
    cluster_rules.push_back(orthogonal_unit(cluster_rules, options.feature_dim, rng));
  }

  const double max_angle = options.max_rotation_deg * kPi / 180.0;
  for (std::size_t c = 0; c < options.n_clusters; ++c) {
    for (std::size_t j = 0; j < options.tasks_per_cluster; ++j) {
      const std::size_t index = c * options.tasks_per_cluster + j;
      // Perturb the cluster rule inside the complement of all cluster rules so
      // that tasks of different clusters stay near-orthogonal.
      const double angle = rng.uniform() * max_angle;
      const Vec away = orthogonal_unit(cluster_rules, options.feature_dim, rng);
      Vec rule(options.feature_dim);
      for (std::size_t i = 0; i < rule.size(); ++i) {
        rule[i] = std::cos(angle) * cluster_rules[c][i] + std::sin(angle) * away[i];
      }
      TaskSpec spec;
      spec.name = "c" + std::to_string(c) + "_t" + std::to_string(j);
      spec.cluster_id = c;
      spec.num_classes = options.num_classes;
      spec.label_scheme = options.scheme;
      spec.prefix_enabled = options.prefixes;
      spec.pool_size = options.pool_size;
      spec.seed = mix_seed(options.seed, 1000 + index);
      const RawPool raw = sample_pool(options, layout, token_features, rule, spec.seed);
      family.tasks.push_back(materialize(std::move(spec), raw, layout, index, false));
    }
  }
  return family;
}

TaskFamily make_contradictory_pair(std::uint64_t seed, const BackboneConfig& backbone, bool prefixes,
                                   std::size_t pool_size) {
  FamilyOptions opt;
  opt.n_clusters = 1;
  opt.tasks_per_cluster = 2;
  opt.num_classes = 2;
  opt.scheme = LabelScheme::Natural;
  opt.prefixes = prefixes;
  opt.pool_size = pool_size;
  opt.seed = seed;
  validate_options(opt);

  TaskFamily family;
  family.options = opt;
  family.vocab_size = backbone.vocab_size;
  family.layout = plan_layout(2, 2, backbone.vocab_size);

  Rng rng(seed);
  const std::vector<Vec> token_features = project_embeddings(backbone, family.layout, opt.feature_dim, rng);
  const Vec rule = orthogonal_unit({}, opt.feature_dim, rng);
  const RawPool raw = sample_pool(opt, family.layout, token_features, rule, mix_seed(seed, 1000));

  for (std::size_t i = 0; i < 2; ++i) {
    TaskSpec spec;
    spec.name = i == 0 ? "contra_a" : "contra_b";
    spec.cluster_id = 0;
    spec.num_classes = 2;
    spec.label_scheme = LabelScheme::Natural;
    spec.prefix_enabled = prefixes;
    spec.pool_size = pool_size;
    spec.seed = mix_seed(seed, 1000);
    family.tasks.push_back(materialize(std::move(spec), raw, family.layout, i, i == 1));
  }
  return family;
}

void apply_label_scheme(TaskFamily& family, LabelScheme scheme) {
  for (std::size_t i = 0; i < family.tasks.size(); ++i) {
    Task& task = family.tasks[i];
    task.spec.label_scheme = scheme;
    const std::size_t c = task.spec.num_classes;
    for (std::size_t cls = 0; cls < c; ++cls) {
      task.label_tokens[cls] = label_token_for(family.layout, scheme, i, task.spec.cluster_id, c, cls);
    }
    for (auto* split : {&task.train, &task.test})
      for (LabeledExample& ex : *split) ex.label_token = task.label_tokens[ex.label_class];
  }
  family.options.scheme = scheme;
}

TaskFileFormat task_file_format_from_path(const std::filesystem::path& path) {
  const std::string ext = path.extension().string();
  if (ext == ".tsv") return TaskFileFormat::Tsv;
  if (ext == ".jsonl") return TaskFileFormat::Jsonl;
  throw ConfigError("cannot infer task file format from \"" + path.string() + "\" (.tsv or .jsonl)");
}

Task load_task_file(const std::filesystem::path& path, TaskFileFormat format, std::size_t vocab_size) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open task file " + path.string());
  struct Row {
    TokenSeq tokens;
    TokenId label;
  };
  std::vector<Row> rows;

  auto check_token = [&](long long v, std::size_t line) {
    if (v < 0 || static_cast<std::size_t>(v) >= vocab_size) {
      throw VocabError(path.string() + ", line " + std::to_string(line) + ": token " + std::to_string(v) +
                       " outside vocabulary of size " + std::to_string(vocab_size));
    }
    return static_cast<TokenId>(v);
  };
  auto parse_error = [&](std::size_t line, const std::string& what) {
    return FormatError(path.string() + ", line " + std::to_string(line) + ": " + what);
  };

  std::string text;
  std::size_t line_no = 0;
  while (std::getline(in, text)) {
    ++line_no;
    if (!text.empty() && text.back() == '\r') text.pop_back();
    if (text.find_first_not_of(" \t") == std::string::npos) continue;
    Row row;
    if (format == TaskFileFormat::Tsv) {
      const auto tab = text.find('\t');
      if (tab == std::string::npos || text.find('\t', tab + 1) != std::string::npos) {
        throw parse_error(line_no, "expected two tab-separated columns");
      }
      std::istringstream toks(text.substr(0, tab));
      std::string word;
      while (toks >> word) {
        std::size_t used = 0;
        long long v = 0;
        try {
          v = std::stoll(word, &used);
        } catch (const std::exception&) {
          throw parse_error(line_no, "bad token \"" + word + "\"");
        }
        if (used != word.size()) throw parse_error(line_no, "bad token \"" + word + "\"");
        row.tokens.push_back(check_token(v, line_no));
      }
      const std::string label = text.substr(tab + 1);
      std::size_t used = 0;
      long long v = 0;
      try {
        v = std::stoll(label, &used);
      } catch (const std::exception&) {
        throw parse_error(line_no, "bad label \"" + label + "\"");
      }
      if (used != label.size()) throw parse_error(line_no, "bad label \"" + label + "\"");
      row.label = check_token(v, line_no);
    } else {
      nlohmann::json obj;
      try {
        obj = nlohmann::json::parse(text);
      } catch (const nlohmann::json::parse_error& e) {
        throw parse_error(line_no, e.what());
      }
      if (!obj.is_object() || !obj.contains("tokens") || !obj.contains("label") || !obj["tokens"].is_array() ||
          !obj["label"].is_number_integer()) {
        throw parse_error(line_no, "expected {\"tokens\": [...], \"label\": int}");
      }
      for (const auto& t : obj["tokens"]) {
        if (!t.is_number_integer()) throw parse_error(line_no, "token ids must be integers");
        row.tokens.push_back(check_token(t.get<long long>(), line_no));
      }
      row.label = check_token(obj["label"].get<long long>(), line_no);
    }
    if (row.tokens.empty()) throw parse_error(line_no, "empty token sequence");
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw DataError(path.string() + ": no examples");

  std::set<TokenId> labels;
  for (const Row& r : rows) labels.insert(r.label);
  Task task;
  task.label_tokens.assign(labels.begin(), labels.end());
  task.spec.name = path.stem().string();
  task.spec.num_classes = task.label_tokens.size();
  task.spec.pool_size = rows.size();
  task.spec.prefix_enabled = false;

  const std::size_t half = (rows.size() + 1) / 2;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    LabeledExample ex;
    ex.tokens = std::move(rows[i].tokens);
    ex.label_token = rows[i].label;
    ex.label_class = static_cast<std::size_t>(
        std::lower_bound(task.label_tokens.begin(), task.label_tokens.end(), ex.label_token) -
        task.label_tokens.begin());
    ex.task_name = task.spec.name;
    (i < half ? task.train : task.test).push_back(std::move(ex));
  }
  return task;
}

void save_task_file(const Task& task, const std::filesystem::path& path, TaskFileFormat format) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write task file " + path.string());
  for (const auto* split : {&task.train, &task.test}) {
    for (const LabeledExample& ex : *split) {
      if (format == TaskFileFormat::Tsv) {
        for (std::size_t i = 0; i < ex.tokens.size(); ++i) out << (i ? " " : "") << ex.tokens[i];
        out << '\t' << ex.label_token << '\n';
      } else {
        nlohmann::json obj;
        obj["tokens"] = ex.tokens;
        obj["label"] = ex.label_token;
        out << obj.dump() << '\n';
      }
    }
  }
  if (!out) throw DataError("write failed for " + path.string());
}

void write_family_manifest(const TaskFamily& family, const std::filesystem::path& path) {
  nlohmann::json j;
  j["seed"] = family.options.seed;
  j["scheme"] = to_string(family.options.scheme);
  j["prefixes"] = family.options.prefixes;
  j["vocab_size"] = family.vocab_size;
  j["layout"] = {{"prefix_begin", family.layout.prefix_begin}, {"prefix_count", family.layout.prefix_count},
                 {"label_begin", family.layout.label_begin},   {"label_count", family.layout.label_count},
                 {"content_begin", family.layout.content_begin}, {"content_count", family.layout.content_count}};
  j["tasks"] = nlohmann::json::array();
  for (const Task& t : family.tasks) {
    j["tasks"].push_back({{"name", t.spec.name},
                          {"cluster", t.spec.cluster_id},
                          {"num_classes", t.spec.num_classes},
                          {"scheme", to_string(t.spec.label_scheme)},
                          {"prefix", t.spec.prefix_enabled},
                          {"pool_size", t.spec.pool_size},
                          {"seed", t.spec.seed},
                          {"label_tokens", t.label_tokens}});
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write manifest " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace crosspt
