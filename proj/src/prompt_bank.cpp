// Copyright 2026 The CrossPT Authors
// SPDX-License-Identifier: Apache-2.0

#include "crosspt/prompt_bank.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>

#include "crosspt/binary_io.hpp"
#include "crosspt/errors.hpp"

namespace crosspt {

namespace {

constexpr char kPromptMagic[] = "CPTP1";
constexpr char kPromptExtension[] = ".cptp";

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

bool valid_name(std::string_view name) {
  if (name.empty() || name == "." || name == "..") return false;
  return std::all_of(name.begin(), name.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.' || c == ':';
  });
}

}  // namespace

PromptEncoder PromptEncoder::identity(std::size_t d) {
  PromptEncoder enc;
  enc.W = Tensor::zeros({d, d});
  for (std::size_t i = 0; i < d; ++i) enc.W(i, i) = 1.0;
  enc.b = Tensor::zeros({d});
  enc.set_trainable(true);
  return enc;
}

void PromptEncoder::set_trainable(bool flag) {
  trainable = flag;
  W.set_requires_grad(flag);
  b.set_requires_grad(flag);
}

Tensor encode(const PromptEncoder& enc, const Tensor& E) {
  const std::size_t d = enc.dim();
  if (E.rank() != 2 || E.cols() != d || enc.W.rows() != d || enc.W.cols() != d) {
    throw DimensionError("encode: prompt " + shape_string(E.shape()) + " does not fit encoder " +
                         shape_string(enc.W.shape()));
  }
  Tape tape;
  return encode(tape.borrow(enc.W), tape.borrow(enc.b), tape.borrow(E)).value();
}

Var encode(const Var& W, const Var& b, const Var& E) {
  if (E.value().rank() != 2 || E.value().cols() != W.value().cols() || W.value().rows() != W.value().cols()) {
    throw DimensionError("encode: prompt " + shape_string(E.shape()) + " does not fit encoder " +
                         shape_string(W.shape()));
  }
  return add_bias(matmul(E, transpose(W)), b);
}

std::string to_string(PromptRole role) {
  switch (role) {
    case PromptRole::Source: return "source";
    case PromptRole::Private: return "private";
    case PromptRole::Target: return "target";
  }
  return "source";
}

void write_prompt(const SoftPrompt& prompt, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw StoreError("cannot open " + path.string() + " for writing");
  os.write(kPromptMagic, 5);
  io::write_u32(os, static_cast<std::uint32_t>(prompt.name.size()));
  os.write(prompt.name.data(), static_cast<std::streamsize>(prompt.name.size()));
  os.put(static_cast<char>(prompt.role));
  io::write_u32(os, static_cast<std::uint32_t>(prompt.length()));
  io::write_u32(os, static_cast<std::uint32_t>(prompt.dim()));
  for (double v : prompt.E.values()) io::write_f64(os, v);
  if (!os) throw StoreError("write failed for " + path.string());
}

SoftPrompt read_prompt(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw StoreError("cannot open " + path.string());
  io::expect_magic(is, kPromptMagic);
  SoftPrompt p;
  const std::uint32_t len = io::read_u32(is);
  if (len > 4096) throw FormatError("implausible prompt name length in " + path.string());
  p.name.resize(len);
  if (!is.read(p.name.data(), len)) throw FormatError("truncated checkpoint " + path.string());
  const int role = is.get();
  if (role < 0 || role > 2) throw FormatError("bad role byte in " + path.string());
  p.role = static_cast<PromptRole>(role);
  const std::uint32_t k = io::read_u32(is);
  const std::uint32_t d = io::read_u32(is);
  std::vector<double> values(static_cast<std::size_t>(k) * d);
  for (double& v : values) v = io::read_f64(is);
  if (is.peek() != std::char_traits<char>::eof()) throw FormatError("trailing bytes in " + path.string());
  p.E = Tensor({k, d}, std::move(values));
  return p;
}

PromptStore::PromptStore(std::filesystem::path directory) : dir_(std::move(directory)) {
  std::error_code ec;
  std::filesystem::create_directories(dir_, ec);
  if (ec || !std::filesystem::is_directory(dir_)) {
    throw StoreError("cannot use prompt store directory " + dir_.string());
  }
}

std::filesystem::path PromptStore::path_for(std::string_view name) const {
  if (!valid_name(name)) throw StoreError("invalid prompt name \"" + std::string(name) + "\"");
  return dir_ / (std::string(name) + kPromptExtension);
}

bool PromptStore::contains(std::string_view name) const {
  return valid_name(name) && std::filesystem::exists(path_for(name));
}

std::vector<std::string> PromptStore::names() const {
  std::vector<std::string> out;
  for (const auto& entry : std::filesystem::directory_iterator(dir_)) {
    if (entry.path().extension() == kPromptExtension) out.push_back(entry.path().stem().string());
  }
  std::sort(out.begin(), out.end());
  return out;
}

void PromptStore::save(const SoftPrompt& prompt) const {
  const auto target = path_for(prompt.name);
  const auto tmp = target.string() + ".tmp";
  write_prompt(prompt, tmp);
  std::error_code ec;
  std::filesystem::rename(tmp, target, ec);
  if (ec) throw StoreError("cannot move checkpoint into place: " + ec.message());
}

SoftPrompt PromptStore::load(std::string_view name) const {
  const auto path = path_for(name);
  if (!std::filesystem::exists(path)) {
    throw StoreError("no prompt named \"" + std::string(name) + "\" in " + dir_.string());
  }
  return read_prompt(path);
}

std::uint64_t prompt_seed(std::uint64_t base, std::string_view name) { return mix_seed(base, fnv1a(name)); }

SoftPrompt init_prompt(const std::string& name, std::size_t k, std::size_t d, std::uint64_t seed,
                       InitScheme scheme, PromptRole role, const PromptStore* store) {
  SoftPrompt p;
  p.name = name;
  p.role = role;
  if (scheme == InitScheme::Gaussian) {
    Rng rng(seed);
    p.E = gaussian({k, d}, kPromptInitStddev, rng);
    return p;
  }
  if (store == nullptr) throw StoreError("no prompt store given to initialize \"" + name + "\" from");
  SoftPrompt stored = store->load(name);
  if (stored.length() != k || stored.dim() != d) {
    throw DimensionError("stored prompt \"" + name + "\" is " + shape_string(stored.E.shape()) + ", expected " +
                         shape_string({k, d}));
  }
  p.E = std::move(stored.E);
  return p;
}

std::size_t argmax(std::span<const double> values) {
  return static_cast<std::size_t>(std::max_element(values.begin(), values.end()) - values.begin());
}

Evaluation evaluate_prompt(const FrozenBackbone& model, const Tensor& encoded_prompt,
                           std::span<const LabeledExample> examples) {
  if (examples.empty()) throw DataError("nothing to evaluate");
  const std::size_t v = model.config().vocab_size;
  Evaluation out;
  std::size_t correct = 0;
  for (const LabeledExample& ex : examples) {
    Tape tape;
    const Var logits = model.forward(tape.borrow(encoded_prompt), ex.tokens);
    const std::size_t label[] = {ex.label_token};
    out.loss += cross_entropy(logits, label).value()[0];
    if (argmax(logits.value().values().first(v)) == ex.label_token) ++correct;
  }
  out.loss /= static_cast<double>(examples.size());
  out.accuracy = static_cast<double>(correct) / static_cast<double>(examples.size());
  return out;
}

SourceTrainingResult train_source_prompt(const std::string& name, std::span<const LabeledExample> train,
                                         const FrozenBackbone& model, PromptEncoder& enc, const Hyperparams& hp,
                                         std::size_t prompt_length) {
  if (train.empty()) throw DataError("task \"" + name + "\" has no training examples");
  hp.validate();
  const std::size_t d = model.config().d_model;
  if (enc.dim() != d) throw DimensionError("encoder width does not match the backbone");

  SourceTrainingResult result;
  result.prompt = init_prompt(name, prompt_length, d, prompt_seed(hp.seed, name), InitScheme::Gaussian);
  Tensor& E = result.prompt.E;
  E.set_requires_grad(true);
  enc.set_trainable(enc.trainable);

  std::vector<ParamGroup> groups;
  groups.emplace_back(GroupLabel::Source, std::vector<Tensor*>{&E}, hp.lr_source);
  if (enc.trainable) groups.emplace_back(GroupLabel::Encoder, std::vector<Tensor*>{&enc.W, &enc.b}, hp.lr_encoder);

  result.initial_loss = evaluate_prompt(model, encode(enc, E), train).loss;

  Rng rng(mix_seed(prompt_seed(hp.seed, name), 0x5157));
  const std::size_t v = model.config().vocab_size;
  for (std::size_t epoch = 0; epoch < hp.epochs; ++epoch) {
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (const auto& batch : shuffled_batches(train.size(), hp.batch_size, rng)) {
      std::vector<TokenSeq> inputs;
      std::vector<std::size_t> labels;
      for (std::size_t i : batch) {
        inputs.push_back(train[i].tokens);
        labels.push_back(train[i].label_token);
      }
      E.clear_grad();
      enc.W.clear_grad();
      enc.b.clear_grad();
      Tape tape;
      const Var P = encode(tape.watch(enc.W), tape.watch(enc.b), tape.watch(E));
      const Var logits = model.batch_logits(P, inputs);
      const Var loss = cross_entropy(logits, labels);
      tape.backward(loss);
      for (ParamGroup& g : groups) adam_step(g, hp);

      loss_sum += loss.value()[0] * static_cast<double>(batch.size());
      for (std::size_t r = 0; r < batch.size(); ++r) {
        if (argmax(logits.value().values().subspan(r * v, v)) == labels[r]) ++correct;
      }
    }
    result.epoch_loss.push_back(loss_sum / static_cast<double>(train.size()));
    result.epoch_accuracy.push_back(static_cast<double>(correct) / static_cast<double>(train.size()));
  }
  E.clear_grad();
  E.set_requires_grad(false);
  enc.W.clear_grad();
  enc.b.clear_grad();
  result.final_loss = evaluate_prompt(model, encode(enc, E), train).loss;
  return result;
}

}  // namespace crosspt
