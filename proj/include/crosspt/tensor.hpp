// Copyright 2026 The CrossPT Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace crosspt {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);

/// Dense row-major array of doubles with an optional gradient buffer.
///
/// Rank 1 and rank 2 are the only ranks the library uses. A rank-1 tensor of
/// length n behaves as a 1 x n row wherever a matrix is expected.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor filled(Shape shape, double value);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values);
  static Tensor vector(std::vector<double> values);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return values_.size(); }
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> values() const { return values_; }
  std::span<double> values() { return values_; }
  const double* data() const { return values_.data(); }
  double* data() { return values_.data(); }

  double operator[](std::size_t i) const { return values_[i]; }
  double& operator[](std::size_t i) { return values_[i]; }
  double operator()(std::size_t r, std::size_t c) const { return values_[r * cols() + c]; }
  double& operator()(std::size_t r, std::size_t c) { return values_[r * cols() + c]; }

  bool requires_grad() const { return requires_grad_; }
  void set_requires_grad(bool flag) { requires_grad_ = flag; }

  bool has_grad() const { return grad_.has_value(); }
  std::span<const double> grad() const;
  std::span<double> grad();
  /// Allocates (if needed) and zero-fills the gradient buffer.
  void zero_grad();
  /// Drops the gradient buffer entirely.
  void clear_grad() { grad_.reset(); }
  void accumulate_grad(std::span<const double> g);

  /// Row `r` of a rank-2 tensor as a rank-1 copy.
  Tensor row(std::size_t r) const;

  /// True when shapes and every value bit pattern agree.
  friend bool bit_equal(const Tensor& a, const Tensor& b);

 private:
  Shape shape_;
  std::vector<double> values_;
  bool requires_grad_ = false;
  std::optional<std::vector<double>> grad_;
};

/// Explicit 64-bit seeded generator; the library never touches global RNG state.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double normal(double mean = 0.0, double stddev = 1.0) {
    return std::normal_distribution<double>(mean, stddev)(engine_);
  }
  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
  /// Uniform integer in [0, n).
  std::size_t below(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
  }
  std::uint64_t next() { return engine_(); }
  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

/// Derives an independent stream seed from a base seed and a salt.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt);

Tensor gaussian(Shape shape, double stddev, Rng& rng);

class Tape;

/// Handle to a value recorded on a Tape.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;
  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Records operations in creation order so that reverse traversal is a valid
/// topological order. One tape per forward/backward pass.
class Tape {
 public:
  /// Propagates `out_grad` (the gradient of the node's output) to its parents.
  using BackwardFn = std::function<void(Tape&, std::span<const double> out_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// A value that never receives gradient.
  Var constant(Tensor value);
  /// Like constant(), but references `value` without copying; `value` must
  /// outlive the tape.
  Var borrow(const Tensor& value);
  /// A leaf bound to `param`. After backward(), gradients are accumulated into
  /// param.grad() when param.requires_grad() is set; otherwise nothing is written.
  Var watch(Tensor& param);

  /// Records a derived value. `parents` must already be on this tape.
  Var record(Tensor value, std::span<const Var> parents, BackwardFn backward);

  /// Reverse-mode sweep from a scalar. Throws ContractError for non-scalars.
  void backward(const Var& loss);

  /// Gradient of a node after backward(); empty when the node needs no gradient.
  std::span<const double> grad(const Var& v) const;

  std::size_t size() const { return nodes_.size(); }
  void clear();

  // Used by backward rules.
  const Tensor& value(std::size_t id) const {
    const Node& n = nodes_[id];
    return n.borrowed ? *n.borrowed : n.value;
  }
  bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }
  std::span<double> grad_buffer(std::size_t id);

 private:
  struct Node {
    Tensor value;
    const Tensor* borrowed = nullptr;
    bool needs_grad = false;
    std::vector<double> grad;
    BackwardFn backward;
    Tensor* sink = nullptr;
  };

  std::vector<Node> nodes_;
  friend class Var;
};

// Differentiable operations. All operands must live on the same tape.

Var matmul(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
/// Elementwise product.
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
/// Adds a length-n bias to every row of an m x n matrix.
Var add_bias(const Var& a, const Var& bias);
Var concat_rows(std::span<const Var> parts);
Var concat_cols(std::span<const Var> parts);
Var slice_cols(const Var& a, std::size_t begin, std::size_t end);
Var slice_rows(const Var& a, std::size_t begin, std::size_t end);
Var transpose(const Var& a);
Var reshape(const Var& a, Shape shape);
/// tanh-approximated GELU; smooth, so finite differences stay well behaved.
Var gelu(const Var& a);
/// Row-wise softmax of z / tau.
Var softmax_rows(const Var& a, double tau = 1.0);
/// w_i = exp(z_i/tau) / sum_j exp(z_j/tau) over a rank-1 input.
Var softmax_with_temperature(const Var& z, double tau);
Var layer_norm_rows(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);
/// Column-wise mean over the rows, as a 1 x n matrix.
Var mean_rows(const Var& a);
Var sum(const Var& a);
/// sum_i weights[i] * items[i]; all items share one shape, weights is rank-1.
Var weighted_sum(std::span<const Var> items, const Var& weights);
/// Mean over the batch of -log softmax(logits)[target].
Var cross_entropy(const Var& logits, std::span<const std::size_t> targets);

// Plain (non-recording) helpers.

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor softmax_with_temperature(const Tensor& z, double tau);
double cosine(std::span<const double> u, std::span<const double> v);
double cosine(const Tensor& u, const Tensor& v);

using ScalarFn = std::function<Var(Tape&, const Var&)>;

/// Largest relative disagreement between reverse-mode and central-difference
/// gradients of `f` at `x`: max_i |a - n| / max(|a|, |n|, 1e-8).
double finite_diff_check(const ScalarFn& f, const Tensor& x, double eps);

}  // namespace crosspt
