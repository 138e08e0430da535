// Copyright 2026 The CrossPT Authors
// SPDX-License-Identifier: Apache-2.0

#include "crosspt/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <sstream>

#include "crosspt/errors.hpp"

namespace crosspt {

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace {

std::size_t product(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

}  // namespace

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad)
    : shape_(std::move(shape)), values_(std::move(values)), requires_grad_(requires_grad) {
  if (shape_.empty() || shape_.size() > 2) {
    throw DimensionError("tensor rank must be 1 or 2, got " + std::to_string(shape_.size()));
  }
  if (product(shape_) != values_.size()) {
    throw DimensionError("shape " + shape_string(shape_) + " does not match " +
                         std::to_string(values_.size()) + " values");
  }
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  const std::size_t n = product(shape);
  return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::filled(Shape shape, double value) {
  const std::size_t n = product(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
  return Tensor({rows, cols}, std::move(values));
}

Tensor Tensor::vector(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor({n}, std::move(values));
}

std::size_t Tensor::rows() const { return shape_.size() == 2 ? shape_[0] : 1; }

std::size_t Tensor::cols() const { return shape_.empty() ? 0 : shape_.back(); }

std::span<const double> Tensor::grad() const {
  if (!grad_) return {};
  return *grad_;
}

std::span<double> Tensor::grad() {
  if (!grad_) return {};
  return *grad_;
}

void Tensor::zero_grad() {
  if (grad_) {
    std::fill(grad_->begin(), grad_->end(), 0.0);
  } else {
    grad_.emplace(values_.size(), 0.0);
  }
}

void Tensor::accumulate_grad(std::span<const double> g) {
  if (g.size() != values_.size()) {
    throw DimensionError("gradient of size " + std::to_string(g.size()) + " for tensor " +
                         shape_string(shape_));
  }
  if (!grad_) grad_.emplace(values_.size(), 0.0);
  for (std::size_t i = 0; i < g.size(); ++i) (*grad_)[i] += g[i];
}

Tensor Tensor::row(std::size_t r) const {
  const std::size_t n = cols();
  std::vector<double> out(values_.begin() + static_cast<std::ptrdiff_t>(r * n),
                          values_.begin() + static_cast<std::ptrdiff_t>((r + 1) * n));
  return Tensor::vector(std::move(out));
}

bool bit_equal(const Tensor& a, const Tensor& b) {
  if (a.shape_ != b.shape_) return false;
  return std::memcmp(a.values_.data(), b.values_.data(), a.values_.size() * sizeof(double)) == 0;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  // splitmix64 finalizer over the combined word
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

Tensor gaussian(Shape shape, double stddev, Rng& rng) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (double& v : t.values()) v = rng.normal(0.0, stddev);
  return t;
}

// ---------------------------------------------------------------------------
// Tape

const Tensor& Var::value() const { return tape_->value(id_); }

bool Var::requires_grad() const { return tape_->nodes_[id_].needs_grad; }

Var Tape::constant(Tensor value) {
  Node node;
  node.value = std::move(value);
  node.value.set_requires_grad(false);
  node.value.clear_grad();
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::borrow(const Tensor& value) {
  Node node;
  node.borrowed = &value;
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::watch(Tensor& param) {
  Node node;
  node.value = Tensor(param.shape(), std::vector<double>(param.values().begin(), param.values().end()));
  node.needs_grad = param.requires_grad();
  node.sink = param.requires_grad() ? &param : nullptr;
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, std::span<const Var> parents, BackwardFn backward) {
#ifndef NDEBUG
  for (double v : value.values()) {
    if (!std::isfinite(v)) throw DomainError("non-finite value produced by a tensor op");
  }
#endif
  Node node;
  node.value = std::move(value);
  for (const Var& p : parents) {
    if (&p.tape() != this) throw ContractError("operands live on different tapes");
    node.needs_grad = node.needs_grad || nodes_[p.id()].needs_grad;
  }
  if (node.needs_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

std::span<double> Tape::grad_buffer(std::size_t id) {
  Node& node = nodes_[id];
  if (node.grad.empty()) node.grad.assign(value(id).size(), 0.0);
  return node.grad;
}

void Tape::backward(const Var& loss) {
  if (&loss.tape() != this) throw ContractError("loss is not on this tape");
  if (value(loss.id()).size() != 1) {
    throw ContractError("backward requires a scalar loss, got shape " +
                        shape_string(value(loss.id()).shape()));
  }
  for (Node& n : nodes_) n.grad.clear();
  if (!nodes_[loss.id()].needs_grad) return;
  grad_buffer(loss.id())[0] = 1.0;
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (node.grad.empty() || !node.needs_grad) continue;
    if (node.backward) node.backward(*this, node.grad);
    if (node.sink) node.sink->accumulate_grad(node.grad);
  }
}

std::span<const double> Tape::grad(const Var& v) const {
  return nodes_[v.id()].grad;
}

void Tape::clear() { nodes_.clear(); }

// ---------------------------------------------------------------------------
// Operations

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shapes " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()) + " differ");
  }
}

// c[m x n] += a[m x k] * b[k x n]
void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    const double* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// da[m x k] += dc[m x n] * b[k x n]^T
void gemm_nt(const double* dc, const double* b, double* da, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* drow = dc + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double* brow = b + p * n;
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) acc += drow[j] * brow[j];
      da[i * k + p] += acc;
    }
  }
}

// db[k x n] += a[m x k]^T * dc[m x n]
void gemm_tn(const double* a, const double* dc, double* db, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    const double* drow = dc + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      double* dbrow = db + p * n;
      for (std::size_t j = 0; j < n; ++j) dbrow[j] += av * drow[j];
    }
  }
}


constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)

void softmax_row(const double* z, double* w, std::size_t n, double tau) {
  double mx = z[0];
  for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, z[j]);
  double total = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    w[j] = std::exp((z[j] - mx) / tau);
    total += w[j];
  }
  for (std::size_t j = 0; j < n; ++j) w[j] /= total;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows()) {
    throw DimensionError("matmul: cannot multiply " + shape_string(a.shape()) + " by " +
                         shape_string(b.shape()));
  }
  Tensor c = Tensor::zeros({a.rows(), b.cols()});
  gemm_nn(a.data(), b.data(), c.data(), a.rows(), a.cols(), b.cols());
  return c;
}

Var matmul(const Var& a, const Var& b) {
  const std::size_t m = a.value().rows(), k = a.value().cols(), n = b.value().cols();
  Tensor c = matmul(a.value(), b.value());
  const std::size_t ia = a.id(), ib = b.id();
  const Var parents[] = {a, b};
  return a.tape().record(std::move(c), parents,
                         [=](Tape& t, std::span<const double> dc) {
                           if (t.needs_grad(ia)) {
                             gemm_nt(dc.data(), t.value(ib).data(), t.grad_buffer(ia).data(), m, k, n);
                           }
                           if (t.needs_grad(ib)) {
                             gemm_tn(t.value(ia).data(), dc.data(), t.grad_buffer(ib).data(), m, k, n);
                           }
                         });
}

Var add(const Var& a, const Var& b) {
  require_same_shape(a.value(), b.value(), "add");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  const std::size_t ia = a.id(), ib = b.id();
  const Var parents[] = {a, b};
  return a.tape().record(std::move(out), parents, [=](Tape& t, std::span<const double> d) {
    for (std::size_t id : {ia, ib}) {
      if (!t.needs_grad(id)) continue;
      auto g = t.grad_buffer(id);
      for (std::size_t i = 0; i < d.size(); ++i) g[i] += d[i];
    }
  });
}

Var sub(const Var& a, const Var& b) { return add(a, scale(b, -1.0)); }

Var mul(const Var& a, const Var& b) {
  require_same_shape(a.value(), b.value(), "mul");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  const std::size_t ia = a.id(), ib = b.id();
  const Var parents[] = {a, b};
  return a.tape().record(std::move(out), parents, [=](Tape& t, std::span<const double> d) {
    if (t.needs_grad(ia)) {
      auto g = t.grad_buffer(ia);
      const Tensor& bv = t.value(ib);
      for (std::size_t i = 0; i < d.size(); ++i) g[i] += d[i] * bv[i];
    }
    if (t.needs_grad(ib)) {
      auto g = t.grad_buffer(ib);
      const Tensor& av = t.value(ia);
      for (std::size_t i = 0; i < d.size(); ++i) g[i] += d[i] * av[i];
    }
  });
}

Var scale(const Var& a, double s) {
  Tensor out = a.value();
  for (double& v : out.values()) v *= s;
  const std::size_t ia = a.id();
  const Var parents[] = {a};
  return a.tape().record(std::move(out), parents, [=](Tape& t, std::span<const double> d) {
    auto g = t.grad_buffer(ia);
    for (std::size_t i = 0; i < d.size(); ++i) g[i] += s * d[i];
  });
}

Var add_bias(const Var& a, const Var& bias) {
  const std::size_t m = a.value().rows(), n = a.value().cols();
  if (bias.value().size() != n) {
    throw DimensionError("add_bias: bias " + shape_string(bias.shape()) + " does not fit " +
                         shape_string(a.shape()));
  }
  Tensor out = a.value();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] += bias.value()[j];
  const std::size_t ia = a.id(), ib = bias.id();
  const Var parents[] = {a, bias};
  return a.tape().record(std::move(out), parents, [=](Tape& t, std::span<const double> d) {
    if (t.needs_grad(ia)) {
      auto g = t.grad_buffer(ia);
      for (std::size_t i = 0; i < d.size(); ++i) g[i] += d[i];
    }
    if (t.needs_grad(ib)) {
      auto g = t.grad_buffer(ib);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) g[j] += d[i * n + j];
    }
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ContractError("concat_rows: no inputs");
  const std::size_t n = parts[0].value().cols();
  std::size_t m = 0;
  std::vector<double> values;
  std::vector<std::size_t> ids;
  for (const Var& p : parts) {
    if (p.value().cols() != n) {
      throw DimensionError("concat_rows: " + shape_string(parts[0].shape()) + " and " +
                           shape_string(p.shape()) + " have different widths");
    }
    m += p.value().rows();
    values.insert(values.end(), p.value().values().begin(), p.value().values().end());
    ids.push_back(p.id());
  }
  Tape& tape = parts[0].tape();
  return tape.record(Tensor({m, n}, std::move(values)), parts,
                     [ids](Tape& t, std::span<const double> d) {
                       std::size_t offset = 0;
                       for (std::size_t id : ids) {
                         const std::size_t sz = t.value(id).size();
                         if (t.needs_grad(id)) {
                           auto g = t.grad_buffer(id);
                           for (std::size_t i = 0; i < sz; ++i) g[i] += d[offset + i];
                         }
                         offset += sz;
                       }
                     });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ContractError("concat_cols: no inputs");
  const std::size_t m = parts[0].value().rows();
  std::size_t n = 0;
  std::vector<std::size_t> ids, widths;
  for (const Var& p : parts) {
    if (p.value().rows() != m) {
      throw DimensionError("concat_cols: " + shape_string(parts[0].shape()) + " and " +
                           shape_string(p.shape()) + " have different heights");
    }
    n += p.value().cols();
    ids.push_back(p.id());
    widths.push_back(p.value().cols());
  }
  Tensor out = Tensor::zeros({m, n});
  std::size_t c0 = 0;
  for (const Var& p : parts) {
    const std::size_t w = p.value().cols();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < w; ++j) out[i * n + c0 + j] = p.value()[i * w + j];
    c0 += w;
  }
  Tape& tape = parts[0].tape();
  return tape.record(std::move(out), parts, [=](Tape& t, std::span<const double> d) {
    std::size_t col = 0;
    for (std::size_t q = 0; q < ids.size(); ++q) {
      const std::size_t w = widths[q];
      if (t.needs_grad(ids[q])) {
        auto g = t.grad_buffer(ids[q]);
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < w; ++j) g[i * w + j] += d[i * n + col + j];
      }
      col += w;
    }
  });
}

Var slice_cols(const Var& a, std::size_t begin, std::size_t end) {
  const std::size_t m = a.value().rows(), n = a.value().cols();
  if (begin > end || end > n) {
    throw DimensionError("slice_cols: [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") out of range for " + shape_string(a.shape()));
  }
  const std::size_t w = end - begin;
  Tensor out = Tensor::zeros({m, w});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < w; ++j) out[i * w + j] = a.value()[i * n + begin + j];
  const std::size_t ia = a.id();
  const Var parents[] = {a};
  return a.tape().record(std::move(out), parents, [=](Tape& t, std::span<const double> d) {
    auto g = t.grad_buffer(ia);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < w; ++j) g[i * n + begin + j] += d[i * w + j];
  });
}

Var slice_rows(const Var& a, std::size_t begin, std::size_t end) {
  const std::size_t m = a.value().rows(), n = a.value().cols();
  if (begin > end || end > m) {
    throw DimensionError("slice_rows: [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") out of range for " + shape_string(a.shape()));
  }
  const auto src = a.value().values().subspan(begin * n, (end - begin) * n);
  Tensor out({end - begin, n}, std::vector<double>(src.begin(), src.end()));
  const std::size_t ia = a.id();
  const Var parents[] = {a};
  return a.tape().record(std::move(out), parents, [=](Tape& t, std::span<const double> d) {
    auto g = t.grad_buffer(ia);
    for (std::size_t i = 0; i < d.size(); ++i) g[begin * n + i] += d[i];
  });
}

Var transpose(const Var& a) {
  const std::size_t m = a.value().rows(), n = a.value().cols();
  Tensor out = Tensor::zeros({n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = a.value()[i * n + j];
  const std::size_t ia = a.id();
  const Var parents[] = {a};
  return a.tape().record(std::move(out), parents, [=](Tape& t, std::span<const double> d) {
    auto g = t.grad_buffer(ia);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) g[i * n + j] += d[j * m + i];
  });
}

Var reshape(const Var& a, Shape shape) {
  Tensor out(std::move(shape), std::vector<double>(a.value().values().begin(), a.value().values().end()));
  const std::size_t ia = a.id();
  const Var parents[] = {a};
  return a.tape().record(std::move(out), parents, [=](Tape& t, std::span<const double> d) {
    auto g = t.grad_buffer(ia);
    for (std::size_t i = 0; i < d.size(); ++i) g[i] += d[i];
  });
}

Var gelu(const Var& a) {
  Tensor out = a.value();
  for (double& x : out.values()) {
    const double u = kGeluC * (x + 0.044715 * x * x * x);
    x = 0.5 * x * (1.0 + std::tanh(u));
  }
  const std::size_t ia = a.id();
  const Var parents[] = {a};
  return a.tape().record(std::move(out), parents, [=](Tape& t, std::span<const double> d) {
    auto g = t.grad_buffer(ia);
    const Tensor& in = t.value(ia);
    for (std::size_t i = 0; i < d.size(); ++i) {
      const double x = in[i];
      const double th = std::tanh(kGeluC * (x + 0.044715 * x * x * x));
      const double du = kGeluC * (1.0 + 3.0 * 0.044715 * x * x);
      g[i] += d[i] * (0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * du);
    }
  });
}

Var softmax_rows(const Var& a, double tau) {
  if (!(tau > 0.0)) throw DomainError("softmax temperature must be positive");
  const std::size_t m = a.value().rows(), n = a.value().cols();
  if (n == 0) throw DomainError("softmax of an empty input");
  Tensor out(a.shape(), std::vector<double>(a.value().size()));
  for (std::size_t i = 0; i < m; ++i) softmax_row(a.value().data() + i * n, out.data() + i * n, n, tau);
  const std::size_t ia = a.id();
  const std::size_t self = a.tape().size();
  const Var parents[] = {a};
  return a.tape().record(std::move(out), parents, [=](Tape& t, std::span<const double> d) {
    auto g = t.grad_buffer(ia);
    const Tensor& w = t.value(self);
    for (std::size_t i = 0; i < m; ++i) {
      const double* wr = w.data() + i * n;
      const double* dr = d.data() + i * n;
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += wr[j] * dr[j];
      for (std::size_t j = 0; j < n; ++j) g[i * n + j] += wr[j] * (dr[j] - dot) / tau;
    }
  });
}

Var softmax_with_temperature(const Var& z, double tau) {
  if (z.value().size() == 0) throw DomainError("softmax of an empty input");
  if (z.value().rank() != 1) {
    throw DimensionError("softmax_with_temperature expects a vector, got " + shape_string(z.shape()));
  }
  return reshape(softmax_rows(reshape(z, {1, z.value().size()}), tau), {z.value().size()});
}

Tensor softmax_with_temperature(const Tensor& z, double tau) {
  if (!(tau > 0.0)) throw DomainError("softmax temperature must be positive");
  if (z.size() == 0) throw DomainError("softmax of an empty input");
  Tensor out(z.shape(), std::vector<double>(z.size()));
  softmax_row(z.data(), out.data(), z.size(), tau);
  return out;
}

Var layer_norm_rows(const Var& x, const Var& gamma, const Var& beta, double eps) {
  const std::size_t m = x.value().rows(), n = x.value().cols();
  if (gamma.value().size() != n || beta.value().size() != n) {
    throw DimensionError("layer_norm: affine parameters do not match " + shape_string(x.shape()));
  }
  Tensor out(x.shape(), std::vector<double>(x.value().size()));
  std::vector<double> xhat(m * n), inv_std(m);
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = x.value().data() + i * n;
    double mean = 0.0;
    for (std::size_t j = 0; j < n; ++j) mean += row[j];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (row[j] - mean) * (row[j] - mean);
    var /= static_cast<double>(n);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) {
      xhat[i * n + j] = (row[j] - mean) * inv_std[i];
      out[i * n + j] = gamma.value()[j] * xhat[i * n + j] + beta.value()[j];
    }
  }
  const std::size_t ix = x.id(), ig = gamma.id(), ib = beta.id();
  const Var parents[] = {x, gamma, beta};
  return x.tape().record(std::move(out), parents,
                         [=, xhat = std::move(xhat), inv_std = std::move(inv_std)](
                             Tape& t, std::span<const double> d) {
                           const Tensor& gv = t.value(ig);
                           if (t.needs_grad(ig)) {
                             auto g = t.grad_buffer(ig);
                             for (std::size_t i = 0; i < m * n; ++i) g[i % n] += d[i] * xhat[i];
                           }
                           if (t.needs_grad(ib)) {
                             auto g = t.grad_buffer(ib);
                             for (std::size_t i = 0; i < m * n; ++i) g[i % n] += d[i];
                           }
                           if (!t.needs_grad(ix)) return;
                           auto g = t.grad_buffer(ix);
                           const double inv_n = 1.0 / static_cast<double>(n);
                           for (std::size_t i = 0; i < m; ++i) {
                             double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
                             for (std::size_t j = 0; j < n; ++j) {
                               const double dxh = d[i * n + j] * gv[j];
                               mean_dxhat += dxh;
                               mean_dxhat_xhat += dxh * xhat[i * n + j];
                             }
                             mean_dxhat *= inv_n;
                             mean_dxhat_xhat *= inv_n;
                             for (std::size_t j = 0; j < n; ++j) {
                               const double dxh = d[i * n + j] * gv[j];
                               g[i * n + j] +=
                                   inv_std[i] * (dxh - mean_dxhat - xhat[i * n + j] * mean_dxhat_xhat);
                             }
                           }
                         });
}

Var mean_rows(const Var& a) {
  const std::size_t m = a.value().rows(), n = a.value().cols();
  if (m == 0) throw DimensionError("mean_rows of an empty matrix");
  Tensor out = Tensor::zeros({1, n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j] += a.value()[i * n + j];
  for (double& v : out.values()) v /= static_cast<double>(m);
  const std::size_t ia = a.id();
  const Var parents[] = {a};
  return a.tape().record(std::move(out), parents, [=](Tape& t, std::span<const double> d) {
    auto g = t.grad_buffer(ia);
    const double inv = 1.0 / static_cast<double>(m);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) g[i * n + j] += d[j] * inv;
  });
}

Var sum(const Var& a) {
  double total = 0.0;
  for (double v : a.value().values()) total += v;
  const std::size_t ia = a.id();
  const Var parents[] = {a};
  return a.tape().record(Tensor::vector({total}), parents, [=](Tape& t, std::span<const double> d) {
    auto g = t.grad_buffer(ia);
    for (double& v : g) v += d[0];
  });
}

Var weighted_sum(std::span<const Var> items, const Var& weights) {
  if (items.empty()) throw ContractError("weighted_sum: no items");
  if (weights.value().size() != items.size()) {
    throw DimensionError("weighted_sum: " + std::to_string(items.size()) + " items but weights " +
                         shape_string(weights.shape()));
  }
  const Shape& shape = items[0].shape();
  for (const Var& it : items) {
    if (it.shape() != shape) {
      throw DimensionError("weighted_sum: item shapes " + shape_string(shape) + " and " +
                           shape_string(it.shape()) + " differ");
    }
  }
  Tensor out = Tensor::zeros(shape);
  for (std::size_t s = 0; s < items.size(); ++s) {
    const double w = weights.value()[s];
    const Tensor& v = items[s].value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += w * v[i];
  }
  std::vector<std::size_t> ids;
  std::vector<Var> parents(items.begin(), items.end());
  for (const Var& it : items) ids.push_back(it.id());
  parents.push_back(weights);
  const std::size_t iw = weights.id();
  return weights.tape().record(std::move(out), parents, [=](Tape& t, std::span<const double> d) {
    const Tensor& wv = t.value(iw);
    for (std::size_t s = 0; s < ids.size(); ++s) {
      if (!t.needs_grad(ids[s])) continue;
      auto g = t.grad_buffer(ids[s]);
      for (std::size_t i = 0; i < d.size(); ++i) g[i] += wv[s] * d[i];
    }
    if (t.needs_grad(iw)) {
      auto g = t.grad_buffer(iw);
      for (std::size_t s = 0; s < ids.size(); ++s) {
        const Tensor& v = t.value(ids[s]);
        double dot = 0.0;
        for (std::size_t i = 0; i < d.size(); ++i) dot += v[i] * d[i];
        g[s] += dot;
      }
    }
  });
}

Var cross_entropy(const Var& logits, std::span<const std::size_t> targets) {
  const std::size_t b = logits.value().rows(), v = logits.value().cols();
  if (targets.size() != b) {
    throw DimensionError("cross_entropy: " + std::to_string(targets.size()) + " targets for logits " +
                         shape_string(logits.shape()));
  }
  std::vector<double> probs(b * v);
  double loss = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    if (targets[i] >= v) {
      throw DomainError("cross_entropy: target " + std::to_string(targets[i]) +
                        " out of range for " + std::to_string(v) + " classes");
    }
    softmax_row(logits.value().data() + i * v, probs.data() + i * v, v, 1.0);
    const double* z = logits.value().data() + i * v;
    double mx = z[0];
    for (std::size_t j = 1; j < v; ++j) mx = std::max(mx, z[j]);
    double lse = 0.0;
    for (std::size_t j = 0; j < v; ++j) lse += std::exp(z[j] - mx);
    loss += (std::log(lse) + mx) - z[targets[i]];
  }
  loss /= static_cast<double>(b);
  const std::vector<std::size_t> tgt(targets.begin(), targets.end());
  const std::size_t il = logits.id();
  const Var parents[] = {logits};
  return logits.tape().record(Tensor::vector({loss}), parents,
                              [=, probs = std::move(probs)](Tape& t, std::span<const double> d) {
                                auto g = t.grad_buffer(il);
                                const double s = d[0] / static_cast<double>(b);
                                for (std::size_t i = 0; i < b; ++i) {
                                  for (std::size_t j = 0; j < v; ++j) g[i * v + j] += s * probs[i * v + j];
                                  g[i * v + tgt[i]] -= s;
                                }
                              });
}

double cosine(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) {
    throw DimensionError("cosine: lengths " + std::to_string(u.size()) + " and " +
                         std::to_string(v.size()) + " differ");
  }
  double dot = 0.0, nu = 0.0, nv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += u[i] * v[i];
    nu += u[i] * u[i];
    nv += v[i] * v[i];
  }
  if (nu == 0.0 || nv == 0.0) throw DegenerateInputError("cosine of a zero-norm vector");
  const double c = dot / std::sqrt(nu * nv);
  return std::clamp(c, -1.0, 1.0);
}

double cosine(const Tensor& u, const Tensor& v) { return cosine(u.values(), v.values()); }

double finite_diff_check(const ScalarFn& f, const Tensor& x, double eps) {
  Tensor param(x.shape(), std::vector<double>(x.values().begin(), x.values().end()), true);
  {
    Tape tape;
    Var loss = f(tape, tape.watch(param));
    tape.backward(loss);
  }
  if (!param.has_grad()) param.zero_grad();

  auto eval = [&](const Tensor& at) {
    Tape tape;
    Tensor copy = at;
    copy.set_requires_grad(false);
    return f(tape, tape.constant(copy)).value()[0];
  };

  double worst = 0.0;
  Tensor probe(x.shape(), std::vector<double>(x.values().begin(), x.values().end()));
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + eps;
    const double up = eval(probe);
    probe[i] = orig - eps;
    const double down = eval(probe);
    probe[i] = orig;
    const double numeric = (up - down) / (2.0 * eps);
    const double analytic = param.grad()[i];
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
    worst = std::max(worst, std::abs(analytic - numeric) / denom);
  }
  return worst;
}

}  // namespace crosspt
