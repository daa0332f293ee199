#pragma once

// Reverse-mode differentiation over small row-major double tensors.
//
// A Tensor is a shared handle to a Node holding values and, for tracked
// tensors, a gradient accumulator. Primitives run eagerly; while a Tape is
// active on the calling thread (see TapeScope) and at least one input is
// tracked, the primitive appends its backward rule to the tape. Tape::backward
// replays those rules in reverse order, each exactly once.
//
// Rank is 1 or 2. Row-wise primitives treat a rank-1 tensor as one row.

#include "attntul/sparse.hpp"

#include <cstddef>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace attntul::ad {

using Shape = std::vector<std::size_t>;

std::string to_string(const Shape& shape);

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until the node is tracked
  bool requires_grad = false;

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  }
};

class Tensor {
public:
  Tensor();
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);
  static Tensor vector(std::vector<double> values, bool requires_grad = false);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values,
                       bool requires_grad = false);

  const Shape& shape() const noexcept { return node_->shape; }
  std::size_t rank() const noexcept { return node_->shape.size(); }
  std::size_t size() const noexcept { return node_->value.size(); }
  std::size_t rows() const noexcept { return rank() == 2 ? node_->shape[0] : 1; }
  std::size_t cols() const noexcept { return node_->shape.empty() ? 1 : node_->shape.back(); }

  std::span<const double> values() const noexcept { return node_->value; }
  std::span<double> mutable_values() noexcept { return node_->value; }
  std::span<const double> grad() const noexcept { return node_->grad; }
  double item() const;
  double at(std::size_t i) const { return node_->value.at(i); }
  double at(std::size_t r, std::size_t c) const { return node_->value.at(r * cols() + c); }

  bool requires_grad() const noexcept { return node_->requires_grad; }
  void set_requires_grad(bool on);
  void zero_grad();

  const std::shared_ptr<Node>& node() const noexcept { return node_; }
  bool same_node(const Tensor& other) const noexcept { return node_ == other.node_; }

private:
  std::shared_ptr<Node> node_;
};

class Tape {
public:
  using Backward = std::function<void()>;

  void record(std::vector<std::shared_ptr<Node>> inputs, std::shared_ptr<Node> output,
              Backward backward);

  // Seeds d(root)/d(root) = 1 and replays every recorded rule once, newest
  // first. Returns the number of rules replayed. root must be a scalar.
  std::size_t backward(const Tensor& root);

  std::size_t size() const noexcept { return entries_.size(); }
  void clear() { entries_.clear(); }

  // True if `t` was an input to any recorded primitive.
  bool used(const Tensor& t) const;

  static Tape* active() noexcept;

private:
  friend class TapeScope;

  struct Entry {
    std::vector<std::shared_ptr<Node>> inputs;
    std::shared_ptr<Node> output;
    Backward backward;
  };
  std::vector<Entry> entries_;
};

// Makes `tape` the active tape of the current thread for the scope's
// lifetime. Scopes nest; the previous tape is restored on exit.
class TapeScope {
public:
  explicit TapeScope(Tape& tape) noexcept;
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

private:
  Tape* previous_;
};

// Constant sparse operand with its transpose cached for backward passes.
struct FixedSparse {
  CsrMatrix matrix;
  CsrMatrix transposed;

  explicit FixedSparse(CsrMatrix m) : matrix(std::move(m)), transposed(matrix.transpose()) {}
};

// ---- primitives ------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor sparse_matmul(const std::shared_ptr<const FixedSparse>& s, const Tensor& b);

Tensor add(const Tensor& a, const Tensor& b);
Tensor add_row_vector(const Tensor& a, const Tensor& bias);  // bias broadcast over rows
Tensor mul(const Tensor& a, const Tensor& b);                // element-wise
Tensor scale(const Tensor& a, double s);

enum class Activation { relu, tanh };
Tensor activation(const Tensor& x, Activation kind);
inline Tensor relu(const Tensor& x) { return activation(x, Activation::relu); }
inline Tensor tanh(const Tensor& x) { return activation(x, Activation::tanh); }

// Normalises along the last axis.
Tensor softmax(const Tensor& x);
Tensor sparsemax(const Tensor& x);

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);

// Inverted dropout: survivors scaled by 1 / (1 - rate). Identity when not
// training or rate == 0.
Tensor dropout(const Tensor& x, double rate, bool training, std::mt19937_64& rng);

// Column-wise maximum of an m x d tensor; gradient flows to the first
// maximal row of each column.
Tensor max_pool_rows(const Tensor& z);

// Mean over the batch of -log softmax(logits)[target].
Tensor cross_entropy(const Tensor& logits, std::span<const std::size_t> targets);

Tensor concat_cols(std::span<const Tensor> parts);
Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end);
Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end);
Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows);
Tensor stack_rows(std::span<const Tensor> rows);

Tensor sum_squares(const Tensor& x);
Tensor sum_scalars(std::span<const Tensor> scalars);

// s[i][j] = <q_i, k_j> / (|q_i| |k_j| + eps)
Tensor cosine_scores(const Tensor& queries, const Tensor& keys, double eps = 1e-12);

// ---- raw kernels shared with tests and the reference paths ----------------

// Euclidean projection of z onto the probability simplex by sort and
// threshold. Throws std::domain_error on non-finite input.
void sparsemax_project(std::span<const double> z, std::span<double> p);
// Jacobian-transpose product of the projection at output p.
void sparsemax_backward(std::span<const double> p, std::span<const double> g,
                        std::span<double> grad_in);

}  // namespace attntul::ad
