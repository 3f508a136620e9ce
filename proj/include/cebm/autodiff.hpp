#pragma once

// Reverse-mode differentiation over dense tensors.
//
// A Tape records every primitive applied to its Vars. `Tape::backward` walks
// the record once in reverse order and returns gradients for every leaf; the
// tape is then consumed and must be reset before reuse. Nodes created with
// `constant` (and everything computed only from constants) are skipped during
// the backward sweep.

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "cebm/tensor.hpp"

namespace cebm::ad {

class Tape;

// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  Tape& tape() const { return *tape_; }
  std::size_t id() const noexcept { return id_; }
  bool requires_grad() const;

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Gradients {
 public:
  // Gradient of the differentiated output with respect to `leaf`.
  const Tensor& operator[](const Var& leaf) const;
  bool contains(const Var& leaf) const { return by_node_.contains(leaf.id()); }

 private:
  friend class Tape;
  std::unordered_map<std::size_t, Tensor> by_node_;
};

// Signature of a node's local backward rule: accumulate into `input_grads[i]`
// (null when input i does not need a gradient).
using BackwardFn = std::function<void(const Tensor& out_grad, const Tensor& out_value,
                                      std::span<const Tensor* const> input_values,
                                      std::span<Tensor* const> input_grads)>;

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Leaf nodes reject non-finite data.
  Var constant(Tensor value);
  Var leaf(Tensor value);

  // Records an operation node. Used by the primitive ops below.
  Var record(Tensor value, std::vector<Var> inputs, BackwardFn backward);

  // Differentiates a scalar output. Throws if `output` is not a single
  // element, belongs to another tape, or the tape was already consumed.
  Gradients backward(const Var& output);

  bool consumed() const noexcept { return consumed_; }
  void reset();
  std::size_t size() const noexcept { return nodes_.size(); }

  const Tensor& value_of(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

 private:
  struct Node {
    Tensor value;
    bool requires_grad = false;
    bool is_leaf = false;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
  bool consumed_ = false;
};

// --- primitive operations ---------------------------------------------------

// [N, I] x [I, O] -> [N, O]
Var matmul(const Var& a, const Var& b);
// Cross-correlation of x [N, C, H, W] with w [O, C, KH, KW].
Var conv2d(const Var& x, const Var& w, std::size_t stride, std::size_t padding);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
// Adds b [F] along axis 1 of x ([N, F] or [N, F, H, W]).
Var add_bias(const Var& x, const Var& b);
Var scale(const Var& x, double factor);
Var negate(const Var& x);
Var mul(const Var& a, const Var& b);
Var square(const Var& x);
Var log(const Var& x);
Var sigmoid(const Var& x);
// x * sigmoid(x)
Var swish(const Var& x);
Var relu(const Var& x);
Var leaky_relu(const Var& x, double slope = 0.01);
Var softplus(const Var& x);
Var reshape(const Var& x, Shape shape);
// Sum of all elements -> scalar.
Var sum(const Var& x);
Var mean(const Var& x);
// Sum over the trailing axes of x [N, ...] -> [N].
Var sum_rows(const Var& x);
// Log-sum-exp over the last axis: [N, L] -> [N], [L] -> scalar.
Var logsumexp(const Var& x);
// Columns [begin, end) of x [N, F].
Var slice_cols(const Var& x, std::size_t begin, std::size_t end);
// Row r of x [L, K] -> [K].
Var row(const Var& x, std::size_t r);
// Stacks equally-sized [N] vectors into [N, L].
Var stack_cols(std::span<const Var> columns);
// Sum over k of the diagonal Gaussian log normalizer
//   -l1^2 / (4 l2) - 1/2 log(-2 l2)
// for l1, l2 of shape [N, K], giving [N]. Throws DomainError unless l2 < 0.
Var gaussian_log_normalizer(const Var& l1, const Var& l2);

// --- generic dispatch -------------------------------------------------------

enum class OpKind {
  matmul,
  conv2d,
  add,
  scale,
  swish,
  relu,
  leaky_relu,
  softplus,
  negate,
  reshape,
  sum,
  logsumexp,
};

const char* to_string(OpKind kind);

struct OpAttrs {
  std::size_t stride = 1;
  std::size_t padding = 0;
  double factor = 1.0;
  double slope = 0.01;
  Shape shape;
};

Var forward_op(OpKind kind, std::span<const Var> inputs, const OpAttrs& attrs = {});

// --- gradient verification --------------------------------------------------

using ScalarFn = std::function<Var(Tape&, const Var&)>;

// Gradients smaller than this are compared on an absolute scale.
inline constexpr double kFiniteDiffFloor = 1e-4;

// Max over coordinates of |a - n| / max(|a|, |n|, kFiniteDiffFloor), where a
// is the reverse-mode gradient and n the central difference with step h.
double finite_diff_check(const ScalarFn& f, const Tensor& at, double h);

}  // namespace cebm::ad
