#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "seqgeo/tensor.hpp"

namespace seqgeo::ad {

class Tape;

// Handle to a node recorded on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  std::size_t id() const { return id_; }
  Tape* tape() const { return tape_; }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Per-node gradient accumulators used during the reverse sweep.
class GradBuffer {
 public:
  GradBuffer(const Tape& tape, std::vector<Matrix>& grads) : tape_(tape), grads_(grads) {}

  // True when the node depends on a differentiable leaf.
  bool wants(std::size_t id) const;
  // Zero-initialized on first access, shaped like the node's value.
  Matrix& at(std::size_t id);
  void accumulate(std::size_t id, const Matrix& delta) { at(id) += delta; }

 private:
  const Tape& tape_;
  std::vector<Matrix>& grads_;
};

// Records primitive operations in execution order. The reverse sweep walks
// node ids from high to low, so gradient accumulation order is fixed.
class Tape {
 public:
  using Backward = std::function<void(const Matrix& grad_out, GradBuffer& grads)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Differentiable input.
  Var leaf(Matrix value);
  // Input that never receives a gradient.
  Var constant(Matrix value);

  Var record(Matrix value, std::span<const Var> inputs, Backward backward);

  const Matrix& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  // Reverse-mode gradients of a 1x1 output. Nodes not reachable from the
  // output get zero matrices. Throws DomainError for a non-scalar output.
  std::vector<Matrix> grad(Var output, std::span<const Var> wrt) const;

 private:
  struct Node {
    Matrix value;
    bool requires_grad = false;
    Backward backward;
  };

  std::vector<Node> nodes_;
};

Var matmul(Var a, Var b);
Var transpose(Var a);
Var add(Var a, Var b);
Var sub(Var a, Var b);
// Broadcasts a 1xC row over every row of a.
Var add_row(Var a, Var row);
Var scale(Var a, double s);
Var concat_cols(std::span<const Var> parts);
// Stacks 1xC rows into an NxC matrix.
Var stack_rows(std::span<const Var> rows);
Var mean_rows(Var a);
// Mean over rows whose keep flag is set; at least one must be set.
Var masked_mean_rows(Var a, std::span<const std::uint8_t> keep);
Var softmax_rows(Var a);
// Softmax where columns with keep == 0 receive exactly zero weight (logit -inf).
Var masked_softmax_rows(Var a, std::span<const std::uint8_t> keep_cols);
// Rows with keep == 0 are replaced by exact zeros.
Var zero_rows(Var a, std::span<const std::uint8_t> keep);
// Row-wise unit normalization; a zero row throws DomainError("degenerate feature").
Var l2_normalize_rows(Var a);
// Euclidean distances between every row of a and every row of b.
Var pairwise_distances(Var a, Var b);
Var sum_all(Var a);
// Mean weighted soft-margin triplet loss over all 2*B*(B-1) in-batch triplets of
// a BxB distance matrix whose diagonal holds the matched pairs.
Var exhaustive_soft_margin_triplet(Var dist, double gamma);

// log(1 + e^x) without overflow.
double softplus(double x);
double sigmoid(double x);

}  // namespace seqgeo::ad
