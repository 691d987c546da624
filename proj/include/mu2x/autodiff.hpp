#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace mu2x::ad {

using Matrix = Eigen::MatrixXd;
using BoolMatrix = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

class Tape;

// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;
  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  Tape* tape() const { return tape_; }
  int id() const { return id_; }

 private:
  friend class Tape;
  Var(Tape* t, int id) : tape_(t), id_(id) {}
  Tape* tape_ = nullptr;
  int id_ = -1;
};

// Reverse-mode tape. Nodes are appended in evaluation order, so a reverse
// scan is a reverse topological order. One backward pass per tape.
class Tape {
 public:
  // Receives the gradient of the node's output; pushes contributions to inputs via accumulate().
  using Backward = std::function<void(Tape&, const Matrix& grad_out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var variable(Matrix value);  // leaf that receives a gradient
  Var constant(Matrix value);  // leaf without gradient

  void backward(Var loss);
  const Matrix& grad(Var v) const;
  bool owns(Var v) const { return v.tape_ == this && v.id_ >= 0 && v.id_ < static_cast<int>(nodes_.size()); }
  bool requires_grad(Var v) const { return nodes_[static_cast<std::size_t>(v.id_)].requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  // For op implementations.
  Var record(Matrix value, std::initializer_list<Var> inputs, Backward backward);
  Var record(Matrix value, const std::vector<Var>& inputs, Backward backward);
  void accumulate(Var v, const Matrix& contribution);
  const Matrix& value(Var v) const { return nodes_[static_cast<std::size_t>(v.id_)].value; }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    Backward backward;
    bool requires_grad = false;
  };
  void check(Var v) const;
  std::vector<Node> nodes_;
  bool used_ = false;
};

inline const Matrix& Var::value() const { return tape_->value(*this); }

Var matmul(Var a, Var b);
// Same-shape sum, or b as a 1 x cols row bias broadcast over a's rows.
Var add(Var a, Var b);
Var mul(Var a, Var b);  // elementwise
Var scalar_mul(Var a, double s);
Var concat_rows(const std::vector<Var>& parts);
Var concat_cols(const std::vector<Var>& parts);
Var leaky_relu(Var a, double slope = 0.2);
Var elu(Var a, double alpha = 1.0);
Var exp(Var a);
Var log(Var a);
Var row_softmax(Var a);
Var row_log_softmax(Var a);
// Zero probability outside mask, softmax within it. Throws EmptyMask for a row without entries.
Var masked_row_softmax(Var a, const BoolMatrix& mask);
Var reduce_sum(Var a);
Var gather_rows(Var a, std::span<const std::uint32_t> rows);
// Picks a(i, cols[i]) into an n x 1 column.
Var pick(Var a, std::span<const std::uint32_t> cols);

// Sparse attention building blocks. Edges are (src[e] -> dst[e]).
// Softmax of an E x 1 score column within groups sharing the same dst.
Var segment_softmax(Var scores, std::span<const std::uint32_t> dst, std::size_t num_segments);
// out[dst[e]] += weights[e] * values[src[e]]; out is num_dst x values.cols().
Var edge_aggregate(Var weights, Var values, std::span<const std::uint32_t> src,
                   std::span<const std::uint32_t> dst, std::size_t num_dst);

// d output / d input. Runs backward on output's tape if it has not run yet.
Matrix grad_wrt_input(Var output, Var input);

}  // namespace mu2x::ad
