#pragma once

#include "tsf/types.hpp"

#include <array>
#include <cstdint>
#include <deque>
#include <vector>

namespace tsf {

class Graph;

// Handle into a Graph's tape. Copying a Tensor copies the handle, not the
// values; tensors detached from any graph do not exist — constants are
// recorded as non-grad leaves.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Graph* graph, int id) : graph_(graph), id_(id) {}

  const Matrix& value() const;
  const Matrix& grad() const;
  bool requires_grad() const;
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }

  int id() const { return id_; }
  Graph* graph() const { return graph_; }
  bool valid() const { return graph_ != nullptr && id_ >= 0; }

 private:
  Graph* graph_ = nullptr;
  int id_ = -1;
};

// Append-only tape of operation records. Append order is the topological
// order, so the backward sweep is a single reverse pass that touches each
// node exactly once. One training step owns one graph exclusively; graphs
// are rebuilt per forward pass rather than reused.
class Graph {
 public:
  enum class Op : std::uint8_t {
    leaf,
    matmul,
    softmax,
    add,
    sub,
    mul,
    scale,
    abs,
    square,
    mean,
    concat,
    transpose,
    gather_rows,
    scatter_rows,
    mul_colvec,
    add_colvec,
    causal_mask,
    gelu,
    colmean_rows,
    cummean_rows,
    huber_loss,
    m_loss,
  };

  struct Node {
    Op op = Op::leaf;
    std::array<int, 3> in{-1, -1, -1};
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    // Op payloads. axis for softmax/concat; alpha for scale and the loss
    // sigma; indices for gather/scatter/causal row ids.
    int axis = 0;
    Scalar alpha = 0.0;
    IndexList indices;
  };

  Tensor leaf(Matrix value, bool requires_grad = false);
  Tensor constant(Scalar v);

  // Populates grad buffers of every requires_grad node reachable below
  // `loss`, which must be a 1x1 tensor on this graph.
  void backward(const Tensor& loss);

  void reset() { nodes_.clear(); }
  std::size_t size() const { return nodes_.size(); }

  const Node& node(int id) const { return nodes_.at(static_cast<std::size_t>(id)); }

 private:
  friend class Tensor;

  Node& mutable_node(int id) { return nodes_.at(static_cast<std::size_t>(id)); }
  Tensor emit(Node node);
  void backprop_node(int id);

  // Deque keeps node references stable while the tape grows, so a Matrix
  // reference obtained through Tensor::value() survives later emissions.
  std::deque<Node> nodes_;

  // Op constructors live in tensor.cpp and need emit().
  friend Tensor matmul(const Tensor&, const Tensor&);
  friend Tensor softmax(const Tensor&, int);
  friend Tensor add(const Tensor&, const Tensor&);
  friend Tensor sub(const Tensor&, const Tensor&);
  friend Tensor mul(const Tensor&, const Tensor&);
  friend Tensor scale(const Tensor&, Scalar);
  friend Tensor abs(const Tensor&);
  friend Tensor square(const Tensor&);
  friend Tensor mean(const Tensor&);
  friend Tensor concat(const Tensor&, const Tensor&, int);
  friend Tensor transpose(const Tensor&);
  friend Tensor gather_rows(const Tensor&, const IndexList&);
  friend Tensor scatter_rows(const Tensor&, const IndexList&, const Tensor&);
  friend Tensor mul_colvec(const Tensor&, const Tensor&);
  friend Tensor add_colvec(const Tensor&, const Tensor&);
  friend Tensor causal_mask(const Tensor&, const IndexList&);
  friend Tensor gelu(const Tensor&);
  friend Tensor colmean_rows(const Tensor&, Index);
  friend Tensor cummean_rows(const Tensor&);
  friend Tensor huber_loss(const Tensor&, const Tensor&, Scalar);
  friend Tensor m_loss(const Tensor&, const Tensor&, Scalar);
};

// C = A * B. Accumulation over the inner extent runs in ascending order for
// every coefficient, so any row subset of A yields bit-identical rows of C.
// The index-reuse equivalence checks depend on this.
Matrix matmul_value(const Matrix& a, const Matrix& b);

// Numerically stabilized softmax along axis (0 = down columns, 1 = along rows).
Matrix softmax_value(const Matrix& x, int axis);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor softmax(const Tensor& x, int axis);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);  // elementwise
Tensor scale(const Tensor& x, Scalar alpha);
Tensor abs(const Tensor& x);     // subgradient 0 at 0
Tensor square(const Tensor& x);
Tensor mean(const Tensor& x);    // mean over all elements, 1x1
Tensor concat(const Tensor& a, const Tensor& b, int axis);
Tensor transpose(const Tensor& x);

// out.row(r) = x.row(indices[r]); backward scatters gradient back (duplicate
// indices accumulate).
Tensor gather_rows(const Tensor& x, const IndexList& indices);

// Starts from `defaults` and overwrites rows `indices` with the rows of
// `active`. Indices must be distinct and in range; the empty index set is
// allowed and returns `defaults` unchanged. Backward gathers.
Tensor scatter_rows(const Tensor& active, const IndexList& indices,
                    const Tensor& defaults);

// Multiply / add a column vector across all columns of x.
Tensor mul_colvec(const Tensor& x, const Tensor& v);
Tensor add_colvec(const Tensor& x, const Tensor& b);

// Sets entries (r, j) with j > row_ids[r] to -inf; empty row_ids means
// row_ids[r] == r. Gradient through masked entries is zero.
Tensor causal_mask(const Tensor& x, const IndexList& row_ids = {});

Tensor gelu(const Tensor& x);

// m x v.cols() matrix whose every row is the column mean of v.
Tensor colmean_rows(const Tensor& v, Index m);

// Row i is the mean of v rows 0..i.
Tensor cummean_rows(const Tensor& v);

// Mean-reduced losses; see losses.hpp for the dispatch and the piecewise
// definitions.
Tensor huber_loss(const Tensor& pred, const Tensor& target, Scalar sigma);
Tensor m_loss(const Tensor& pred, const Tensor& target, Scalar sigma);

}  // namespace tsf
