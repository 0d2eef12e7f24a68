#include "tsf/tensor.hpp"

#include <cmath>

namespace tsf {

namespace {

constexpr Scalar kInvSqrt2 = 0.70710678118654752440;
constexpr Scalar kInvSqrt2Pi = 0.39894228040143267794;

Scalar sign0(Scalar x) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); }

void check_same_shape(const char* op, const Matrix& a, const Matrix& b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), op,
          ": shape mismatch (", shape_str(a), " vs ", shape_str(b), ")");
}

void check_same_graph(const char* op, const Tensor& a, const Tensor& b) {
  require(a.valid() && b.valid() && a.graph() == b.graph(), op,
          ": operands must live on the same graph");
}

void check_indices(const char* op, const IndexList& indices, Index bound,
                   bool distinct) {
  std::vector<bool> seen(distinct ? static_cast<std::size_t>(bound) : 0, false);
  for (Index idx : indices) {
    require(idx >= 0 && idx < bound, op, ": index ", idx, " out of bounds [0, ",
            bound, ")");
    if (distinct) {
      require(!seen[static_cast<std::size_t>(idx)], op, ": duplicate index ", idx);
      seen[static_cast<std::size_t>(idx)] = true;
    }
  }
}

}  // namespace

const Matrix& Tensor::value() const {
  require(valid(), "tensor handle is empty");
  return graph_->node(id_).value;
}

const Matrix& Tensor::grad() const {
  require(valid(), "tensor handle is empty");
  const Graph::Node& n = graph_->node(id_);
  require(n.requires_grad, "tensor does not require grad");
  require(n.grad.size() > 0, "backward has not been run on this graph");
  return n.grad;
}

bool Tensor::requires_grad() const {
  require(valid(), "tensor handle is empty");
  return graph_->node(id_).requires_grad;
}

Tensor Graph::leaf(Matrix value, bool requires_grad) {
  Node n;
  n.op = Op::leaf;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  return emit(std::move(n));
}

Tensor Graph::constant(Scalar v) {
  Matrix m(1, 1);
  m(0, 0) = v;
  return leaf(std::move(m), false);
}

Tensor Graph::emit(Node node) {
  nodes_.push_back(std::move(node));
  return Tensor(this, static_cast<int>(nodes_.size()) - 1);
}

Matrix matmul_value(const Matrix& a, const Matrix& b) {
  Matrix c = Matrix::Zero(a.rows(), b.cols());
  for (Index i = 0; i < a.rows(); ++i) {
    for (Index k = 0; k < a.cols(); ++k) {
      c.row(i) += a(i, k) * b.row(k);
    }
  }
  return c;
}

Matrix softmax_value(const Matrix& x, int axis) {
  require(axis == 0 || axis == 1, "softmax: axis ", axis, " out of range for rank 2");
  Matrix out(x.rows(), x.cols());
  if (axis == 1) {
    for (Index i = 0; i < x.rows(); ++i) {
      const Scalar m = x.row(i).maxCoeff();
      Eigen::Array<Scalar, 1, Eigen::Dynamic> e = (x.row(i).array() - m).exp();
      out.row(i) = (e / e.sum()).matrix();
    }
  } else {
    for (Index j = 0; j < x.cols(); ++j) {
      const Scalar m = x.col(j).maxCoeff();
      Eigen::Array<Scalar, Eigen::Dynamic, 1> e = (x.col(j).array() - m).exp();
      out.col(j) = (e / e.sum()).matrix();
    }
  }
  return out;
}

namespace {

// Shared builder for unary/binary nodes.
Graph::Node make_node(Graph::Op op, std::initializer_list<Tensor> ins) {
  Graph::Node n;
  n.op = op;
  int slot = 0;
  for (const Tensor& t : ins) {
    n.in[static_cast<std::size_t>(slot++)] = t.id();
    if (t.requires_grad()) n.requires_grad = true;
  }
  return n;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  check_same_graph("matmul", a, b);
  require(a.cols() == b.rows(), "matmul: inner extents differ (",
          shape_str(a.value()), " vs ", shape_str(b.value()), ")");
  Graph::Node n = make_node(Graph::Op::matmul, {a, b});
  n.value = matmul_value(a.value(), b.value());
  return a.graph()->emit(std::move(n));
}

Tensor softmax(const Tensor& x, int axis) {
  Graph::Node n = make_node(Graph::Op::softmax, {x});
  n.axis = axis;
  n.value = softmax_value(x.value(), axis);
  return x.graph()->emit(std::move(n));
}

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_graph("add", a, b);
  check_same_shape("add", a.value(), b.value());
  Graph::Node n = make_node(Graph::Op::add, {a, b});
  n.value = a.value() + b.value();
  return a.graph()->emit(std::move(n));
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_graph("sub", a, b);
  check_same_shape("sub", a.value(), b.value());
  Graph::Node n = make_node(Graph::Op::sub, {a, b});
  n.value = a.value() - b.value();
  return a.graph()->emit(std::move(n));
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_graph("mul", a, b);
  check_same_shape("mul", a.value(), b.value());
  Graph::Node n = make_node(Graph::Op::mul, {a, b});
  n.value = a.value().cwiseProduct(b.value());
  return a.graph()->emit(std::move(n));
}

Tensor scale(const Tensor& x, Scalar alpha) {
  Graph::Node n = make_node(Graph::Op::scale, {x});
  n.alpha = alpha;
  n.value = x.value() * alpha;
  return x.graph()->emit(std::move(n));
}

Tensor abs(const Tensor& x) {
  Graph::Node n = make_node(Graph::Op::abs, {x});
  n.value = x.value().cwiseAbs();
  return x.graph()->emit(std::move(n));
}

Tensor square(const Tensor& x) {
  Graph::Node n = make_node(Graph::Op::square, {x});
  n.value = x.value().cwiseProduct(x.value());
  return x.graph()->emit(std::move(n));
}

Tensor mean(const Tensor& x) {
  require(x.value().size() > 0, "mean: empty tensor");
  Graph::Node n = make_node(Graph::Op::mean, {x});
  n.value = Matrix::Constant(1, 1, x.value().mean());
  return x.graph()->emit(std::move(n));
}

Tensor concat(const Tensor& a, const Tensor& b, int axis) {
  check_same_graph("concat", a, b);
  require(axis == 0 || axis == 1, "concat: axis ", axis, " out of range for rank 2");
  Graph::Node n = make_node(Graph::Op::concat, {a, b});
  n.axis = axis;
  if (axis == 0) {
    require(a.cols() == b.cols(), "concat: column counts differ (",
            shape_str(a.value()), " vs ", shape_str(b.value()), ")");
    Matrix v(a.rows() + b.rows(), a.cols());
    v.topRows(a.rows()) = a.value();
    v.bottomRows(b.rows()) = b.value();
    n.value = std::move(v);
  } else {
    require(a.rows() == b.rows(), "concat: row counts differ (",
            shape_str(a.value()), " vs ", shape_str(b.value()), ")");
    Matrix v(a.rows(), a.cols() + b.cols());
    v.leftCols(a.cols()) = a.value();
    v.rightCols(b.cols()) = b.value();
    n.value = std::move(v);
  }
  return a.graph()->emit(std::move(n));
}

Tensor transpose(const Tensor& x) {
  Graph::Node n = make_node(Graph::Op::transpose, {x});
  n.value = x.value().transpose();
  return x.graph()->emit(std::move(n));
}

Tensor gather_rows(const Tensor& x, const IndexList& indices) {
  check_indices("gather_rows", indices, x.rows(), /*distinct=*/false);
  Graph::Node n = make_node(Graph::Op::gather_rows, {x});
  n.indices = indices;
  Matrix v(static_cast<Index>(indices.size()), x.cols());
  for (std::size_t r = 0; r < indices.size(); ++r) {
    v.row(static_cast<Index>(r)) = x.value().row(indices[r]);
  }
  n.value = std::move(v);
  return x.graph()->emit(std::move(n));
}

Tensor scatter_rows(const Tensor& active, const IndexList& indices,
                    const Tensor& defaults) {
  check_same_graph("scatter_rows", active, defaults);
  require(active.rows() == static_cast<Index>(indices.size()),
          "scatter_rows: ", indices.size(), " indices for ", active.rows(),
          " active rows");
  require(active.cols() == defaults.cols() || indices.empty(),
          "scatter_rows: column counts differ (", shape_str(active.value()),
          " vs ", shape_str(defaults.value()), ")");
  check_indices("scatter_rows", indices, defaults.rows(), /*distinct=*/true);
  Graph::Node n = make_node(Graph::Op::scatter_rows, {active, defaults});
  n.indices = indices;
  Matrix v = defaults.value();
  for (std::size_t r = 0; r < indices.size(); ++r) {
    v.row(indices[r]) = active.value().row(static_cast<Index>(r));
  }
  n.value = std::move(v);
  return active.graph()->emit(std::move(n));
}

Tensor mul_colvec(const Tensor& x, const Tensor& v) {
  check_same_graph("mul_colvec", x, v);
  require(v.cols() == 1 && v.rows() == x.rows(),
          "mul_colvec: vector must be ", x.rows(), "x1, got ", shape_str(v.value()));
  Graph::Node n = make_node(Graph::Op::mul_colvec, {x, v});
  n.value = (x.value().array().colwise() * v.value().col(0).array()).matrix();
  return x.graph()->emit(std::move(n));
}

Tensor add_colvec(const Tensor& x, const Tensor& b) {
  check_same_graph("add_colvec", x, b);
  require(b.cols() == 1 && b.rows() == x.rows(),
          "add_colvec: vector must be ", x.rows(), "x1, got ", shape_str(b.value()));
  Graph::Node n = make_node(Graph::Op::add_colvec, {x, b});
  n.value = (x.value().array().colwise() + b.value().col(0).array()).matrix();
  return x.graph()->emit(std::move(n));
}

Tensor causal_mask(const Tensor& x, const IndexList& row_ids) {
  require(row_ids.empty() || static_cast<Index>(row_ids.size()) == x.rows(),
          "causal_mask: need one row id per row");
  Graph::Node n = make_node(Graph::Op::causal_mask, {x});
  n.indices = row_ids;
  Matrix v = x.value();
  const Scalar neg_inf = -std::numeric_limits<Scalar>::infinity();
  for (Index r = 0; r < v.rows(); ++r) {
    const Index pos = row_ids.empty() ? r : row_ids[static_cast<std::size_t>(r)];
    for (Index j = pos + 1; j < v.cols(); ++j) v(r, j) = neg_inf;
  }
  n.value = std::move(v);
  return x.graph()->emit(std::move(n));
}

Tensor gelu(const Tensor& x) {
  Graph::Node n = make_node(Graph::Op::gelu, {x});
  n.value = x.value().unaryExpr([](Scalar t) {
    return 0.5 * t * (1.0 + std::erf(t * kInvSqrt2));
  });
  return x.graph()->emit(std::move(n));
}

Tensor colmean_rows(const Tensor& v, Index m) {
  require(m >= 1, "colmean_rows: need at least one output row");
  require(v.rows() >= 1, "colmean_rows: empty input");
  Graph::Node n = make_node(Graph::Op::colmean_rows, {v});
  Matrix out(m, v.cols());
  out.rowwise() = v.value().colwise().mean();
  n.value = std::move(out);
  return v.graph()->emit(std::move(n));
}

Tensor cummean_rows(const Tensor& v) {
  require(v.rows() >= 1, "cummean_rows: empty input");
  Graph::Node n = make_node(Graph::Op::cummean_rows, {v});
  Matrix out(v.rows(), v.cols());
  Eigen::Matrix<Scalar, 1, Eigen::Dynamic> acc =
      Eigen::Matrix<Scalar, 1, Eigen::Dynamic>::Zero(v.cols());
  for (Index i = 0; i < v.rows(); ++i) {
    acc += v.value().row(i);
    out.row(i) = acc / static_cast<Scalar>(i + 1);
  }
  n.value = std::move(out);
  return v.graph()->emit(std::move(n));
}

namespace {

// Shared plumbing for the mean-reduced piecewise losses; the caller emits.
Graph::Node make_loss_node(Graph::Op op, const Tensor& pred, const Tensor& target,
                           Scalar sigma, Scalar (*elem)(Scalar, Scalar)) {
  check_same_graph("loss", pred, target);
  check_same_shape("loss", pred.value(), target.value());
  require(sigma > 0, "loss: sigma must be positive, got ", sigma);
  Graph::Node n = make_node(op, {pred, target});
  n.alpha = sigma;
  Scalar total = 0;
  const Matrix& p = pred.value();
  const Matrix& t = target.value();
  for (Index i = 0; i < p.rows(); ++i) {
    for (Index j = 0; j < p.cols(); ++j) total += elem(p(i, j) - t(i, j), sigma);
  }
  n.value = Matrix::Constant(1, 1, total / static_cast<Scalar>(p.size()));
  return n;
}

Scalar huber_elem(Scalar e, Scalar sigma) {
  const Scalar a = std::abs(e);
  return a <= sigma ? 0.5 * e * e : sigma * a - 0.5 * sigma * sigma;
}

// 0.5 e^2 + |e| inside the sigma band, (sigma + 1)|e| - 0.5 sigma^2 outside;
// continuous at |e| = sigma.
Scalar m_loss_elem(Scalar e, Scalar sigma) {
  const Scalar a = std::abs(e);
  return a <= sigma ? 0.5 * e * e + a : (sigma + 1.0) * a - 0.5 * sigma * sigma;
}

Scalar huber_deriv(Scalar e, Scalar sigma) {
  return std::abs(e) <= sigma ? e : sigma * sign0(e);
}

Scalar m_loss_deriv(Scalar e, Scalar sigma) {
  return std::abs(e) <= sigma ? e + sign0(e) : (sigma + 1.0) * sign0(e);
}

}  // namespace

Tensor huber_loss(const Tensor& pred, const Tensor& target, Scalar sigma) {
  return pred.graph()->emit(
      make_loss_node(Graph::Op::huber_loss, pred, target, sigma, huber_elem));
}

Tensor m_loss(const Tensor& pred, const Tensor& target, Scalar sigma) {
  return pred.graph()->emit(
      make_loss_node(Graph::Op::m_loss, pred, target, sigma, m_loss_elem));
}

void Graph::backward(const Tensor& loss) {
  require(loss.valid() && loss.graph() == this, "backward: loss not on this graph");
  const int root = loss.id();
  require(nodes_[static_cast<std::size_t>(root)].value.size() == 1,
          "backward: loss must be scalar, got ",
          shape_str(nodes_[static_cast<std::size_t>(root)].value));
  for (Node& n : nodes_) {
    if (n.requires_grad) {
      n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
    }
  }
  Node& root_node = nodes_[static_cast<std::size_t>(root)];
  if (!root_node.requires_grad) return;  // constant loss: all grads stay zero
  root_node.grad(0, 0) = 1.0;
  for (int id = root; id >= 0; --id) backprop_node(id);
}

void Graph::backprop_node(int id) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (!n.requires_grad || n.op == Op::leaf) return;
  const Matrix& g = n.grad;

  auto in_node = [&](int slot) -> Node& {
    return nodes_[static_cast<std::size_t>(n.in[static_cast<std::size_t>(slot)])];
  };
  auto wants = [&](int slot) { return in_node(slot).requires_grad; };

  switch (n.op) {
    case Op::leaf:
      break;
    case Op::matmul: {
      const Matrix& a = in_node(0).value;
      const Matrix& b = in_node(1).value;
      if (wants(0)) in_node(0).grad += matmul_value(g, Matrix(b.transpose()));
      if (wants(1)) in_node(1).grad += matmul_value(Matrix(a.transpose()), g);
      break;
    }
    case Op::softmax: {
      if (!wants(0)) break;
      Matrix& gx = in_node(0).grad;
      const Matrix& s = n.value;
      if (n.axis == 1) {
        for (Index i = 0; i < s.rows(); ++i) {
          const Scalar dot = (g.row(i).array() * s.row(i).array()).sum();
          gx.row(i).array() += s.row(i).array() * (g.row(i).array() - dot);
        }
      } else {
        for (Index j = 0; j < s.cols(); ++j) {
          const Scalar dot = (g.col(j).array() * s.col(j).array()).sum();
          gx.col(j).array() += s.col(j).array() * (g.col(j).array() - dot);
        }
      }
      break;
    }
    case Op::add:
      if (wants(0)) in_node(0).grad += g;
      if (wants(1)) in_node(1).grad += g;
      break;
    case Op::sub:
      if (wants(0)) in_node(0).grad += g;
      if (wants(1)) in_node(1).grad -= g;
      break;
    case Op::mul:
      if (wants(0)) in_node(0).grad += g.cwiseProduct(in_node(1).value);
      if (wants(1)) in_node(1).grad += g.cwiseProduct(in_node(0).value);
      break;
    case Op::scale:
      if (wants(0)) in_node(0).grad += g * n.alpha;
      break;
    case Op::abs:
      if (wants(0)) {
        in_node(0).grad += g.cwiseProduct(
            in_node(0).value.unaryExpr([](Scalar t) { return sign0(t); }));
      }
      break;
    case Op::square:
      if (wants(0)) in_node(0).grad += 2.0 * g.cwiseProduct(in_node(0).value);
      break;
    case Op::mean:
      if (wants(0)) {
        in_node(0).grad.array() +=
            g(0, 0) / static_cast<Scalar>(in_node(0).value.size());
      }
      break;
    case Op::concat: {
      const Index ar = in_node(0).value.rows();
      const Index ac = in_node(0).value.cols();
      if (n.axis == 0) {
        if (wants(0)) in_node(0).grad += g.topRows(ar);
        if (wants(1)) in_node(1).grad += g.bottomRows(g.rows() - ar);
      } else {
        if (wants(0)) in_node(0).grad += g.leftCols(ac);
        if (wants(1)) in_node(1).grad += g.rightCols(g.cols() - ac);
      }
      break;
    }
    case Op::transpose:
      if (wants(0)) in_node(0).grad += g.transpose();
      break;
    case Op::gather_rows:
      if (wants(0)) {
        Matrix& gx = in_node(0).grad;
        for (std::size_t r = 0; r < n.indices.size(); ++r) {
          gx.row(n.indices[r]) += g.row(static_cast<Index>(r));
        }
      }
      break;
    case Op::scatter_rows: {
      if (wants(0)) {
        Matrix& ga = in_node(0).grad;
        for (std::size_t r = 0; r < n.indices.size(); ++r) {
          ga.row(static_cast<Index>(r)) += g.row(n.indices[r]);
        }
      }
      if (wants(1)) {
        Matrix gd = g;
        for (Index idx : n.indices) gd.row(idx).setZero();
        in_node(1).grad += gd;
      }
      break;
    }
    case Op::mul_colvec: {
      const Matrix& x = in_node(0).value;
      const Matrix& v = in_node(1).value;
      if (wants(0)) {
        in_node(0).grad.array() += g.array().colwise() * v.col(0).array();
      }
      if (wants(1)) {
        in_node(1).grad.col(0).array() += (g.array() * x.array()).rowwise().sum();
      }
      break;
    }
    case Op::add_colvec:
      if (wants(0)) in_node(0).grad += g;
      if (wants(1)) in_node(1).grad.col(0) += g.rowwise().sum();
      break;
    case Op::causal_mask:
      if (wants(0)) {
        Matrix& gx = in_node(0).grad;
        for (Index r = 0; r < g.rows(); ++r) {
          const Index pos =
              n.indices.empty() ? r : n.indices[static_cast<std::size_t>(r)];
          for (Index j = 0; j <= pos && j < g.cols(); ++j) gx(r, j) += g(r, j);
        }
      }
      break;
    case Op::gelu:
      if (wants(0)) {
        in_node(0).grad += g.cwiseProduct(in_node(0).value.unaryExpr([](Scalar t) {
          return 0.5 * (1.0 + std::erf(t * kInvSqrt2)) +
                 t * kInvSqrt2Pi * std::exp(-0.5 * t * t);
        }));
      }
      break;
    case Op::colmean_rows:
      if (wants(0)) {
        const Scalar inv = 1.0 / static_cast<Scalar>(in_node(0).value.rows());
        Eigen::Matrix<Scalar, 1, Eigen::Dynamic> col_total =
            g.colwise().sum() * inv;
        in_node(0).grad.rowwise() += col_total;
      }
      break;
    case Op::cummean_rows:
      if (wants(0)) {
        Matrix& gv = in_node(0).grad;
        Eigen::Matrix<Scalar, 1, Eigen::Dynamic> suffix =
            Eigen::Matrix<Scalar, 1, Eigen::Dynamic>::Zero(g.cols());
        for (Index i = g.rows() - 1; i >= 0; --i) {
          suffix += g.row(i) / static_cast<Scalar>(i + 1);
          gv.row(i) += suffix;
        }
      }
      break;
    case Op::huber_loss:
    case Op::m_loss: {
      const Matrix& p = in_node(0).value;
      const Matrix& t = in_node(1).value;
      const Scalar w = g(0, 0) / static_cast<Scalar>(p.size());
      auto deriv = (n.op == Op::huber_loss) ? huber_deriv : m_loss_deriv;
      for (Index i = 0; i < p.rows(); ++i) {
        for (Index j = 0; j < p.cols(); ++j) {
          const Scalar d = w * deriv(p(i, j) - t(i, j), n.alpha);
          if (wants(0)) in_node(0).grad(i, j) += d;
          if (wants(1)) in_node(1).grad(i, j) -= d;
        }
      }
      break;
    }
  }
}

}  // namespace tsf
