#pragma once

#include "tsf/rng.hpp"
#include "tsf/tensor.hpp"

#include <functional>
#include <vector>

namespace tsf::test {

// Builds a scalar loss from leaf tensors; the harness below owns leaf
// creation so it can re-evaluate at shifted inputs.
using LossBuilder = std::function<Tensor(Graph&, const std::vector<Tensor>&)>;

inline double eval_at(const LossBuilder& builder, const std::vector<Matrix>& inputs) {
  Graph g;
  std::vector<Tensor> leaves;
  leaves.reserve(inputs.size());
  for (const Matrix& m : inputs) leaves.push_back(g.leaf(m, false));
  return builder(g, leaves).value()(0, 0);
}

// Max relative error between tape gradients and central finite differences
// (h = 1e-4), with the error floored at magnitude 1 to keep near-zero
// gradients meaningful. The numeric side never touches backward().
inline double max_grad_rel_error(const LossBuilder& builder,
                                 const std::vector<Matrix>& inputs,
                                 double step = 1e-4) {
  Graph g;
  std::vector<Tensor> leaves;
  leaves.reserve(inputs.size());
  for (const Matrix& m : inputs) leaves.push_back(g.leaf(m, true));
  Tensor loss = builder(g, leaves);
  g.backward(loss);

  double worst = 0.0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const Matrix& analytic = leaves[i].grad();
    for (Index r = 0; r < inputs[i].rows(); ++r) {
      for (Index c = 0; c < inputs[i].cols(); ++c) {
        std::vector<Matrix> plus = inputs;
        std::vector<Matrix> minus = inputs;
        plus[i](r, c) += step;
        minus[i](r, c) -= step;
        const double numeric =
            (eval_at(builder, plus) - eval_at(builder, minus)) / (2.0 * step);
        const double a = analytic(r, c);
        const double denom = std::max({1.0, std::abs(a), std::abs(numeric)});
        worst = std::max(worst, std::abs(a - numeric) / denom);
      }
    }
  }
  return worst;
}

template <typename A, typename B>
bool exact_eq(const A& a, const B& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
  for (Index r = 0; r < a.rows(); ++r) {
    for (Index c = 0; c < a.cols(); ++c) {
      if (a(r, c) != b(r, c)) return false;
    }
  }
  return true;
}

inline Matrix random_matrix(Index rows, Index cols, SplitMix64& rng, double lo = -1.0,
                            double hi = 1.0) {
  Matrix m(rows, cols);
  for (Index r = 0; r < rows; ++r) {
    for (Index c = 0; c < cols; ++c) m(r, c) = rng.next_uniform(lo, hi);
  }
  return m;
}

// Values with |v| in [0.5, 1.5]: safe for abs/kink-free loss probing.
inline Matrix random_signed_offset(Index rows, Index cols, SplitMix64& rng) {
  Matrix m(rows, cols);
  for (Index r = 0; r < rows; ++r) {
    for (Index c = 0; c < cols; ++c) {
      const double mag = rng.next_uniform(0.5, 1.5);
      m(r, c) = rng.next_double() < 0.5 ? -mag : mag;
    }
  }
  return m;
}

}  // namespace tsf::test
