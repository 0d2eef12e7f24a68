#pragma once

#include "tsf/tensor.hpp"
#include "tsf/types.hpp"

#include <array>
#include <string>

namespace tsf {

enum class LossKind { m_loss, huber, mae, mse };

LossKind loss_kind_from_string(const std::string& name);
std::string to_string(LossKind kind);

struct LossConfig {
  LossKind kind = LossKind::m_loss;
  Scalar sigma = 1.0;  // band threshold for huber / m_loss
};

// Mean-reduced training loss on the tape. mse/mae are composed from
// primitives; huber and the combined huber+mae piecewise loss have dedicated
// nodes (see tensor.hpp).
Tensor loss_value(const Tensor& pred, const Tensor& target, const LossConfig& cfg);

struct DeepSupervision {
  Tensor total;
  Tensor ci;
  Tensor cd;
  Tensor mix;
};

// total = w_cd * L(y, cd) + w_ci * L(y, ci) + w_mix * L(y, mix) when deep
// supervision is on; just the mix term otherwise. The component tensors are
// always returned for reporting.
DeepSupervision deep_supervised_loss(const Tensor& x_ci, const Tensor& x_cd,
                                     const Tensor& x_mix, const Tensor& y,
                                     const LossConfig& cfg, bool deep_supervision,
                                     const std::array<Scalar, 3>& weights = {1, 1, 1});

struct Metrics {
  Scalar mse = 0;
  Scalar mae = 0;
};

Metrics metrics(const Matrix& pred, const Matrix& target);

}  // namespace tsf
