#include "tsf/losses.hpp"

#include <cmath>

namespace tsf {

LossKind loss_kind_from_string(const std::string& name) {
  if (name == "m_loss") return LossKind::m_loss;
  if (name == "huber") return LossKind::huber;
  if (name == "mae") return LossKind::mae;
  if (name == "mse") return LossKind::mse;
  fail("unknown loss kind '", name, "' (expected m_loss|huber|mae|mse)");
}

std::string to_string(LossKind kind) {
  switch (kind) {
    case LossKind::m_loss: return "m_loss";
    case LossKind::huber: return "huber";
    case LossKind::mae: return "mae";
    case LossKind::mse: return "mse";
  }
  return "m_loss";
}

Tensor loss_value(const Tensor& pred, const Tensor& target, const LossConfig& cfg) {
  require(cfg.sigma > 0, "loss: sigma must be positive, got ", cfg.sigma);
  switch (cfg.kind) {
    case LossKind::m_loss:
      return m_loss(pred, target, cfg.sigma);
    case LossKind::huber:
      return huber_loss(pred, target, cfg.sigma);
    case LossKind::mae:
      return mean(abs(sub(pred, target)));
    case LossKind::mse:
      return mean(square(sub(pred, target)));
  }
  fail("loss: bad kind");
}

DeepSupervision deep_supervised_loss(const Tensor& x_ci, const Tensor& x_cd,
                                     const Tensor& x_mix, const Tensor& y,
                                     const LossConfig& cfg, bool deep_supervision,
                                     const std::array<Scalar, 3>& weights) {
  DeepSupervision out;
  out.ci = loss_value(x_ci, y, cfg);
  out.cd = loss_value(x_cd, y, cfg);
  out.mix = loss_value(x_mix, y, cfg);
  if (!deep_supervision) {
    out.total = out.mix;
    return out;
  }
  Tensor total = add(scale(out.cd, weights[1]), scale(out.ci, weights[0]));
  out.total = add(total, scale(out.mix, weights[2]));
  return out;
}

Metrics metrics(const Matrix& pred, const Matrix& target) {
  require(pred.rows() == target.rows() && pred.cols() == target.cols(),
          "metrics: shape mismatch (", shape_str(pred), " vs ", shape_str(target),
          ")");
  require(pred.size() > 0, "metrics: empty input");
  Metrics m;
  for (Index i = 0; i < pred.rows(); ++i) {
    for (Index j = 0; j < pred.cols(); ++j) {
      const Scalar e = pred(i, j) - target(i, j);
      m.mse += e * e;
      m.mae += std::abs(e);
    }
  }
  m.mse /= static_cast<Scalar>(pred.size());
  m.mae /= static_cast<Scalar>(pred.size());
  return m;
}

}  // namespace tsf
