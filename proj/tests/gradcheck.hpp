#pragma once

#include <algorithm>
#include <cmath>

#include "trep/predictor.hpp"

namespace trep::testing {

struct GradCheck {
  double max_relative_error = 0.0;
  Eigen::Index worst_parameter = -1;
  Eigen::Index checked = 0;
};

/// Compares the analytic gradient of the masked MSE with central finite
/// differences, visiting every `stride`-th parameter plus p. Parameters are
/// numbered as in Network::flatten.
inline GradCheck check_gradient(const Network& net, const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& targets,
                                const Eigen::MatrixXd& masks, double h = 1e-5, Eigen::Index stride = 1) {
  const Eigen::VectorXd analytic = net.backward(net.forward(inputs), targets, masks).flatten();
  Network probe = net;
  const auto loss = [&] { return mse_loss<double>(probe.predict(inputs), targets, masks); };
  GradCheck out;
  const auto visit = [&](Eigen::Index index, double& value) {
    const double saved = value;
    value = saved + h;
    const double up = loss();
    value = saved - h;
    const double down = loss();
    value = saved;
    const double fd = (up - down) / (2.0 * h);
    const double rel = std::abs(analytic(index) - fd) / std::max(1.0, std::abs(fd));
    if (rel > out.max_relative_error) {
      out.max_relative_error = rel;
      out.worst_parameter = index;
    }
    ++out.checked;
  };
  Eigen::Index index = 0;
  for (int l = 0; l < kLayerCount; ++l) {
    auto& layer = probe.layer(l);
    for (Eigen::Index i = 0; i < layer.weight.size(); ++i, ++index)
      if (index % stride == 0) visit(index, layer.weight.data()[i]);
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i, ++index)
      if (index % stride == 0) visit(index, layer.bias.data()[i]);
  }
  // p goes through the setter so the clamp stays in force; keep p away from its bounds.
  const double saved = probe.p();
  const auto loss_at = [&](double value) {
    probe.set_p(value);
    return loss();
  };
  const double fd = (loss_at(saved + h) - loss_at(saved - h)) / (2.0 * h);
  probe.set_p(saved);
  const double rel = std::abs(analytic(index) - fd) / std::max(1.0, std::abs(fd));
  if (rel > out.max_relative_error) {
    out.max_relative_error = rel;
    out.worst_parameter = index;
  }
  ++out.checked;
  return out;
}

}  // namespace trep::testing
