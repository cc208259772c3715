#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "eids/core/error.hpp"

namespace eids::tinyformer {

// Sample weight of the early-detection loss: w = e^(-0.1 n). Short flows
// dominate the objective, pushing the model to classify from the first
// few packets.
template <typename Real>
Real edl_weight(int flow_len) {
  return static_cast<Real>(std::exp(-0.1 * static_cast<double>(flow_len)));
}

// Weighted cross-entropy over a batch: L = Σ e^(-0.1 n_i) · CE_i, with an
// optional division by Σ w_i (normalize).
template <typename Real>
Real edl_loss(const std::vector<std::vector<Real>>& confidences,
              std::span<const int> labels, std::span<const int> lengths,
              bool normalize = false) {
  if (confidences.size() != labels.size() ||
      confidences.size() != lengths.size())
    throw ShapeMismatch("edl_loss: batch fields differ in length");
  if (confidences.empty()) throw EmptyDataset("edl_loss: empty batch");
  Real total = 0, weight_sum = 0;
  for (std::size_t i = 0; i < confidences.size(); ++i) {
    const auto& conf = confidences[i];
    const int y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= conf.size())
      throw ShapeMismatch("edl_loss: label outside confidence vector");
    const Real w = edl_weight<Real>(lengths[i]);
    const Real p = std::max(conf[static_cast<std::size_t>(y)],
                            static_cast<Real>(1e-30));
    total += w * static_cast<Real>(-std::log(static_cast<double>(p)));
    weight_sum += w;
  }
  if (normalize && weight_sum > Real(0)) total /= weight_sum;
  return total;
}

// Gradient of the weighted cross-entropy w.r.t. the logits of one sample:
// w · (softmax - onehot).
template <typename Real>
std::vector<Real> edl_dlogits(std::span<const Real> conf, int label, Real w) {
  std::vector<Real> d(conf.begin(), conf.end());
  for (Real& v : d) v *= w;
  d[static_cast<std::size_t>(label)] -= w;
  return d;
}

}  // namespace eids::tinyformer
