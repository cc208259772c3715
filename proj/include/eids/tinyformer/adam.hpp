#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "eids/tinyformer/weights.hpp"

namespace eids::tinyformer {

struct AdamConfig {
  float lr = 0.0002f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
};

// First/second moment estimates, aligned with the trainable tensors in
// for_each_tensor order.
template <typename Real>
struct AdamState {
  std::vector<std::vector<Real>> m, v;
  std::int64_t step = 0;

  static AdamState make(const ModelWeights<Real>& w, const ModelConfig& cfg) {
    AdamState s;
    for_each_tensor(w, cfg,
                    [&](const TensorInfo& info, const std::vector<Real>& t) {
                      if (!info.trainable) return;
                      s.m.emplace_back(t.size(), Real(0));
                      s.v.emplace_back(t.size(), Real(0));
                    });
    return s;
  }
};

// Standard Adam update with bias correction.
template <typename Real>
void adam_step(ModelWeights<Real>& w, const ModelWeights<Real>& g,
               const ModelConfig& cfg, AdamState<Real>& state,
               const AdamConfig& opt) {
  std::vector<const std::vector<Real>*> grads;
  for_each_tensor(g, cfg,
                  [&](const TensorInfo& info, const std::vector<Real>& t) {
                    if (info.trainable) grads.push_back(&t);
                  });
  ++state.step;
  const Real b1 = static_cast<Real>(opt.beta1);
  const Real b2 = static_cast<Real>(opt.beta2);
  const Real corr1 =
      Real(1) - static_cast<Real>(std::pow(static_cast<double>(opt.beta1),
                                           static_cast<double>(state.step)));
  const Real corr2 =
      Real(1) - static_cast<Real>(std::pow(static_cast<double>(opt.beta2),
                                           static_cast<double>(state.step)));
  std::size_t ti = 0;
  for_each_tensor(w, cfg,
                  [&](const TensorInfo& info, std::vector<Real>& t) {
                    if (!info.trainable) return;
                    const std::vector<Real>& gr = *grads[ti];
                    std::vector<Real>& m = state.m[ti];
                    std::vector<Real>& v = state.v[ti];
                    ++ti;
                    for (std::size_t i = 0; i < t.size(); ++i) {
                      m[i] = b1 * m[i] + (Real(1) - b1) * gr[i];
                      v[i] = b2 * v[i] + (Real(1) - b2) * gr[i] * gr[i];
                      const Real mhat = m[i] / corr1;
                      const Real vhat = v[i] / corr2;
                      t[i] -= static_cast<Real>(opt.lr) * mhat /
                              (std::sqrt(vhat) + static_cast<Real>(opt.eps));
                    }
                  });
}

}  // namespace eids::tinyformer
