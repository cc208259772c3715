#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "eids/core/rng.hpp"
#include "eids/evalkit/evalkit.hpp"

namespace eids::evalkit {

struct BenchReport {
  int runs = 0;
  double median_us = 0.0;
  double p95_us = 0.0;
  double mean_us = 0.0;
  double min_us = 0.0;
  double max_us = 0.0;
  std::size_t weight_bytes = 0;      // all members, float32
  std::size_t activation_bytes = 0;  // one member's forward workspace
  std::size_t input_bytes = 0;
  std::size_t analytic_total_bytes = 0;
  long vm_hwm_kb = -1;  // process peak RSS if the kernel exposes it
};

// Forward-workspace footprint at full sequence length, in bytes, for one
// member. Counts every tensor the inference pass materializes.
inline std::size_t analytic_activation_bytes(const tinyformer::ModelConfig& c) {
  const std::size_t n = static_cast<std::size_t>(c.max_flow_len);
  const std::size_t dm = static_cast<std::size_t>(c.model_dim);
  const std::size_t aw = static_cast<std::size_t>(c.attn_width());
  const std::size_t dff = static_cast<std::size_t>(c.ffn_dim);
  const std::size_t cls = static_cast<std::size_t>(c.num_classes);
  const std::size_t heads = static_cast<std::size_t>(c.num_heads);
  std::size_t floats = 0;
  floats += n;            // positions
  floats += 3 * n * dm;   // input projection, PE, encoder input
  const std::size_t per_block = 5 * n * aw   // q, k, v, qr, kr
                                + heads * n * n  // attention rows
                                + n * aw         // concat
                                + 3 * n * dm     // r1, ln1 xhat, z1
                                + n * dff        // ffn pre-activation
                                + 3 * n * dm     // r2, ln2 xhat, z2
                                + 2 * n;         // inv_std vectors
  floats += per_block * static_cast<std::size_t>(c.num_blocks);
  floats += dm + 2 * cls;  // pooled, logits, softmax
  return floats * sizeof(float);
}

inline long read_vm_hwm_kb() {
  std::ifstream f("/proc/self/status");
  std::string line;
  while (std::getline(f, line)) {
    if (line.rfind("VmHWM:", 0) == 0) {
      long kb = -1;
      if (std::sscanf(line.c_str(), "VmHWM: %ld", &kb) == 1) return kb;
    }
  }
  return -1;
}

// Times full-length single-flow ensemble inference and reports the
// analytic memory footprint (weights + one forward workspace + input)
// next to the kernel's peak-RSS figure.
inline BenchReport run_bench(const Ensemble& ens, int runs = 1000,
                             int warmup = 50, std::uint64_t seed = 7) {
  ens.validate();
  if (runs < 1) throw InvalidSpec("bench needs at least one run");
  const tinyformer::ModelConfig& cfg = ens.members.front().config;

  FlowRecord flow;
  flow.label = 0;
  const auto n = static_cast<std::size_t>(cfg.max_flow_len);
  flow.packets = Mat<float>(n, static_cast<std::size_t>(cfg.packet_len));
  Rng rng = Rng::derive(seed, stream_tag("bench-flow"));
  for (float& v : flow.packets.a)
    v = static_cast<float>(rng.uniform01());
  flow.timestamps.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    flow.timestamps[i] = static_cast<float>(i) * 0.05f;
  flow.mask.assign(n, 1);

  volatile float sink = 0.0f;
  for (int i = 0; i < warmup; ++i)
    sink = sink + ensemble_predict(ens, flow)[0];

  std::vector<double> us;
  us.reserve(static_cast<std::size_t>(runs));
  for (int i = 0; i < runs; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    sink = sink + ensemble_predict(ens, flow)[0];
    const auto t1 = std::chrono::steady_clock::now();
    us.push_back(std::chrono::duration<double, std::micro>(t1 - t0).count());
  }
  (void)sink;

  BenchReport rep;
  rep.runs = runs;
  std::sort(us.begin(), us.end());
  rep.min_us = us.front();
  rep.max_us = us.back();
  rep.median_us = us[us.size() / 2];
  rep.p95_us = us[std::min(us.size() - 1,
                           static_cast<std::size_t>(
                               0.95 * static_cast<double>(us.size())))];
  double sum = 0.0;
  for (double v : us) sum += v;
  rep.mean_us = sum / static_cast<double>(us.size());

  for (const auto& m : ens.members) {
    std::size_t floats = 0;
    tinyformer::for_each_tensor(
        m.weights, m.config,
        [&](const tinyformer::TensorInfo&, const std::vector<float>& t) {
          floats += t.size();
        });
    rep.weight_bytes += floats * sizeof(float);
  }
  rep.activation_bytes = analytic_activation_bytes(cfg);
  rep.input_bytes = flow.packets.size() * sizeof(float) +
                    flow.timestamps.size() * sizeof(float) +
                    flow.mask.size();
  rep.analytic_total_bytes =
      rep.weight_bytes + rep.activation_bytes + rep.input_bytes;
  rep.vm_hwm_kb = read_vm_hwm_kb();
  return rep;
}

}  // namespace eids::evalkit
