#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "eids/core/mat.hpp"
#include "eids/core/rng.hpp"
#include "eids/tinyformer/config.hpp"
#include "eids/tinyformer/pe.hpp"

namespace eids::tinyformer {

template <typename Real>
struct LinearParams {
  Mat<Real> W;          // in × out
  std::vector<Real> b;  // out

  LinearParams() = default;
  LinearParams(std::size_t in, std::size_t out) : W(in, out), b(out, Real(0)) {}
};

template <typename Real>
struct NormParams {
  std::vector<Real> gamma, beta;

  NormParams() = default;
  explicit NormParams(std::size_t dim)
      : gamma(dim, Real(1)), beta(dim, Real(0)) {}
};

template <typename Real>
struct BlockWeights {
  LinearParams<Real> q, k, v, o;
  NormParams<Real> ln1, ln2;
  LinearParams<Real> ff1, ff2;
};

// All model tensors. The sinusoidal table is a cached non-trainable
// encoding for the static sin variant; Fourier frequencies exist (and
// train) only for the fourier family.
template <typename Real>
struct ModelWeights {
  LinearParams<Real> input;
  std::vector<BlockWeights<Real>> blocks;
  LinearParams<Real> head;
  std::vector<Real> fourier_freqs;
  Mat<Real> sin_table;
};

struct TensorInfo {
  std::string name;
  std::vector<int> shape;
  bool trainable = true;
};

// Visits every tensor in a fixed order. The order defines the archive
// layout and the optimizer-state alignment, so it must never change
// without bumping the archive format version.
template <typename Real, typename Fn>
void for_each_tensor(ModelWeights<Real>& w, const ModelConfig& cfg, Fn&& fn) {
  auto visit = [&](const std::string& name, std::vector<Real>& data,
                   std::vector<int> shape, bool trainable) {
    fn(TensorInfo{name, std::move(shape), trainable}, data);
  };
  visit("input.W", w.input.W.a, {cfg.packet_len, cfg.model_dim}, true);
  visit("input.b", w.input.b, {cfg.model_dim}, true);
  for (std::size_t l = 0; l < w.blocks.size(); ++l) {
    auto& blk = w.blocks[l];
    const std::string p = "block" + std::to_string(l) + ".";
    const int aw = cfg.attn_width();
    visit(p + "q.W", blk.q.W.a, {cfg.model_dim, aw}, true);
    visit(p + "q.b", blk.q.b, {aw}, true);
    visit(p + "k.W", blk.k.W.a, {cfg.model_dim, aw}, true);
    visit(p + "k.b", blk.k.b, {aw}, true);
    visit(p + "v.W", blk.v.W.a, {cfg.model_dim, aw}, true);
    visit(p + "v.b", blk.v.b, {aw}, true);
    visit(p + "o.W", blk.o.W.a, {aw, cfg.model_dim}, true);
    visit(p + "o.b", blk.o.b, {cfg.model_dim}, true);
    visit(p + "ln1.gamma", blk.ln1.gamma, {cfg.model_dim}, true);
    visit(p + "ln1.beta", blk.ln1.beta, {cfg.model_dim}, true);
    visit(p + "ln2.gamma", blk.ln2.gamma, {cfg.model_dim}, true);
    visit(p + "ln2.beta", blk.ln2.beta, {cfg.model_dim}, true);
    visit(p + "ff1.W", blk.ff1.W.a, {cfg.model_dim, cfg.ffn_dim}, true);
    visit(p + "ff1.b", blk.ff1.b, {cfg.ffn_dim}, true);
    visit(p + "ff2.W", blk.ff2.W.a, {cfg.ffn_dim, cfg.model_dim}, true);
    visit(p + "ff2.b", blk.ff2.b, {cfg.model_dim}, true);
  }
  visit("head.W", w.head.W.a, {cfg.model_dim, cfg.num_classes}, true);
  visit("head.b", w.head.b, {cfg.num_classes}, true);
  if (pe_family(cfg.pe) == PeFamily::Fourier)
    visit("pe.fourier_freqs", w.fourier_freqs, {cfg.model_dim / 2}, true);
  if (cfg.pe == PeKind::Sin)
    visit("pe.sin_table", w.sin_table.a, {cfg.max_flow_len, cfg.model_dim},
          false);
}

template <typename Real, typename Fn>
void for_each_tensor(const ModelWeights<Real>& w, const ModelConfig& cfg,
                     Fn&& fn) {
  for_each_tensor(const_cast<ModelWeights<Real>&>(w), cfg,
                  [&](const TensorInfo& info, std::vector<Real>& data) {
                    fn(info, static_cast<const std::vector<Real>&>(data));
                  });
}

// Allocates every tensor at its configured shape, zero-filled. Doubles as
// the gradient container.
template <typename Real>
ModelWeights<Real> zero_weights(const ModelConfig& cfg) {
  cfg.validate();
  ModelWeights<Real> w;
  const auto d = static_cast<std::size_t>(cfg.packet_len);
  const auto dm = static_cast<std::size_t>(cfg.model_dim);
  const auto aw = static_cast<std::size_t>(cfg.attn_width());
  const auto dff = static_cast<std::size_t>(cfg.ffn_dim);
  w.input = LinearParams<Real>(d, dm);
  w.blocks.resize(static_cast<std::size_t>(cfg.num_blocks));
  for (auto& blk : w.blocks) {
    blk.q = LinearParams<Real>(dm, aw);
    blk.k = LinearParams<Real>(dm, aw);
    blk.v = LinearParams<Real>(dm, aw);
    blk.o = LinearParams<Real>(aw, dm);
    blk.ln1 = NormParams<Real>(dm);
    blk.ln2 = NormParams<Real>(dm);
    blk.ff1 = LinearParams<Real>(dm, dff);
    blk.ff2 = LinearParams<Real>(dff, dm);
  }
  w.head = LinearParams<Real>(dm, static_cast<std::size_t>(cfg.num_classes));
  if (pe_family(cfg.pe) == PeFamily::Fourier)
    w.fourier_freqs.assign(dm / 2, Real(0));
  if (cfg.pe == PeKind::Sin)
    w.sin_table = Mat<Real>(static_cast<std::size_t>(cfg.max_flow_len), dm);
  return w;
}

template <typename Real>
void zero_gradients(ModelWeights<Real>& g) {
  auto zero = [](std::vector<Real>& v) { std::fill(v.begin(), v.end(), Real(0)); };
  zero(g.input.W.a);
  zero(g.input.b);
  for (auto& blk : g.blocks) {
    zero(blk.q.W.a); zero(blk.q.b);
    zero(blk.k.W.a); zero(blk.k.b);
    zero(blk.v.W.a); zero(blk.v.b);
    zero(blk.o.W.a); zero(blk.o.b);
    zero(blk.ln1.gamma); zero(blk.ln1.beta);
    zero(blk.ln2.gamma); zero(blk.ln2.beta);
    zero(blk.ff1.W.a); zero(blk.ff1.b);
    zero(blk.ff2.W.a); zero(blk.ff2.b);
  }
  zero(g.head.W.a);
  zero(g.head.b);
  zero(g.fourier_freqs);
}

// Glorot-style uniform init for the affine maps; layer norms start as the
// identity. Fourier frequencies start on the sinusoidal spectrum
// f_i = 10000^(-2i/d_m) / 2π, so the fourier family begins equivalent to
// the sinusoidal encoding and trains from there.
template <typename Real>
ModelWeights<Real> init_weights(const ModelConfig& cfg, std::uint64_t seed) {
  ModelWeights<Real> w = zero_weights<Real>(cfg);
  Rng rng = Rng::derive(seed, stream_tag("weight-init"));
  auto glorot = [&](Mat<Real>& m) {
    const double limit =
        std::sqrt(6.0 / static_cast<double>(m.rows + m.cols));
    for (Real& v : m.a) v = static_cast<Real>(rng.uniform(-limit, limit));
  };
  glorot(w.input.W);
  for (auto& blk : w.blocks) {
    glorot(blk.q.W);
    glorot(blk.k.W);
    glorot(blk.v.W);
    glorot(blk.o.W);
    glorot(blk.ff1.W);
    glorot(blk.ff2.W);
  }
  glorot(w.head.W);
  for (std::size_t i = 0; i < w.fourier_freqs.size(); ++i)
    w.fourier_freqs[i] = static_cast<Real>(
        std::pow(10000.0, -2.0 * static_cast<double>(i) / cfg.model_dim) /
        kTwoPi);
  if (cfg.pe == PeKind::Sin) {
    std::vector<Real> pos(static_cast<std::size_t>(cfg.max_flow_len));
    for (std::size_t p = 0; p < pos.size(); ++p)
      pos[p] = static_cast<Real>(p);
    w.sin_table = pe_sinusoidal<Real>(pos, cfg.model_dim);
  }
  return w;
}

// Trainable parameter count. The sinusoidal table never counts; Fourier
// frequencies count only when include_pe is set.
template <typename Real>
std::size_t count_params(const ModelWeights<Real>& w, const ModelConfig& cfg,
                         bool include_pe) {
  std::size_t total = 0;
  for_each_tensor(w, cfg,
                  [&](const TensorInfo& info, const std::vector<Real>& data) {
                    if (!info.trainable) return;
                    if (info.name == "pe.fourier_freqs" && !include_pe) return;
                    total += data.size();
                  });
  return total;
}

template <typename Real>
ModelWeights<Real> convert_weights(const ModelWeights<float>& src,
                                   const ModelConfig& cfg) {
  ModelWeights<Real> dst = zero_weights<Real>(cfg);
  std::vector<const std::vector<float>*> src_tensors;
  for_each_tensor(src, cfg,
                  [&](const TensorInfo&, const std::vector<float>& data) {
                    src_tensors.push_back(&data);
                  });
  std::size_t idx = 0;
  for_each_tensor(dst, cfg,
                  [&](const TensorInfo&, std::vector<Real>& data) {
                    const auto& s = *src_tensors[idx++];
                    for (std::size_t i = 0; i < data.size(); ++i)
                      data[i] = static_cast<Real>(s[i]);
                  });
  return dst;
}

}  // namespace eids::tinyformer
