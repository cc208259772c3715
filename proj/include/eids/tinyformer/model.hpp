#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "eids/core/error.hpp"
#include "eids/core/mat.hpp"
#include "eids/core/rng.hpp"
#include "eids/flowcap/packet.hpp"
#include "eids/tinyformer/config.hpp"
#include "eids/tinyformer/pe.hpp"
#include "eids/tinyformer/weights.hpp"

namespace eids::tinyformer {

using flowcap::FlowRecord;

// Activations retained by the forward pass, over the valid (unmasked)
// positions only. Padded positions never influence the output — attention
// keys beyond the mask get exactly zero weight because they are excluded
// from the score computation entirely — so nothing about them is stored.
template <typename Real>
struct BlockTrace {
  Mat<Real> q, k, v;            // post-affine projections (n × h·d_h)
  Mat<Real> qr, kr;             // after rotary encoding (== q, k otherwise)
  std::vector<Mat<Real>> attn;  // per-head softmax rows (n × n)
  std::vector<std::vector<std::uint8_t>> attn_keep;  // per-head dropout
  Mat<Real> concat;             // heads reassembled (n × h·d_h)
  std::vector<std::uint8_t> attn_out_keep;
  Mat<Real> r1;                 // residual sum entering layer norm 1
  Mat<Real> ln1_xhat;
  std::vector<Real> ln1_inv_std;
  Mat<Real> z1;                 // layer norm 1 output / FFN input
  Mat<Real> ffn_pre;            // FFN hidden pre-activation (n × d_ff)
  std::vector<std::uint8_t> ffn_keep;
  Mat<Real> r2;                 // residual sum entering layer norm 2
  Mat<Real> ln2_xhat;
  std::vector<Real> ln2_inv_std;
  Mat<Real> z2;                 // block output
};

template <typename Real>
struct ForwardTrace {
  int n = 0;                   // valid positions
  std::vector<Real> positions; // what the positional encoding saw
  Mat<Real> e_proj;            // input projection output
  Mat<Real> pe;                // additive encoding (empty for none/rope)
  Mat<Real> e2;                // encoder input after PE + dropout
  std::vector<std::uint8_t> embed_keep;
  std::vector<BlockTrace<Real>> blocks;
  std::vector<Real> pooled;    // mask-aware mean over positions
  std::vector<Real> logits;
  std::vector<Real> conf;      // softmax output
};

namespace detail {

template <typename Real>
void require_finite(const Real* p, std::size_t n, const char* layer) {
  if (!all_finite(p, n))
    throw NonFiniteActivation(std::string("non-finite values in ") + layer);
}

// Inverted dropout: keep with probability 1-p and scale by 1/(1-p).
// Returns the keep mask so the backward pass can replay it.
template <typename Real>
void apply_dropout(Mat<Real>& m, float p, Rng& rng,
                   std::vector<std::uint8_t>& keep_out) {
  keep_out.resize(m.size());
  const Real scale = Real(1) / static_cast<Real>(1.0f - p);
  for (std::size_t i = 0; i < m.size(); ++i) {
    const bool keep = rng.uniform01() >= static_cast<double>(p);
    keep_out[i] = keep ? 1 : 0;
    m.a[i] = keep ? m.a[i] * scale : Real(0);
  }
}

template <typename Real>
void softmax_row(Real* row, std::size_t n) {
  Real mx = row[0];
  for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, row[i]);
  Real sum = 0;
  for (std::size_t i = 0; i < n; ++i) {
    row[i] = std::exp(row[i] - mx);
    sum += row[i];
  }
  for (std::size_t i = 0; i < n; ++i) row[i] /= sum;
}

template <typename Real>
void layer_norm_forward(const Mat<Real>& x, const NormParams<Real>& p,
                        Real eps, Mat<Real>& xhat,
                        std::vector<Real>& inv_std, Mat<Real>& y) {
  const std::size_t dm = x.cols;
  xhat = Mat<Real>(x.rows, dm);
  y = Mat<Real>(x.rows, dm);
  inv_std.resize(x.rows);
  for (std::size_t r = 0; r < x.rows; ++r) {
    const Real* xr = x.row(r);
    Real mean = 0;
    for (std::size_t j = 0; j < dm; ++j) mean += xr[j];
    mean /= static_cast<Real>(dm);
    Real var = 0;
    for (std::size_t j = 0; j < dm; ++j) {
      const Real dvd = xr[j] - mean;
      var += dvd * dvd;
    }
    var /= static_cast<Real>(dm);
    const Real is = Real(1) / std::sqrt(var + eps);
    inv_std[r] = is;
    Real* xh = xhat.row(r);
    Real* yr = y.row(r);
    for (std::size_t j = 0; j < dm; ++j) {
      xh[j] = (xr[j] - mean) * is;
      yr[j] = p.gamma[j] * xh[j] + p.beta[j];
    }
  }
}

}  // namespace detail

// Number of valid leading positions; rejects masks with holes, which the
// preparation pipeline never produces.
inline int masked_prefix_len(const FlowRecord& flow) {
  const int n = flow.valid_len();
  for (std::size_t i = static_cast<std::size_t>(n); i < flow.mask.size(); ++i)
    if (flow.mask[i]) throw ShapeMismatch("mask must be a true-prefix");
  return n;
}

// Full encoder forward pass:
//   input projection → additive PE (sin/fourier families) → dropout →
//   [multi-head attention over valid keys (RoPE rotates Q/K in place for
//   the rope family) → residual → layer norm → FFN with ReLU → residual →
//   layer norm] × L → mask-aware mean pooling → classifier head → softmax.
// Inference (train_mode = false) draws nothing and is deterministic.
template <typename Real>
std::vector<Real> forward(const ModelWeights<Real>& w, const ModelConfig& cfg,
                          const FlowRecord& flow, bool train_mode, Rng* rng,
                          ForwardTrace<Real>* trace_out = nullptr) {
  if (static_cast<int>(flow.packets.cols) != cfg.packet_len)
    throw ShapeMismatch("flow packet length does not match model config");
  if (flow.packets.rows != flow.mask.size() ||
      flow.timestamps.size() != flow.mask.size())
    throw ShapeMismatch("flow record field lengths disagree");
  if (flow.packets.rows > static_cast<std::size_t>(cfg.max_flow_len))
    throw ShapeMismatch("flow longer than model max_flow_len");
  const int n = masked_prefix_len(flow);
  if (n < 1) throw EmptyFlow("forward needs at least one valid packet");
  if (train_mode && cfg.dropout > 0.0f && rng == nullptr)
    throw InvalidSpec("training forward needs an RNG for dropout");

  const auto nn = static_cast<std::size_t>(n);
  const auto dm = static_cast<std::size_t>(cfg.model_dim);
  const auto aw = static_cast<std::size_t>(cfg.attn_width());
  const auto dh = static_cast<std::size_t>(cfg.head_dim);
  const bool drop_on = train_mode && cfg.dropout > 0.0f;

  ForwardTrace<Real> tr;
  tr.n = n;

  // Positions for the positional encoding: packet timestamps for the
  // dynamic variants, 0..n-1 otherwise.
  tr.positions.resize(nn);
  if (pe_is_dynamic(cfg.pe)) {
    for (std::size_t i = 0; i < nn; ++i)
      tr.positions[i] = static_cast<Real>(flow.timestamps[i]) *
                        static_cast<Real>(cfg.time_scale);
  } else {
    for (std::size_t i = 0; i < nn; ++i)
      tr.positions[i] = static_cast<Real>(i);
  }

  // Input projection, casting the float32 packet bytes to Real.
  tr.e_proj = Mat<Real>(nn, dm);
  for (std::size_t i = 0; i < nn; ++i) {
    const float* xr = flow.packets.row(i);
    Real* er = tr.e_proj.row(i);
    for (std::size_t j = 0; j < dm; ++j) er[j] = w.input.b[j];
    for (std::size_t c = 0; c < static_cast<std::size_t>(cfg.packet_len);
         ++c) {
      const Real xv = static_cast<Real>(xr[c]);
      if (xv == Real(0)) continue;
      const Real* wr = w.input.W.row(c);
      for (std::size_t j = 0; j < dm; ++j) er[j] += xv * wr[j];
    }
  }
  detail::require_finite(tr.e_proj.a.data(), tr.e_proj.size(), "input_proj");

  Mat<Real> x = tr.e_proj;
  switch (pe_family(cfg.pe)) {
    case PeFamily::Sin:
      tr.pe = (cfg.pe == PeKind::Sin)
                  ? [&] {
                      Mat<Real> m(nn, dm);
                      for (std::size_t i = 0; i < nn; ++i)
                        std::copy(w.sin_table.row(i), w.sin_table.row(i) + dm,
                                  m.row(i));
                      return m;
                    }()
                  : pe_sinusoidal<Real>(tr.positions, cfg.model_dim);
      break;
    case PeFamily::Fourier:
      tr.pe = pe_fourier<Real>(tr.positions, w.fourier_freqs);
      break;
    case PeFamily::Rope:
    case PeFamily::None:
      break;
  }
  if (!tr.pe.empty()) {
    for (std::size_t i = 0; i < x.size(); ++i) x.a[i] += tr.pe.a[i];
  }
  if (drop_on) detail::apply_dropout(x, cfg.dropout, *rng, tr.embed_keep);
  tr.e2 = x;

  const Real scale = Real(1) / std::sqrt(static_cast<Real>(cfg.head_dim));
  const int rope_denom =
      cfg.rope_theta_over_head_dim ? cfg.head_dim : cfg.model_dim;

  tr.blocks.resize(static_cast<std::size_t>(cfg.num_blocks));
  for (std::size_t l = 0; l < tr.blocks.size(); ++l) {
    const BlockWeights<Real>& bw = w.blocks[l];
    BlockTrace<Real>& bt = tr.blocks[l];
    const Mat<Real>& in = (l == 0) ? tr.e2 : tr.blocks[l - 1].z2;

    gemm_nn(in, bw.q.W, bt.q);
    add_row_inplace(bt.q, bw.q.b);
    gemm_nn(in, bw.k.W, bt.k);
    add_row_inplace(bt.k, bw.k.b);
    gemm_nn(in, bw.v.W, bt.v);
    add_row_inplace(bt.v, bw.v.b);

    bt.qr = bt.q;
    bt.kr = bt.k;
    if (pe_family(cfg.pe) == PeFamily::Rope) {
      // Rotate each head's pairs independently.
      for (int h = 0; h < cfg.num_heads; ++h) {
        Mat<Real> qh(nn, dh), kh(nn, dh);
        const std::size_t off = static_cast<std::size_t>(h) * dh;
        for (std::size_t i = 0; i < nn; ++i) {
          std::copy(bt.q.row(i) + off, bt.q.row(i) + off + dh, qh.row(i));
          std::copy(bt.k.row(i) + off, bt.k.row(i) + off + dh, kh.row(i));
        }
        rope_rotate_inplace<Real>(qh, tr.positions,
                                  static_cast<Real>(cfg.rope_theta_base),
                                  rope_denom);
        rope_rotate_inplace<Real>(kh, tr.positions,
                                  static_cast<Real>(cfg.rope_theta_base),
                                  rope_denom);
        for (std::size_t i = 0; i < nn; ++i) {
          std::copy(qh.row(i), qh.row(i) + dh, bt.qr.row(i) + off);
          std::copy(kh.row(i), kh.row(i) + dh, bt.kr.row(i) + off);
        }
      }
    }

    bt.attn.assign(static_cast<std::size_t>(cfg.num_heads), Mat<Real>());
    bt.attn_keep.assign(static_cast<std::size_t>(cfg.num_heads), {});
    bt.concat = Mat<Real>(nn, aw);
    for (int h = 0; h < cfg.num_heads; ++h) {
      const std::size_t off = static_cast<std::size_t>(h) * dh;
      Mat<Real>& a = bt.attn[static_cast<std::size_t>(h)];
      a = Mat<Real>(nn, nn);
      for (std::size_t i = 0; i < nn; ++i) {
        const Real* qi = bt.qr.row(i) + off;
        Real* ar = a.row(i);
        for (std::size_t j = 0; j < nn; ++j) {
          const Real* kj = bt.kr.row(j) + off;
          Real s = 0;
          for (std::size_t t = 0; t < dh; ++t) s += qi[t] * kj[t];
          ar[j] = s * scale;
        }
        detail::softmax_row(ar, nn);
      }
      detail::require_finite(a.a.data(), a.size(), "attention_softmax");
      Mat<Real> a_used = a;
      if (drop_on)
        detail::apply_dropout(a_used, cfg.dropout, *rng,
                              bt.attn_keep[static_cast<std::size_t>(h)]);
      for (std::size_t i = 0; i < nn; ++i) {
        const Real* ar = a_used.row(i);
        Real* cr = bt.concat.row(i) + off;
        for (std::size_t t = 0; t < dh; ++t) cr[t] = 0;
        for (std::size_t j = 0; j < nn; ++j) {
          const Real av = ar[j];
          if (av == Real(0)) continue;
          const Real* vj = bt.v.row(j) + off;
          for (std::size_t t = 0; t < dh; ++t) cr[t] += av * vj[t];
        }
      }
    }

    Mat<Real> attn_out;
    gemm_nn(bt.concat, bw.o.W, attn_out);
    add_row_inplace(attn_out, bw.o.b);
    if (drop_on)
      detail::apply_dropout(attn_out, cfg.dropout, *rng, bt.attn_out_keep);

    bt.r1 = in;
    for (std::size_t i = 0; i < bt.r1.size(); ++i)
      bt.r1.a[i] += attn_out.a[i];
    detail::layer_norm_forward(bt.r1, bw.ln1, static_cast<Real>(cfg.ln_eps),
                               bt.ln1_xhat, bt.ln1_inv_std, bt.z1);
    detail::require_finite(bt.z1.a.data(), bt.z1.size(), "layer_norm1");

    gemm_nn(bt.z1, bw.ff1.W, bt.ffn_pre);
    add_row_inplace(bt.ffn_pre, bw.ff1.b);
    Mat<Real> ffn_act = bt.ffn_pre;
    for (Real& vv : ffn_act.a) vv = std::max(vv, Real(0));
    Mat<Real> ffn_out;
    gemm_nn(ffn_act, bw.ff2.W, ffn_out);
    add_row_inplace(ffn_out, bw.ff2.b);
    if (drop_on) detail::apply_dropout(ffn_out, cfg.dropout, *rng, bt.ffn_keep);

    bt.r2 = bt.z1;
    for (std::size_t i = 0; i < bt.r2.size(); ++i)
      bt.r2.a[i] += ffn_out.a[i];
    detail::layer_norm_forward(bt.r2, bw.ln2, static_cast<Real>(cfg.ln_eps),
                               bt.ln2_xhat, bt.ln2_inv_std, bt.z2);
    detail::require_finite(bt.z2.a.data(), bt.z2.size(), "layer_norm2");
  }

  const Mat<Real>& final_out = tr.blocks.back().z2;
  tr.pooled.assign(dm, Real(0));
  for (std::size_t i = 0; i < nn; ++i) {
    const Real* r = final_out.row(i);
    for (std::size_t j = 0; j < dm; ++j) tr.pooled[j] += r[j];
  }
  for (std::size_t j = 0; j < dm; ++j)
    tr.pooled[j] /= static_cast<Real>(n);

  tr.logits.assign(static_cast<std::size_t>(cfg.num_classes), Real(0));
  for (std::size_t j = 0; j < dm; ++j) {
    const Real pv = tr.pooled[j];
    const Real* wr = w.head.W.row(j);
    for (std::size_t c = 0; c < tr.logits.size(); ++c)
      tr.logits[c] += pv * wr[c];
  }
  for (std::size_t c = 0; c < tr.logits.size(); ++c)
    tr.logits[c] += w.head.b[c];
  detail::require_finite(tr.logits.data(), tr.logits.size(), "head");

  tr.conf = tr.logits;
  detail::softmax_row(tr.conf.data(), tr.conf.size());

  std::vector<Real> conf = tr.conf;
  if (trace_out) *trace_out = std::move(tr);
  return conf;
}

}  // namespace eids::tinyformer
