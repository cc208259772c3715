#pragma once

#include <span>
#include <vector>

#include "eids/core/mat.hpp"
#include "eids/flowcap/packet.hpp"
#include "eids/tinyformer/model.hpp"
#include "eids/tinyformer/weights.hpp"

namespace eids::tinyformer {

namespace detail {

template <typename Real>
void layer_norm_backward(const Mat<Real>& dy, const Mat<Real>& xhat,
                         const std::vector<Real>& inv_std,
                         const NormParams<Real>& p, NormParams<Real>& grad,
                         Mat<Real>& dx) {
  const std::size_t dm = dy.cols;
  dx = Mat<Real>(dy.rows, dm);
  for (std::size_t r = 0; r < dy.rows; ++r) {
    const Real* dyr = dy.row(r);
    const Real* xh = xhat.row(r);
    Real* dxr = dx.row(r);
    Real sum_dxhat = 0, sum_dxhat_xhat = 0;
    for (std::size_t j = 0; j < dm; ++j) {
      grad.gamma[j] += dyr[j] * xh[j];
      grad.beta[j] += dyr[j];
    }
    for (std::size_t j = 0; j < dm; ++j) {
      const Real dxhat = dyr[j] * p.gamma[j];
      sum_dxhat += dxhat;
      sum_dxhat_xhat += dxhat * xh[j];
    }
    const Real inv_dm = Real(1) / static_cast<Real>(dm);
    for (std::size_t j = 0; j < dm; ++j) {
      const Real dxhat = dyr[j] * p.gamma[j];
      dxr[j] = inv_std[r] * (dxhat - sum_dxhat * inv_dm -
                             xh[j] * sum_dxhat_xhat * inv_dm);
    }
  }
}

// Maps a gradient back through an inverted-dropout application.
template <typename Real>
void dropout_backward_inplace(Mat<Real>& g,
                              const std::vector<std::uint8_t>& keep,
                              float p) {
  if (keep.empty()) return;
  const Real scale = Real(1) / static_cast<Real>(1.0f - p);
  for (std::size_t i = 0; i < g.size(); ++i)
    g.a[i] = keep[i] ? g.a[i] * scale : Real(0);
}

}  // namespace detail

// Accumulates gradients for every trainable tensor given the gradient of
// the loss w.r.t. the logits of one sample. Dropout masks recorded by the
// forward pass are replayed exactly.
template <typename Real>
void backward(const ModelWeights<Real>& w, const ModelConfig& cfg,
              const FlowRecord& flow, const ForwardTrace<Real>& tr,
              std::span<const Real> dlogits, ModelWeights<Real>& g) {
  const auto nn = static_cast<std::size_t>(tr.n);
  const auto dm = static_cast<std::size_t>(cfg.model_dim);
  const auto aw = static_cast<std::size_t>(cfg.attn_width());
  const auto dh = static_cast<std::size_t>(cfg.head_dim);
  const Real scale = Real(1) / std::sqrt(static_cast<Real>(cfg.head_dim));
  const int rope_denom =
      cfg.rope_theta_over_head_dim ? cfg.head_dim : cfg.model_dim;

  // Classifier head.
  for (std::size_t j = 0; j < dm; ++j) {
    const Real pv = tr.pooled[j];
    Real* gw = g.head.W.row(j);
    for (std::size_t c = 0; c < dlogits.size(); ++c)
      gw[c] += pv * dlogits[c];
  }
  std::vector<Real> dpooled(dm, Real(0));
  for (std::size_t c = 0; c < dlogits.size(); ++c) {
    g.head.b[c] += dlogits[c];
    const Real dl = dlogits[c];
    for (std::size_t j = 0; j < dm; ++j)
      dpooled[j] += w.head.W(j, c) * dl;
  }

  // Mean pooling spreads the gradient uniformly over valid rows.
  Mat<Real> dz(nn, dm);
  const Real inv_n = Real(1) / static_cast<Real>(tr.n);
  for (std::size_t i = 0; i < nn; ++i) {
    Real* r = dz.row(i);
    for (std::size_t j = 0; j < dm; ++j) r[j] = dpooled[j] * inv_n;
  }

  for (int l = cfg.num_blocks - 1; l >= 0; --l) {
    const auto lu = static_cast<std::size_t>(l);
    const BlockWeights<Real>& bw = w.blocks[lu];
    const BlockTrace<Real>& bt = tr.blocks[lu];
    BlockWeights<Real>& bg = g.blocks[lu];
    const Mat<Real>& in = (l == 0) ? tr.e2 : tr.blocks[lu - 1].z2;

    // Layer norm 2 → residual split.
    Mat<Real> dr2;
    detail::layer_norm_backward(dz, bt.ln2_xhat, bt.ln2_inv_std, bw.ln2,
                                bg.ln2, dr2);
    Mat<Real> dz1 = dr2;       // residual branch
    Mat<Real> dffn_out = dr2;  // sublayer branch
    detail::dropout_backward_inplace(dffn_out, bt.ffn_keep, cfg.dropout);

    // FFN.
    Mat<Real> act = bt.ffn_pre;
    for (Real& v : act.a) v = std::max(v, Real(0));
    gemm_tn(act, dffn_out, bg.ff2.W, true);
    accumulate_col_sums(dffn_out, bg.ff2.b);
    Mat<Real> dact;
    gemm_nt(dffn_out, bw.ff2.W, dact);
    for (std::size_t i = 0; i < dact.size(); ++i)
      if (bt.ffn_pre.a[i] <= Real(0)) dact.a[i] = Real(0);
    gemm_tn(bt.z1, dact, bg.ff1.W, true);
    accumulate_col_sums(dact, bg.ff1.b);
    gemm_nt(dact, bw.ff1.W, dz1, /*accumulate=*/true);

    // Layer norm 1 → residual split.
    Mat<Real> dr1;
    detail::layer_norm_backward(dz1, bt.ln1_xhat, bt.ln1_inv_std, bw.ln1,
                                bg.ln1, dr1);
    Mat<Real> din = dr1;        // residual branch
    Mat<Real> dattn_out = dr1;  // sublayer branch
    detail::dropout_backward_inplace(dattn_out, bt.attn_out_keep, cfg.dropout);

    // Output projection.
    gemm_tn(bt.concat, dattn_out, bg.o.W, true);
    accumulate_col_sums(dattn_out, bg.o.b);
    Mat<Real> dconcat;
    gemm_nt(dattn_out, bw.o.W, dconcat);

    // Attention heads.
    Mat<Real> dqr(nn, aw), dkr(nn, aw), dv(nn, aw);
    const Real keep_scale = Real(1) / static_cast<Real>(1.0f - cfg.dropout);
    for (int h = 0; h < cfg.num_heads; ++h) {
      const std::size_t off = static_cast<std::size_t>(h) * dh;
      const Mat<Real>& a = bt.attn[static_cast<std::size_t>(h)];
      const auto& keep = bt.attn_keep[static_cast<std::size_t>(h)];

      // Reconstruct the post-dropout attention actually used.
      Mat<Real> a_used = a;
      if (!keep.empty()) {
        for (std::size_t i = 0; i < a_used.size(); ++i)
          a_used.a[i] = keep[i] ? a_used.a[i] * keep_scale : Real(0);
      }

      // d(attention) and dV from out_h = A_used · V_h.
      Mat<Real> da(nn, nn);
      for (std::size_t i = 0; i < nn; ++i) {
        const Real* dout = dconcat.row(i) + off;
        Real* dar = da.row(i);
        for (std::size_t j = 0; j < nn; ++j) {
          const Real* vj = bt.v.row(j) + off;
          Real s = 0;
          for (std::size_t t = 0; t < dh; ++t) s += dout[t] * vj[t];
          dar[j] = s;
        }
        const Real* aur = a_used.row(i);
        for (std::size_t j = 0; j < nn; ++j) {
          Real* dvj = dv.row(j) + off;
          const Real av = aur[j];
          if (av == Real(0)) continue;
          for (std::size_t t = 0; t < dh; ++t) dvj[t] += av * dout[t];
        }
      }
      if (!keep.empty()) {
        for (std::size_t i = 0; i < da.size(); ++i)
          da.a[i] = keep[i] ? da.a[i] * keep_scale : Real(0);
      }

      // Softmax rows, then the scaled dot-product.
      for (std::size_t i = 0; i < nn; ++i) {
        const Real* ar = a.row(i);
        Real* dar = da.row(i);
        Real dot = 0;
        for (std::size_t j = 0; j < nn; ++j) dot += dar[j] * ar[j];
        for (std::size_t j = 0; j < nn; ++j)
          dar[j] = ar[j] * (dar[j] - dot) * scale;
      }
      for (std::size_t i = 0; i < nn; ++i) {
        const Real* dsr = da.row(i);
        Real* dqi = dqr.row(i) + off;
        for (std::size_t j = 0; j < nn; ++j) {
          const Real ds = dsr[j];
          if (ds == Real(0)) continue;
          const Real* kj = bt.kr.row(j) + off;
          for (std::size_t t = 0; t < dh; ++t) dqi[t] += ds * kj[t];
          Real* dkj = dkr.row(j) + off;
          const Real* qi = bt.qr.row(i) + off;
          for (std::size_t t = 0; t < dh; ++t) dkj[t] += ds * qi[t];
        }
      }
    }

    // Undo the rotary mapping before the Q/K affines.
    if (pe_family(cfg.pe) == PeFamily::Rope) {
      for (int h = 0; h < cfg.num_heads; ++h) {
        const std::size_t off = static_cast<std::size_t>(h) * dh;
        Mat<Real> gq(nn, dh), gk(nn, dh);
        for (std::size_t i = 0; i < nn; ++i) {
          std::copy(dqr.row(i) + off, dqr.row(i) + off + dh, gq.row(i));
          std::copy(dkr.row(i) + off, dkr.row(i) + off + dh, gk.row(i));
        }
        rope_rotate_backward_inplace<Real>(
            gq, tr.positions, static_cast<Real>(cfg.rope_theta_base),
            rope_denom);
        rope_rotate_backward_inplace<Real>(
            gk, tr.positions, static_cast<Real>(cfg.rope_theta_base),
            rope_denom);
        for (std::size_t i = 0; i < nn; ++i) {
          std::copy(gq.row(i), gq.row(i) + dh, dqr.row(i) + off);
          std::copy(gk.row(i), gk.row(i) + dh, dkr.row(i) + off);
        }
      }
    }

    // Q/K/V affines.
    gemm_tn(in, dqr, bg.q.W, true);
    accumulate_col_sums(dqr, bg.q.b);
    gemm_nt(dqr, bw.q.W, din, true);
    gemm_tn(in, dkr, bg.k.W, true);
    accumulate_col_sums(dkr, bg.k.b);
    gemm_nt(dkr, bw.k.W, din, true);
    gemm_tn(in, dv, bg.v.W, true);
    accumulate_col_sums(dv, bg.v.b);
    gemm_nt(dv, bw.v.W, din, true);

    dz = std::move(din);
  }

  // Embedding stage: dropout, additive PE, input projection.
  detail::dropout_backward_inplace(dz, tr.embed_keep, cfg.dropout);
  if (pe_family(cfg.pe) == PeFamily::Fourier) {
    pe_fourier_freq_grad<Real>(tr.positions, w.fourier_freqs, dz,
                               g.fourier_freqs);
  }
  for (std::size_t i = 0; i < nn; ++i) {
    const float* xr = flow.packets.row(i);
    const Real* dzr = dz.row(i);
    for (std::size_t c = 0; c < static_cast<std::size_t>(cfg.packet_len);
         ++c) {
      const Real xv = static_cast<Real>(xr[c]);
      if (xv == Real(0)) continue;
      Real* gw = g.input.W.row(c);
      for (std::size_t j = 0; j < dm; ++j) gw[j] += xv * dzr[j];
    }
    for (std::size_t j = 0; j < dm; ++j) g.input.b[j] += dzr[j];
  }
}

}  // namespace eids::tinyformer
