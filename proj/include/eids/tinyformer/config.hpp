#pragma once

#include <string>

#include "eids/core/error.hpp"

namespace eids::tinyformer {

// The six positional-encoding variants plus "none". Static variants index
// by sequence position; the dynamic temporal variants index by the packet
// timestamps instead, so irregular inter-arrival times become visible to
// the encoder.
enum class PeKind {
  None,
  Sin,
  Fourier,
  Rope,
  DynSin,
  DynFourier,
  DynRope,
};

enum class PeFamily { None, Sin, Fourier, Rope };

inline PeFamily pe_family(PeKind k) {
  switch (k) {
    case PeKind::None: return PeFamily::None;
    case PeKind::Sin:
    case PeKind::DynSin: return PeFamily::Sin;
    case PeKind::Fourier:
    case PeKind::DynFourier: return PeFamily::Fourier;
    case PeKind::Rope:
    case PeKind::DynRope: return PeFamily::Rope;
  }
  return PeFamily::None;
}

inline bool pe_is_dynamic(PeKind k) {
  return k == PeKind::DynSin || k == PeKind::DynFourier ||
         k == PeKind::DynRope;
}

inline std::string to_string(PeKind k) {
  switch (k) {
    case PeKind::None: return "none";
    case PeKind::Sin: return "sin";
    case PeKind::Fourier: return "fourier";
    case PeKind::Rope: return "rope";
    case PeKind::DynSin: return "dyn_sin";
    case PeKind::DynFourier: return "dyn_fourier";
    case PeKind::DynRope: return "dyn_rope";
  }
  return "none";
}

inline PeKind pe_kind_from_string(const std::string& s) {
  if (s == "none") return PeKind::None;
  if (s == "sin") return PeKind::Sin;
  if (s == "fourier") return PeKind::Fourier;
  if (s == "rope") return PeKind::Rope;
  if (s == "dyn_sin") return PeKind::DynSin;
  if (s == "dyn_fourier") return PeKind::DynFourier;
  if (s == "dyn_rope") return PeKind::DynRope;
  throw InvalidSpec("unknown positional encoding kind: " + s);
}

struct ModelConfig {
  int packet_len = 448;   // d: input vector length per packet
  int max_flow_len = 30;  // N: maximum sequence length
  int model_dim = 8;      // d_m: hidden dimension
  int num_blocks = 1;     // L
  int num_heads = 4;      // h
  int head_dim = 8;       // d_h
  int ffn_dim = 16;       // FFN inner dimension
  float dropout = 0.1f;
  int num_classes = 6;
  PeKind pe = PeKind::DynSin;

  // RoPE angle schedule: theta_i = base^(-i / D). The denominator D
  // defaults to model_dim; set rope_theta_over_head_dim to use head_dim.
  float rope_theta_base = 10000.0f;
  bool rope_theta_over_head_dim = false;

  // Multiplier applied to timestamps before a dynamic encoding sees them.
  float time_scale = 1.0f;

  // When set, the early-detection loss divides by the sum of the sample
  // weights instead of using the plain weighted sum.
  bool edl_normalize = false;

  float ln_eps = 1e-5f;

  int attn_width() const { return num_heads * head_dim; }

  void validate() const {
    if (packet_len < 1 || max_flow_len < 1 || model_dim < 1 ||
        num_blocks < 1 || num_heads < 1 || head_dim < 1 || ffn_dim < 1 ||
        num_classes < 1)
      throw InvalidSpec("model dimensions must all be >= 1");
    if (model_dim % 2 != 0)
      throw InvalidSpec("model_dim must be even (sine/cosine pairs)");
    if (head_dim % 2 != 0)
      throw InvalidSpec("head_dim must be even (rotation pairs)");
    if (!(dropout >= 0.0f && dropout < 1.0f))
      throw InvalidSpec("dropout must be in [0, 1)");
    if (!(rope_theta_base > 0.0f))
      throw InvalidSpec("rope_theta_base must be > 0");
    if (!(time_scale > 0.0f)) throw InvalidSpec("time_scale must be > 0");
  }
};

}  // namespace eids::tinyformer
