#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "eids/core/error.hpp"
#include "eids/core/rng.hpp"
#include "eids/flowcap/packet.hpp"

namespace eids::augment {

using flowcap::FlowRecord;

struct AugConfig {
  float jitter_frac = 0.7f;
  std::vector<float> scale_set{0.5f, 0.75f, 1.0f, 1.25f, 1.5f};
  float drop_coeff = 0.25f;
  float drop_bias = 0.5f;
  float insert_coeff = 0.15f;
  float insert_bias = 0.5f;
  int noise_pkt_div = 3;
  int noise_byte_div = 100;
  float noise_sigma = 0.1f;
  int oversample_factor = 5;
  std::uint64_t seed = 0x5eed;

  void validate() const {
    if (!(jitter_frac >= 0.0f && jitter_frac < 1.0f))
      throw InvalidSpec("jitter_frac must be in [0, 1)");
    if (scale_set.empty()) throw InvalidSpec("scale_set must be non-empty");
    for (float s : scale_set)
      if (!(s > 0.0f)) throw InvalidSpec("scale factors must be > 0");
    if (noise_sigma < 0.0f) throw InvalidSpec("noise_sigma must be >= 0");
    if (noise_pkt_div < 1 || noise_byte_div < 1)
      throw InvalidSpec("noise divisors must be >= 1");
    if (oversample_factor < 1)
      throw InvalidSpec("oversample_factor must be >= 1");
  }

  // AugConfig that makes the whole pipeline the identity; used by tests.
  static AugConfig identity() {
    AugConfig c;
    c.jitter_frac = 0.0f;
    c.scale_set = {1.0f};
    c.drop_coeff = 0.0f;
    c.insert_coeff = 0.0f;
    c.noise_sigma = 0.0f;
    c.noise_pkt_div = 1;
    c.noise_byte_div = 1;
    c.oversample_factor = 1;
    return c;
  }
};

// Sub-stream identifiers for the per-stage RNG derivation.
enum class AugStage : std::uint64_t {
  Jitter = 1,
  Scale = 2,
  Drop = 3,
  Insert = 4,
  Noise = 5,
};

// The k-packet prefix of a flow, as an independent record.
inline FlowRecord subflow_prefix(const FlowRecord& rec, int k) {
  const int n = rec.valid_len();
  if (k < 1 || k > n) throw ShapeMismatch("subflow prefix out of range");
  FlowRecord out;
  out.key = rec.key;
  out.label = rec.label;
  out.packets = Mat<float>(static_cast<std::size_t>(k), rec.packets.cols);
  std::copy(rec.packets.a.begin(),
            rec.packets.a.begin() +
                static_cast<std::ptrdiff_t>(k * rec.packets.cols),
            out.packets.a.begin());
  out.timestamps.assign(rec.timestamps.begin(), rec.timestamps.begin() + k);
  out.mask.assign(static_cast<std::size_t>(k), 1);
  return out;
}

// All prefixes of a flow, shortest first: the early-classification samples.
inline std::vector<FlowRecord> make_subflows(const FlowRecord& rec) {
  const int n = rec.valid_len();
  if (n < 1) throw EmptyFlow("cannot generate subflows of an empty record");
  std::vector<FlowRecord> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int k = 1; k <= n; ++k) out.push_back(subflow_prefix(rec, k));
  return out;
}

namespace detail {

// k distinct values from [lo, hi], in draw order (partial Fisher-Yates).
inline std::vector<int> sample_distinct(Rng& rng, int k, int lo, int hi) {
  std::vector<int> pool(static_cast<std::size_t>(hi - lo + 1));
  std::iota(pool.begin(), pool.end(), lo);
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) {
    const auto j = static_cast<std::size_t>(
        rng.uniform_int(static_cast<std::uint64_t>(pool.size() - 1)));
    out.push_back(pool[j]);
    pool[j] = pool.back();
    pool.pop_back();
  }
  return out;
}

inline void erase_row(Mat<float>& m, std::size_t row) {
  m.a.erase(m.a.begin() + static_cast<std::ptrdiff_t>(row * m.cols),
            m.a.begin() + static_cast<std::ptrdiff_t>((row + 1) * m.cols));
  --m.rows;
}

inline void insert_zero_row(Mat<float>& m, std::size_t row) {
  m.a.insert(m.a.begin() + static_cast<std::ptrdiff_t>(row * m.cols), m.cols,
             0.0f);
  ++m.rows;
}

}  // namespace detail

// Perturbs arrival times by at most jitter_frac of the smallest adjacent
// gap (computed from the pre-perturbation timestamps). The first packet is
// the flow's t=0 anchor and never moves; afterwards the timestamp vector
// is re-sorted ascending and re-based so it still starts at 0.
inline FlowRecord jitter(FlowRecord rec, const AugConfig& cfg, Rng& rng) {
  const std::size_t n = static_cast<std::size_t>(rec.valid_len());
  if (n < 2) return rec;
  const std::vector<float> orig(rec.timestamps.begin(),
                                rec.timestamps.begin() +
                                    static_cast<std::ptrdiff_t>(n));
  for (std::size_t i = 1; i < n; ++i) {
    const double left = static_cast<double>(orig[i]) - orig[i - 1];
    const double t_min =
        (i + 1 < n)
            ? std::min(left, static_cast<double>(orig[i + 1]) - orig[i])
            : left;
    const double bound = static_cast<double>(cfg.jitter_frac) * t_min;
    const double delta = rng.uniform(-bound, bound);
    rec.timestamps[i] = static_cast<float>(orig[i] + delta);
  }
  std::sort(rec.timestamps.begin(),
            rec.timestamps.begin() + static_cast<std::ptrdiff_t>(n));
  const float base = rec.timestamps[0];
  for (std::size_t i = 0; i < n; ++i) rec.timestamps[i] -= base;
  rec.timestamps[0] = 0.0f;
  return rec;
}

// Multiplies every inter-packet gap by a factor drawn from scale_set and
// rebuilds the timestamps cumulatively from 0.
inline FlowRecord traffic_scale(FlowRecord rec, const AugConfig& cfg,
                                Rng& rng) {
  const std::size_t n = static_cast<std::size_t>(rec.valid_len());
  const float s = cfg.scale_set[static_cast<std::size_t>(
      rng.uniform_int(cfg.scale_set.size() - 1))];
  if (s == 1.0f || n < 2) return rec;
  float prev_orig = rec.timestamps[0];
  float acc = 0.0f;
  rec.timestamps[0] = 0.0f;
  for (std::size_t i = 1; i < n; ++i) {
    const float gap = rec.timestamps[i] - prev_orig;
    prev_orig = rec.timestamps[i];
    acc += s * gap;
    rec.timestamps[i] = acc;
  }
  return rec;
}

inline int max_drop_count(int n, const AugConfig& cfg) {
  return std::max(
      0, static_cast<int>(std::floor(static_cast<double>(cfg.drop_coeff) * n -
                                     cfg.drop_bias)));
}

inline int max_insert_count(int n, const AugConfig& cfg) {
  return std::max(0, static_cast<int>(std::floor(
                         static_cast<double>(cfg.insert_coeff) * n -
                         cfg.insert_bias)));
}

// Removes up to ⌊drop_coeff·n − drop_bias⌋ packets. Position 0 is never
// dropped; survivors keep their absolute timestamps.
inline FlowRecord packet_drop(FlowRecord rec, const AugConfig& cfg, Rng& rng) {
  const int n = rec.valid_len();
  const int max_drop = max_drop_count(n, cfg);
  const int count =
      static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(max_drop)));
  if (count == 0) return rec;
  std::vector<int> victims = detail::sample_distinct(rng, count, 1, n - 1);
  std::sort(victims.rbegin(), victims.rend());
  for (int v : victims) {
    detail::erase_row(rec.packets, static_cast<std::size_t>(v));
    rec.timestamps.erase(rec.timestamps.begin() + v);
    rec.mask.erase(rec.mask.begin() + v);
  }
  return rec;
}

// Inserts up to ⌊insert_coeff·n − insert_bias⌋ all-zero packets, capped so
// the flow never exceeds max_flow_len. Slots are uniform over the gaps
// after position 0; an inserted packet takes the midpoint of its
// neighbours' timestamps (after the last packet: last + mean gap).
inline FlowRecord packet_insert(FlowRecord rec, const AugConfig& cfg,
                                int max_flow_len, Rng& rng) {
  const int n = rec.valid_len();
  const int max_ins = max_insert_count(n, cfg);
  int count =
      static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(max_ins)));
  count = std::min(count, max_flow_len - n);
  for (int ins = 0; ins < count; ++ins) {
    const int m = rec.valid_len();
    const int slot =
        1 + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(m - 1)));
    float ts;
    if (slot < m) {
      ts = (rec.timestamps[static_cast<std::size_t>(slot) - 1] +
            rec.timestamps[static_cast<std::size_t>(slot)]) /
           2.0f;
    } else {
      const float mean_gap =
          m > 1 ? rec.timestamps[static_cast<std::size_t>(m) - 1] /
                      static_cast<float>(m - 1)
                : 0.0f;
      ts = rec.timestamps[static_cast<std::size_t>(m) - 1] + mean_gap;
    }
    detail::insert_zero_row(rec.packets, static_cast<std::size_t>(slot));
    rec.timestamps.insert(rec.timestamps.begin() + slot, ts);
    rec.mask.insert(rec.mask.begin() + slot, 1);
  }
  return rec;
}

// Adds Gaussian noise to a few bytes of a few packets; the result is
// clamped back into [0,1] to keep the normalization contract.
inline FlowRecord noise_inject(FlowRecord rec, const AugConfig& cfg,
                               Rng& rng) {
  const int n = rec.valid_len();
  const int d = static_cast<int>(rec.packets.cols);
  const int max_pkts = n / cfg.noise_pkt_div;
  const int pkt_count = static_cast<int>(
      rng.uniform_int(static_cast<std::uint64_t>(max_pkts)));
  if (pkt_count == 0) return rec;
  const std::vector<int> pkts =
      detail::sample_distinct(rng, pkt_count, 0, n - 1);
  const int max_bytes = d / cfg.noise_byte_div;
  for (int p : pkts) {
    const int byte_count = static_cast<int>(
        rng.uniform_int(static_cast<std::uint64_t>(max_bytes)));
    if (byte_count == 0) continue;
    const std::vector<int> cols =
        detail::sample_distinct(rng, byte_count, 0, d - 1);
    float* row = rec.packets.row(static_cast<std::size_t>(p));
    for (int c : cols) {
      const float noisy = row[c] + static_cast<float>(rng.normal(
                                       0.0, static_cast<double>(cfg.noise_sigma)));
      row[c] = std::clamp(noisy, 0.0f, 1.0f);
    }
  }
  return rec;
}

// The five augmentations in order: jitter, scaling, drop, insertion, noise.
// Each stage draws from its own sub-stream of (seed, epoch, sample index),
// so samples can be augmented in parallel or replayed in isolation with
// identical results.
inline FlowRecord augment_pipeline(FlowRecord rec, const AugConfig& cfg,
                                   int max_flow_len, std::uint64_t epoch,
                                   std::uint64_t sample_index) {
  auto stage_rng = [&](AugStage s) {
    return Rng::derive(cfg.seed, epoch, sample_index,
                       static_cast<std::uint64_t>(s));
  };
  Rng r1 = stage_rng(AugStage::Jitter);
  rec = jitter(std::move(rec), cfg, r1);
  Rng r2 = stage_rng(AugStage::Scale);
  rec = traffic_scale(std::move(rec), cfg, r2);
  Rng r3 = stage_rng(AugStage::Drop);
  rec = packet_drop(std::move(rec), cfg, r3);
  Rng r4 = stage_rng(AugStage::Insert);
  rec = packet_insert(std::move(rec), cfg, max_flow_len, r4);
  Rng r5 = stage_rng(AugStage::Noise);
  rec = noise_inject(std::move(rec), cfg, r5);
  return rec;
}

// Zero-pads a record to max_flow_len rows and extends the mask with
// `false` entries. Padded timestamps are 0; the mask keeps them inert.
inline FlowRecord pad_and_mask(FlowRecord rec, int max_flow_len) {
  const auto n = rec.packets.rows;
  const auto cap = static_cast<std::size_t>(max_flow_len);
  if (n > cap) throw ShapeMismatch("flow longer than max_flow_len");
  rec.packets.a.resize(cap * rec.packets.cols, 0.0f);
  rec.packets.rows = cap;
  rec.timestamps.resize(cap, 0.0f);
  rec.mask.resize(cap, 0);
  return rec;
}

// Index list realizing deterministic oversampling: every base sample
// appears exactly `factor` times. Entries reference base records; the
// per-epoch augmentation is what differentiates the copies.
inline std::vector<std::uint32_t> oversample_indices(std::size_t base_count,
                                                     int factor) {
  if (factor < 1) throw InvalidSpec("oversample factor must be >= 1");
  std::vector<std::uint32_t> out;
  out.reserve(base_count * static_cast<std::size_t>(factor));
  for (std::size_t i = 0; i < base_count; ++i)
    for (int r = 0; r < factor; ++r)
      out.push_back(static_cast<std::uint32_t>(i));
  return out;
}

}  // namespace eids::augment
