#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "eids/core/error.hpp"
#include "eids/core/rng.hpp"
#include "eids/flowcap/dataset_io.hpp"
#include "eids/flowcap/flow.hpp"
#include "eids/flowcap/pcap.hpp"

namespace eids::synthgen {

using flowcap::FlowRecord;
using flowcap::LabeledDataset;
using flowcap::Packet;
using flowcap::PrepConfig;
using nlohmann::json;

enum class TimingKind : std::uint8_t { Periodic, Bursty, HeavyTail };

struct TimingProfile {
  TimingKind kind = TimingKind::Periodic;
  // Periodic: gap = base_gap * (1 ± wobble).
  double base_gap = 0.5;
  double wobble = 0.0;
  // Bursty: burst_len short gaps, then one long gap.
  int burst_len = 4;
  double gap_short = 0.02;
  double gap_long = 2.0;
  // Heavy tail: Pareto(alpha, scale), capped at gap_cap.
  double pareto_alpha = 1.7;
  double pareto_scale = 1.0;
  double gap_cap = 60.0;
};

// One traffic class: a seeded byte template mutated per packet, plus an
// inter-arrival profile. Two classes sharing motif_seed (and lengths) emit
// byte-identical flows that differ only in their timestamps — the probe
// for whether a model actually uses timing.
struct ClassProfile {
  std::string name;
  std::uint64_t motif_seed = 1;
  int payload_len = 128;
  int mutate_bytes = 8;
  TimingProfile timing;
  int len_lo = 30, len_hi = 30;  // flow length range (packets)
};

struct SynthSpec {
  std::vector<ClassProfile> classes;
  int flows_per_class = 3;
  std::uint64_t seed = 1;
  PrepConfig prep;

  void validate() const {
    prep.validate();
    if (classes.size() < 2) throw InvalidSpec("need at least two classes");
    if (classes.size() > 200) throw InvalidSpec("too many classes");
    if (flows_per_class < 1 || flows_per_class > 200)
      throw InvalidSpec("flows_per_class must be in [1, 200]");
    for (const auto& c : classes) {
      if (c.name.empty()) throw InvalidSpec("class name must be non-empty");
      if (c.payload_len < 1) throw InvalidSpec("payload_len must be >= 1");
      if (c.mutate_bytes < 0 || c.mutate_bytes > c.payload_len)
        throw InvalidSpec("mutate_bytes out of range");
      if (c.len_lo < 1 || c.len_hi < c.len_lo ||
          c.len_hi > prep.max_flow_len)
        throw InvalidSpec("flow length range out of [1, max_flow_len]");
    }
  }
};

// Everything one generation run produces: the prepared records plus the
// raw frames they came from, so the same flows can be written to a pcap
// and pushed back through the preparation pipeline unchanged.
struct SynthOutput {
  LabeledDataset dataset;
  std::vector<Packet> frames;
};

namespace detail {

inline double draw_gap(const TimingProfile& t, int gap_index, Rng& rng) {
  switch (t.kind) {
    case TimingKind::Periodic:
      return t.base_gap * (1.0 + t.wobble * (2.0 * rng.uniform01() - 1.0));
    case TimingKind::Bursty:
      return ((gap_index + 1) % (t.burst_len + 1) == 0) ? t.gap_long
                                                        : t.gap_short;
    case TimingKind::HeavyTail: {
      const double u = 1.0 - rng.uniform01();  // (0, 1]
      const double g = t.pareto_scale * std::pow(u, -1.0 / t.pareto_alpha);
      return std::min(g, t.gap_cap);
    }
  }
  return t.base_gap;
}

inline double quantize_us(double ts) {
  return std::round(ts * 1e6) / 1e6;
}

// Ethernet + IPv4 + TCP frame around the payload. Addresses and most
// header fields are placeholders — preprocessing strips or ignores them —
// but the layout is valid enough for any pcap tool to read.
inline std::vector<std::uint8_t> build_frame(std::uint32_t ip_src,
                                             std::uint32_t ip_dst,
                                             std::uint16_t sport,
                                             std::uint16_t dport,
                                             const std::vector<std::uint8_t>&
                                                 payload) {
  std::vector<std::uint8_t> f;
  f.reserve(14 + 20 + 20 + payload.size());
  const std::uint8_t dst_mac[6] = {0x02, 0, 0, 0, 0, 0x01};
  const std::uint8_t src_mac[6] = {0x02, 0, 0, 0, 0, 0x02};
  f.insert(f.end(), dst_mac, dst_mac + 6);
  f.insert(f.end(), src_mac, src_mac + 6);
  f.push_back(0x08);
  f.push_back(0x00);
  const auto total_len = static_cast<std::uint16_t>(20 + 20 + payload.size());
  const std::uint8_t ip[20] = {
      0x45, 0x00,
      static_cast<std::uint8_t>(total_len >> 8),
      static_cast<std::uint8_t>(total_len & 0xff),
      0x00, 0x00,        // identification
      0x40, 0x00,        // flags: don't fragment
      0x40, 0x06,        // TTL 64, TCP
      0x00, 0x00,        // checksum (not validated downstream)
      static_cast<std::uint8_t>(ip_src >> 24),
      static_cast<std::uint8_t>(ip_src >> 16),
      static_cast<std::uint8_t>(ip_src >> 8),
      static_cast<std::uint8_t>(ip_src),
      static_cast<std::uint8_t>(ip_dst >> 24),
      static_cast<std::uint8_t>(ip_dst >> 16),
      static_cast<std::uint8_t>(ip_dst >> 8),
      static_cast<std::uint8_t>(ip_dst)};
  f.insert(f.end(), ip, ip + 20);
  const std::uint8_t tcp[20] = {
      static_cast<std::uint8_t>(sport >> 8),
      static_cast<std::uint8_t>(sport & 0xff),
      static_cast<std::uint8_t>(dport >> 8),
      static_cast<std::uint8_t>(dport & 0xff),
      0, 0, 0, 1,   // seq
      0, 0, 0, 1,   // ack
      0x50, 0x10,   // data offset 5, ACK
      0x04, 0x00,   // window
      0x00, 0x00,   // checksum
      0x00, 0x00};  // urgent
  f.insert(f.end(), tcp, tcp + 20);
  f.insert(f.end(), payload.begin(), payload.end());
  return f;
}

}  // namespace detail

// Deterministic generation. Byte content is keyed by (seed, motif_seed,
// flow, packet) and flow lengths by (seed, motif_seed, flow), so classes
// sharing a motif seed emit identical bytes; timing is keyed by the class
// index and is the only thing that differs between such twins.
inline SynthOutput generate(const SynthSpec& spec) {
  spec.validate();
  SynthOutput out;
  out.dataset.prep = spec.prep;
  for (const auto& c : spec.classes) out.dataset.class_names.push_back(c.name);

  std::size_t ordinal = 0;
  for (std::size_t ci = 0; ci < spec.classes.size(); ++ci) {
    const ClassProfile& cp = spec.classes[ci];
    Rng tmpl_rng = Rng::derive(spec.seed, stream_tag("template"),
                               cp.motif_seed);
    std::vector<std::uint8_t> tmpl(static_cast<std::size_t>(cp.payload_len));
    for (auto& b : tmpl)
      b = static_cast<std::uint8_t>(tmpl_rng.uniform_int(255));

    for (int fi = 0; fi < spec.flows_per_class; ++fi, ++ordinal) {
      Rng len_rng = Rng::derive(spec.seed, stream_tag("length"),
                                cp.motif_seed, static_cast<std::uint64_t>(fi));
      const int n = cp.len_lo +
                    static_cast<int>(len_rng.uniform_int(
                        static_cast<std::uint64_t>(cp.len_hi - cp.len_lo)));
      Rng time_rng = Rng::derive(spec.seed, stream_tag("timing"),
                                 static_cast<std::uint64_t>(ci),
                                 static_cast<std::uint64_t>(fi));

      const std::uint32_t ip_a = (10u << 24) |
                                 (static_cast<std::uint32_t>(ci + 1) << 16) |
                                 (static_cast<std::uint32_t>(fi + 1) << 8) |
                                 1u;
      const std::uint32_t ip_b = ip_a + 1;
      const auto sport = static_cast<std::uint16_t>(40000 + fi);

      double ts = 1.0 + static_cast<double>(ordinal);
      std::vector<Packet> flow_frames;
      flow_frames.reserve(static_cast<std::size_t>(n));
      for (int pi = 0; pi < n; ++pi) {
        Rng pkt_rng = Rng::derive(spec.seed, stream_tag("packet"),
                                  Rng::mix(cp.motif_seed,
                                           static_cast<std::uint64_t>(fi)),
                                  static_cast<std::uint64_t>(pi));
        std::vector<std::uint8_t> payload = tmpl;
        for (int mb = 0; mb < cp.mutate_bytes; ++mb) {
          const auto pos = static_cast<std::size_t>(
              pkt_rng.uniform_int(static_cast<std::uint64_t>(
                  cp.payload_len - 1)));
          payload[pos] = static_cast<std::uint8_t>(pkt_rng.uniform_int(255));
        }
        if (pi > 0) ts += detail::draw_gap(cp.timing, pi - 1, time_rng);
        const bool a_to_b = pi % 2 == 0;
        Packet pkt;
        pkt.ts = detail::quantize_us(ts);
        pkt.bytes = a_to_b
                        ? detail::build_frame(ip_a, ip_b, sport, 80, payload)
                        : detail::build_frame(ip_b, ip_a, 80, sport, payload);
        pkt.orig_len = static_cast<std::uint32_t>(pkt.bytes.size());
        flow_frames.push_back(std::move(pkt));
      }

      FlowRecord rec = flowcap::build_flow_record(
          flowcap::filter_packets(flow_frames, spec.prep.filter), spec.prep,
          static_cast<int>(ci));
      out.dataset.records.push_back(std::move(rec));
      for (auto& p : flow_frames) out.frames.push_back(std::move(p));
    }
  }
  return out;
}

// Classic pcap of the generated frames, in timestamp order.
inline void write_pcap(const SynthOutput& out, const std::string& path) {
  std::vector<Packet> sorted = out.frames;
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const Packet& a, const Packet& b) { return a.ts < b.ts; });
  flowcap::write_pcap_file(path, sorted);
}

// Labels manifest (key → class) for pushing the pcap back through the
// preparation pipeline.
inline json labels_manifest(const SynthOutput& out) {
  json entries = json::array();
  for (const auto& rec : out.dataset.records) {
    entries.push_back(
        json{{"ip_lo", flowcap::ipv4_to_string(rec.key.ip_lo)},
             {"ip_hi", flowcap::ipv4_to_string(rec.key.ip_hi)},
             {"class", out.dataset.class_names[static_cast<std::size_t>(
                 rec.label)]}});
  }
  return json{{"classes", out.dataset.class_names},
              {"mode", "by_key"},
              {"by_key", entries}};
}

inline json timing_profile_to_json(const TimingProfile& t) {
  json j{{"kind", t.kind == TimingKind::Periodic
                      ? "periodic"
                      : (t.kind == TimingKind::Bursty ? "bursty"
                                                      : "heavy_tail")}};
  switch (t.kind) {
    case TimingKind::Periodic:
      j["base_gap"] = t.base_gap;
      j["wobble"] = t.wobble;
      break;
    case TimingKind::Bursty:
      j["burst_len"] = t.burst_len;
      j["gap_short"] = t.gap_short;
      j["gap_long"] = t.gap_long;
      break;
    case TimingKind::HeavyTail:
      j["pareto_alpha"] = t.pareto_alpha;
      j["pareto_scale"] = t.pareto_scale;
      j["gap_cap"] = t.gap_cap;
      break;
  }
  return j;
}

inline TimingProfile timing_profile_from_json(const json& j) {
  TimingProfile t;
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "periodic") t.kind = TimingKind::Periodic;
  else if (kind == "bursty") t.kind = TimingKind::Bursty;
  else if (kind == "heavy_tail") t.kind = TimingKind::HeavyTail;
  else throw InvalidSpec("unknown timing kind: " + kind);
  if (j.contains("base_gap")) t.base_gap = j.at("base_gap").get<double>();
  if (j.contains("wobble")) t.wobble = j.at("wobble").get<double>();
  if (j.contains("burst_len")) t.burst_len = j.at("burst_len").get<int>();
  if (j.contains("gap_short")) t.gap_short = j.at("gap_short").get<double>();
  if (j.contains("gap_long")) t.gap_long = j.at("gap_long").get<double>();
  if (j.contains("pareto_alpha"))
    t.pareto_alpha = j.at("pareto_alpha").get<double>();
  if (j.contains("pareto_scale"))
    t.pareto_scale = j.at("pareto_scale").get<double>();
  if (j.contains("gap_cap")) t.gap_cap = j.at("gap_cap").get<double>();
  return t;
}

inline json spec_to_json(const SynthSpec& spec) {
  json classes = json::array();
  for (const auto& c : spec.classes) {
    classes.push_back(json{{"name", c.name},
                           {"motif_seed", c.motif_seed},
                           {"payload_len", c.payload_len},
                           {"mutate_bytes", c.mutate_bytes},
                           {"timing", timing_profile_to_json(c.timing)},
                           {"len_lo", c.len_lo},
                           {"len_hi", c.len_hi}});
  }
  return json{{"classes", classes},
              {"flows_per_class", spec.flows_per_class},
              {"seed", spec.seed},
              {"prep", flowcap::prep_config_to_json(spec.prep)}};
}

inline SynthSpec spec_from_json(const json& j) {
  SynthSpec spec;
  if (j.contains("prep"))
    spec.prep = flowcap::prep_config_from_json(j.at("prep"));
  spec.flows_per_class = j.value("flows_per_class", 3);
  spec.seed = j.value("seed", 1ull);
  for (const auto& cj : j.at("classes")) {
    ClassProfile c;
    c.name = cj.at("name").get<std::string>();
    c.motif_seed = cj.value("motif_seed", 1ull);
    c.payload_len = cj.value("payload_len", 128);
    c.mutate_bytes = cj.value("mutate_bytes", 8);
    if (cj.contains("timing"))
      c.timing = timing_profile_from_json(cj.at("timing"));
    c.len_lo = cj.value("len_lo", 30);
    c.len_hi = cj.value("len_hi", 30);
    spec.classes.push_back(std::move(c));
  }
  spec.validate();
  return spec;
}

// Desk-scale six-class preset mirroring the shape of a small web-attack
// capture: three flows per class, full-length flows, one class ("slowtwin")
// byte-identical to benign and separable only by its inter-arrival times.
inline SynthSpec six_class_preset(std::uint64_t seed = 1) {
  SynthSpec spec;
  spec.seed = seed;
  spec.flows_per_class = 3;
  spec.prep = PrepConfig{};

  auto cls = [&](const std::string& name, std::uint64_t motif, int plen,
                 int mut, TimingProfile t) {
    ClassProfile c;
    c.name = name;
    c.motif_seed = motif;
    c.payload_len = plen;
    c.mutate_bytes = mut;
    c.timing = t;
    c.len_lo = c.len_hi = 30;
    return c;
  };
  TimingProfile benign_t;
  benign_t.kind = TimingKind::Periodic;
  benign_t.base_gap = 0.2;
  benign_t.wobble = 0.2;
  TimingProfile bulk_t;
  bulk_t.kind = TimingKind::Periodic;
  bulk_t.base_gap = 0.05;
  bulk_t.wobble = 0.1;
  TimingProfile beacon_t;
  beacon_t.kind = TimingKind::Bursty;
  beacon_t.burst_len = 5;
  beacon_t.gap_short = 0.02;
  beacon_t.gap_long = 3.0;
  TimingProfile ragged_t;
  ragged_t.kind = TimingKind::HeavyTail;
  ragged_t.pareto_alpha = 1.6;
  ragged_t.pareto_scale = 0.4;
  TimingProfile micro_t;
  micro_t.kind = TimingKind::Periodic;
  micro_t.base_gap = 0.01;
  micro_t.wobble = 0.3;
  TimingProfile slow_t;
  slow_t.kind = TimingKind::HeavyTail;
  slow_t.pareto_alpha = 1.6;
  slow_t.pareto_scale = 2.5;

  spec.classes = {
      cls("benign", 101, 160, 6, benign_t),
      cls("bulkpush", 202, 220, 6, bulk_t),
      cls("beacon", 303, 96, 4, beacon_t),
      cls("ragged", 404, 200, 10, ragged_t),
      cls("microburst", 505, 64, 3, micro_t),
      cls("slowtwin", 101, 160, 6, slow_t),  // bytes == benign, timing differs
  };
  return spec;
}

// Two classes with identical bytes and lengths, separable only by their
// inter-arrival times: the dedicated dynamic-vs-static encoding probe.
inline SynthSpec timing_pair_preset(std::uint64_t seed = 1,
                                    int flows_per_class = 8) {
  SynthSpec spec;
  spec.seed = seed;
  spec.flows_per_class = flows_per_class;
  spec.prep = PrepConfig{};

  TimingProfile fast;
  fast.kind = TimingKind::Periodic;
  fast.base_gap = 0.08;
  fast.wobble = 0.1;
  TimingProfile slow;
  slow.kind = TimingKind::HeavyTail;
  slow.pareto_alpha = 1.6;
  slow.pareto_scale = 1.2;

  ClassProfile benign;
  benign.name = "steady";
  benign.motif_seed = 900;
  benign.payload_len = 140;
  benign.mutate_bytes = 5;
  benign.timing = fast;
  benign.len_lo = 12;
  benign.len_hi = 18;
  ClassProfile twin = benign;
  twin.name = "laggard";
  twin.timing = slow;
  spec.classes = {benign, twin};
  return spec;
}

}  // namespace eids::synthgen
