#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "eids/core/error.hpp"
#include "eids/flowcap/packet.hpp"

namespace eids::flowcap {

// Minimal frame dissection: Ethernet → IPv4 (or ARP, whose payload carries
// the IPv4 pair). No reassembly, no IPv6, no VLAN tags.
struct PacketMeta {
  Proto proto;
  std::uint32_t ip_src = 0, ip_dst = 0;
  std::uint16_t sport = 0, dport = 0;
  bool has_ports = false;
};

inline std::optional<PacketMeta> classify_packet(
    std::span<const std::uint8_t> frame) {
  if (frame.size() < 14) return std::nullopt;
  const std::uint16_t ethertype =
      static_cast<std::uint16_t>(frame[12] << 8 | frame[13]);
  auto be32 = [&](std::size_t off) {
    return static_cast<std::uint32_t>(frame[off]) << 24 |
           static_cast<std::uint32_t>(frame[off + 1]) << 16 |
           static_cast<std::uint32_t>(frame[off + 2]) << 8 |
           static_cast<std::uint32_t>(frame[off + 3]);
  };
  auto be16 = [&](std::size_t off) {
    return static_cast<std::uint16_t>(frame[off] << 8 | frame[off + 1]);
  };

  if (ethertype == 0x0800) {  // IPv4
    if (frame.size() < 14 + 20) return std::nullopt;
    if ((frame[14] >> 4) != 4) return std::nullopt;
    const std::size_t ihl = (frame[14] & 0x0f) * 4u;
    if (ihl < 20 || frame.size() < 14 + ihl) return std::nullopt;
    PacketMeta m;
    m.proto.ip_proto = frame[23];
    m.ip_src = be32(26);
    m.ip_dst = be32(30);
    const std::uint8_t proto = frame[23];
    if ((proto == 6 || proto == 17) && frame.size() >= 14 + ihl + 4) {
      m.sport = be16(14 + ihl);
      m.dport = be16(14 + ihl + 2);
      m.has_ports = true;
    }
    if (proto == 6) {
      m.proto.kind = (m.has_ports && (m.sport == 80 || m.dport == 80))
                         ? ProtoKind::Http
                         : ProtoKind::Tcp;
    } else if (proto == 17) {
      m.proto.kind = ProtoKind::Udp;
    } else if (proto == 1) {
      m.proto.kind = ProtoKind::Icmp;
    } else {
      m.proto.kind = ProtoKind::Other;
    }
    return m;
  }

  if (ethertype == 0x0806) {  // ARP over Ethernet carrying IPv4
    if (frame.size() < 14 + 28) return std::nullopt;
    if (be16(14) != 1 || be16(16) != 0x0800) return std::nullopt;
    if (frame[18] != 6 || frame[19] != 4) return std::nullopt;
    PacketMeta m;
    m.proto.kind = ProtoKind::Arp;
    m.proto.ip_proto = 0;
    m.ip_src = be32(28);
    m.ip_dst = be32(38);
    return m;
  }

  return std::nullopt;
}

inline FlowKey make_flow_key(const PacketMeta& m, FlowVariant variant) {
  FlowKey k;
  k.proto = m.proto;
  k.variant = variant;
  const bool src_low =
      m.ip_src < m.ip_dst || (m.ip_src == m.ip_dst && m.sport <= m.dport);
  k.ip_lo = src_low ? m.ip_src : m.ip_dst;
  k.ip_hi = src_low ? m.ip_dst : m.ip_src;
  if (variant == FlowVariant::FiveTuple) {
    k.port_lo = src_low ? m.sport : m.dport;
    k.port_hi = src_low ? m.dport : m.sport;
  }
  return k;
}

struct FlowPartition {
  std::map<FlowKey, std::vector<Packet>> flows;
  std::size_t skipped_unparseable = 0;  // non-IPv4/ARP or mangled frames
  std::size_t skipped_overflow = 0;     // packets past the per-flow cap

  std::size_t skipped() const { return skipped_unparseable + skipped_overflow; }
};

// Groups packets into host-pair flows. Packets that cannot be keyed are
// counted, not dropped silently; flows are capped at cfg.max_flow_len
// packets (the earliest packets carry the early-detection signal).
inline FlowPartition identify_flows(std::span<const Packet> packets,
                                    const PrepConfig& cfg) {
  cfg.validate();
  FlowPartition part;
  const auto cap = static_cast<std::size_t>(cfg.max_flow_len);
  for (const Packet& p : packets) {
    auto meta = classify_packet(p.bytes);
    if (!meta) {
      ++part.skipped_unparseable;
      continue;
    }
    auto& flow = part.flows[make_flow_key(*meta, cfg.flow_variant)];
    if (flow.size() >= cap) {
      ++part.skipped_overflow;
      continue;
    }
    flow.push_back(p);
  }
  return part;
}

inline bool filter_matches(const Packet& p, FilterKind filter) {
  if (filter == FilterKind::All) return true;
  auto meta = classify_packet(p.bytes);
  if (!meta) return false;
  switch (filter) {
    case FilterKind::Http: return meta->proto.kind == ProtoKind::Http;
    case FilterKind::Arp: return meta->proto.kind == ProtoKind::Arp;
    case FilterKind::Icmp: return meta->proto.kind == ProtoKind::Icmp;
    case FilterKind::All: return true;
  }
  return false;
}

inline std::vector<Packet> filter_packets(const std::vector<Packet>& flow,
                                          FilterKind filter) {
  if (filter == FilterKind::All) return flow;
  std::vector<Packet> kept;
  for (const Packet& p : flow)
    if (filter_matches(p, filter)) kept.push_back(p);
  return kept;
}

// Converts one frame into a fixed-length normalized byte vector:
// the Ethernet header is dropped, the IPv4 source/destination address
// bytes are excised (the remainder shifts up, so the model never sees
// address-aligned artifacts), and the result is truncated or zero-padded
// to exactly d bytes, each scaled by 1/255.
inline std::vector<float> preprocess_packet(const Packet& pkt, int d) {
  const auto& f = pkt.bytes;
  if (f.size() < 14 + 20)
    throw TooShort("frame of " + std::to_string(f.size()) +
                   " bytes is shorter than Ethernet + IPv4 headers");
  const std::uint16_t ethertype =
      static_cast<std::uint16_t>(f[12] << 8 | f[13]);
  if (ethertype != 0x0800)
    throw NotIPv4("ethertype 0x" + std::to_string(ethertype) +
                  " is not IPv4");
  std::vector<float> out(static_cast<std::size_t>(d), 0.0f);
  std::size_t oi = 0;
  auto push = [&](std::uint8_t b) {
    if (oi < out.size()) out[oi++] = static_cast<float>(b) / 255.0f;
  };
  for (std::size_t i = 14; i < 14 + 12; ++i) push(f[i]);    // IP hdr pre-addr
  for (std::size_t i = 14 + 20; i < f.size(); ++i) push(f[i]);
  return out;
}

// Assembles a FlowRecord from an already filtered flow. Timestamps are
// re-based to the first packet; capture-order inversions either raise or
// clamp to the previous value depending on cfg.on_nonmonotone.
inline FlowRecord build_flow_record(const std::vector<Packet>& flow,
                                    const PrepConfig& cfg, int label) {
  if (flow.empty()) throw EmptyFlow("cannot build a record from no packets");
  auto meta = classify_packet(flow.front().bytes);
  if (!meta) throw NotIPv4("flow head frame is not keyable");

  FlowRecord rec;
  rec.key = make_flow_key(*meta, cfg.flow_variant);
  rec.label = label;
  const std::size_t n = flow.size();
  rec.packets = Mat<float>(n, static_cast<std::size_t>(cfg.packet_len));
  rec.timestamps.resize(n);
  rec.mask.assign(n, 1);
  const double t0 = flow.front().ts;
  double prev = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<float> row = preprocess_packet(flow[i], cfg.packet_len);
    std::copy(row.begin(), row.end(), rec.packets.row(i));
    double rel = flow[i].ts - t0;
    if (rel < prev) {
      if (cfg.on_nonmonotone == NonMonotonePolicy::Error)
        throw ViolatedMonotonicity(
            "timestamp goes backwards at packet " + std::to_string(i));
      rel = prev;
    }
    rec.timestamps[i] = static_cast<float>(rel);
    prev = rel;
  }
  rec.timestamps[0] = 0.0f;
  return rec;
}

}  // namespace eids::flowcap
