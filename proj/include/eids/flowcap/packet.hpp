#pragma once

#include <compare>
#include <cstdint>
#include <string>
#include <vector>

#include "eids/core/error.hpp"
#include "eids/core/mat.hpp"

namespace eids::flowcap {

// A captured link-layer frame. `ts` is seconds since the capture epoch at
// the file's native resolution; `bytes` may be shorter than `orig_len` when
// the capture used a snap length.
struct Packet {
  double ts = 0.0;
  std::vector<std::uint8_t> bytes;
  std::uint32_t orig_len = 0;
};

// Protocol selector used in flow keys and filters. HTTP means TCP with
// port 80 on either side; everything else keys on the raw IP protocol.
enum class ProtoKind : std::uint8_t { Tcp, Udp, Icmp, Http, Arp, Other };

struct Proto {
  ProtoKind kind = ProtoKind::Other;
  std::uint8_t ip_proto = 0;  // raw IPv4 protocol number; 0 for ARP

  friend auto operator<=>(const Proto&, const Proto&) = default;
};

inline std::string to_string(ProtoKind k) {
  switch (k) {
    case ProtoKind::Tcp: return "tcp";
    case ProtoKind::Udp: return "udp";
    case ProtoKind::Icmp: return "icmp";
    case ProtoKind::Http: return "http";
    case ProtoKind::Arp: return "arp";
    case ProtoKind::Other: return "other";
  }
  return "other";
}

inline ProtoKind proto_kind_from_string(const std::string& s) {
  if (s == "tcp") return ProtoKind::Tcp;
  if (s == "udp") return ProtoKind::Udp;
  if (s == "icmp") return ProtoKind::Icmp;
  if (s == "http") return ProtoKind::Http;
  if (s == "arp") return ProtoKind::Arp;
  if (s == "other") return ProtoKind::Other;
  throw InvalidSpec("unknown protocol selector: " + s);
}

enum class FlowVariant : std::uint8_t { ThreeTuple, FiveTuple };

// Host-pair flow key. IPs are stored canonically ordered so that both
// directions of an exchange map to the same key; with the 5-tuple variant
// each port stays attached to its endpoint.
struct FlowKey {
  std::uint32_t ip_lo = 0, ip_hi = 0;
  Proto proto;
  FlowVariant variant = FlowVariant::ThreeTuple;
  std::uint16_t port_lo = 0, port_hi = 0;  // meaningful iff FiveTuple

  friend auto operator<=>(const FlowKey&, const FlowKey&) = default;
};

inline std::string ipv4_to_string(std::uint32_t ip) {
  return std::to_string((ip >> 24) & 0xff) + "." +
         std::to_string((ip >> 16) & 0xff) + "." +
         std::to_string((ip >> 8) & 0xff) + "." + std::to_string(ip & 0xff);
}

inline std::uint32_t ipv4_from_string(const std::string& s) {
  std::uint32_t parts[4] = {0, 0, 0, 0};
  int pi = 0;
  std::uint32_t cur = 0;
  bool have_digit = false;
  for (char c : s) {
    if (c >= '0' && c <= '9') {
      cur = cur * 10 + static_cast<std::uint32_t>(c - '0');
      if (cur > 255) throw InvalidSpec("bad IPv4 literal: " + s);
      have_digit = true;
    } else if (c == '.') {
      if (!have_digit || pi >= 3) throw InvalidSpec("bad IPv4 literal: " + s);
      parts[pi++] = cur;
      cur = 0;
      have_digit = false;
    } else {
      throw InvalidSpec("bad IPv4 literal: " + s);
    }
  }
  if (!have_digit || pi != 3) throw InvalidSpec("bad IPv4 literal: " + s);
  parts[3] = cur;
  return (parts[0] << 24) | (parts[1] << 16) | (parts[2] << 8) | parts[3];
}

inline std::string to_string(const FlowKey& k) {
  std::string s = ipv4_to_string(k.ip_lo);
  if (k.variant == FlowVariant::FiveTuple)
    s += ":" + std::to_string(k.port_lo);
  s += "-" + ipv4_to_string(k.ip_hi);
  if (k.variant == FlowVariant::FiveTuple)
    s += ":" + std::to_string(k.port_hi);
  s += "/" + to_string(k.proto.kind);
  if (k.proto.kind == ProtoKind::Other)
    s += std::to_string(k.proto.ip_proto);
  return s;
}

enum class FilterKind : std::uint8_t { Http, Arp, Icmp, All };

inline FilterKind parse_filter(const std::string& name) {
  if (name == "http") return FilterKind::Http;
  if (name == "arp") return FilterKind::Arp;
  if (name == "icmp") return FilterKind::Icmp;
  if (name == "all") return FilterKind::All;
  throw UnknownFilter("unknown packet filter: " + name);
}

inline std::string to_string(FilterKind f) {
  switch (f) {
    case FilterKind::Http: return "http";
    case FilterKind::Arp: return "arp";
    case FilterKind::Icmp: return "icmp";
    case FilterKind::All: return "all";
  }
  return "all";
}

enum class NonMonotonePolicy : std::uint8_t { Error, Clamp };

struct PrepConfig {
  int packet_len = 448;    // bytes kept per packet after header stripping
  int max_flow_len = 30;   // packets kept per flow
  FilterKind filter = FilterKind::Http;
  FlowVariant flow_variant = FlowVariant::ThreeTuple;
  NonMonotonePolicy on_nonmonotone = NonMonotonePolicy::Error;

  void validate() const {
    if (packet_len <= 0) throw InvalidSpec("packet_len must be > 0");
    if (max_flow_len < 1) throw InvalidSpec("max_flow_len must be >= 1");
  }
};

// One preprocessed flow: an n×d matrix of byte values scaled to [0,1], the
// relative timestamp vector (first entry 0), a class label (-1 when
// unlabeled) and the attention mask. Rows past the mask are padding.
struct FlowRecord {
  FlowKey key;
  Mat<float> packets;
  std::vector<float> timestamps;
  int label = -1;
  std::vector<std::uint8_t> mask;

  // Number of leading valid positions. Masks are always a true-prefix.
  int valid_len() const {
    std::size_t n = 0;
    while (n < mask.size() && mask[n]) ++n;
    return static_cast<int>(n);
  }
};

// Throws unless `rec` satisfies every flow-record invariant.
inline void check_flow_record(const FlowRecord& rec, int max_flow_len) {
  const std::size_t n = static_cast<std::size_t>(rec.valid_len());
  if (n < 1) throw EmptyFlow("flow record has no valid packets");
  if (n > static_cast<std::size_t>(max_flow_len))
    throw ShapeMismatch("flow record longer than maximum flow length");
  if (rec.packets.rows != rec.mask.size() ||
      rec.timestamps.size() != rec.mask.size())
    throw ShapeMismatch("flow record field lengths disagree");
  for (std::size_t i = n; i < rec.mask.size(); ++i)
    if (rec.mask[i]) throw ShapeMismatch("mask is not a true-prefix");
  if (rec.timestamps[0] != 0.0f)
    throw ViolatedMonotonicity("timestamps must start at 0");
  for (std::size_t i = 1; i < n; ++i)
    if (rec.timestamps[i] < rec.timestamps[i - 1])
      throw ViolatedMonotonicity("timestamps must be non-decreasing");
  for (std::size_t i = 0; i < rec.packets.size(); ++i) {
    float v = rec.packets.a[i];
    if (!(v >= 0.0f && v <= 1.0f))
      throw ShapeMismatch("packet matrix cell outside [0,1]");
  }
}

}  // namespace eids::flowcap
