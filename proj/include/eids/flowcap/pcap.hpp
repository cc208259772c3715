#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "eids/core/error.hpp"
#include "eids/flowcap/packet.hpp"

namespace eids::flowcap {

// Classic pcap only (no pcapng). Both byte orders and both timestamp
// resolutions are handled; the writer exists so synthetic captures and
// round-trip tests stay inside the toolkit.

enum class PcapResolution : std::uint8_t { Micro, Nano };

namespace detail {

inline std::uint32_t load_u32(const std::uint8_t* p, bool swap) {
  std::uint32_t v = static_cast<std::uint32_t>(p[0]) |
                    (static_cast<std::uint32_t>(p[1]) << 8) |
                    (static_cast<std::uint32_t>(p[2]) << 16) |
                    (static_cast<std::uint32_t>(p[3]) << 24);
  if (swap)
    v = ((v & 0x000000ffu) << 24) | ((v & 0x0000ff00u) << 8) |
        ((v & 0x00ff0000u) >> 8) | ((v & 0xff000000u) >> 24);
  return v;
}

}  // namespace detail

inline std::vector<Packet> parse_pcap(std::istream& in) {
  constexpr std::uint32_t kMagicMicro = 0xa1b2c3d4u;
  constexpr std::uint32_t kMagicMicroSwapped = 0xd4c3b2a1u;
  constexpr std::uint32_t kMagicNano = 0xa1b23c4du;
  constexpr std::uint32_t kMagicNanoSwapped = 0x4d3cb2a1u;
  // A record claiming more captured bytes than this is treated as corrupt.
  constexpr std::uint32_t kMaxFrameBytes = 1u << 26;

  std::uint8_t hdr[24];
  in.read(reinterpret_cast<char*>(hdr), 24);
  const auto got = static_cast<std::size_t>(in.gcount());
  if (got < 4)
    throw TruncatedHeader("pcap global header truncated at byte " +
                          std::to_string(got));
  const std::uint32_t magic = detail::load_u32(hdr, false);
  bool swap = false;
  double frac_unit = 1e-6;
  switch (magic) {
    case kMagicMicro: break;
    case kMagicMicroSwapped: swap = true; break;
    case kMagicNano: frac_unit = 1e-9; break;
    case kMagicNanoSwapped: swap = true; frac_unit = 1e-9; break;
    default:
      throw UnknownMagic("not a classic pcap file (magic 0x" + [&] {
        char buf[9];
        std::snprintf(buf, sizeof buf, "%08x", magic);
        return std::string(buf);
      }() + ")");
  }
  if (got < 24)
    throw TruncatedHeader("pcap global header truncated at byte " +
                          std::to_string(got));

  std::vector<Packet> packets;
  std::uint64_t offset = 24;
  for (;;) {
    std::uint8_t rec[16];
    in.read(reinterpret_cast<char*>(rec), 16);
    const auto rgot = static_cast<std::size_t>(in.gcount());
    if (rgot == 0) break;  // clean EOF between records
    if (rgot < 16)
      throw TruncatedRecord("pcap record header truncated at byte " +
                            std::to_string(offset + rgot));
    const std::uint32_t ts_sec = detail::load_u32(rec, swap);
    const std::uint32_t ts_frac = detail::load_u32(rec + 4, swap);
    const std::uint32_t incl_len = detail::load_u32(rec + 8, swap);
    const std::uint32_t orig_len = detail::load_u32(rec + 12, swap);
    if (incl_len > kMaxFrameBytes)
      throw TruncatedRecord("implausible capture length " +
                            std::to_string(incl_len) + " at byte " +
                            std::to_string(offset));
    Packet p;
    p.ts = static_cast<double>(ts_sec) +
           static_cast<double>(ts_frac) * frac_unit;
    p.orig_len = orig_len;
    p.bytes.resize(incl_len);
    if (incl_len > 0) {
      in.read(reinterpret_cast<char*>(p.bytes.data()), incl_len);
      const auto pgot = static_cast<std::size_t>(in.gcount());
      if (pgot < incl_len)
        throw TruncatedRecord("pcap packet data truncated at byte " +
                              std::to_string(offset + 16 + pgot));
    }
    offset += 16 + incl_len;
    packets.push_back(std::move(p));
  }
  return packets;
}

inline std::vector<Packet> parse_pcap_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot open pcap file: " + path);
  return parse_pcap(f);
}

inline std::vector<Packet> parse_pcap_bytes(
    std::span<const std::uint8_t> data) {
  std::istringstream s(
      std::string(reinterpret_cast<const char*>(data.data()), data.size()),
      std::ios::binary);
  return parse_pcap(s);
}

inline void write_pcap(std::ostream& out, std::span<const Packet> packets,
                       PcapResolution res = PcapResolution::Micro,
                       std::uint32_t link_type = 1 /* Ethernet */) {
  auto w32 = [&](std::uint32_t v) {
    std::uint8_t b[4] = {static_cast<std::uint8_t>(v),
                         static_cast<std::uint8_t>(v >> 8),
                         static_cast<std::uint8_t>(v >> 16),
                         static_cast<std::uint8_t>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
  };
  auto w16 = [&](std::uint16_t v) {
    std::uint8_t b[2] = {static_cast<std::uint8_t>(v),
                         static_cast<std::uint8_t>(v >> 8)};
    out.write(reinterpret_cast<const char*>(b), 2);
  };
  const bool nano = res == PcapResolution::Nano;
  const double unit = nano ? 1e9 : 1e6;
  w32(nano ? 0xa1b23c4du : 0xa1b2c3d4u);
  w16(2);
  w16(4);
  w32(0);       // thiszone
  w32(0);       // sigfigs
  w32(1 << 16); // snaplen
  w32(link_type);
  for (const Packet& p : packets) {
    double sec = std::floor(p.ts);
    auto frac = static_cast<std::uint64_t>(std::llround((p.ts - sec) * unit));
    auto s = static_cast<std::uint64_t>(sec);
    if (frac >= static_cast<std::uint64_t>(unit)) {  // rounding carried over
      frac -= static_cast<std::uint64_t>(unit);
      s += 1;
    }
    w32(static_cast<std::uint32_t>(s));
    w32(static_cast<std::uint32_t>(frac));
    w32(static_cast<std::uint32_t>(p.bytes.size()));
    w32(p.orig_len ? p.orig_len
                   : static_cast<std::uint32_t>(p.bytes.size()));
    out.write(reinterpret_cast<const char*>(p.bytes.data()),
              static_cast<std::streamsize>(p.bytes.size()));
  }
}

inline void write_pcap_file(const std::string& path,
                            std::span<const Packet> packets,
                            PcapResolution res = PcapResolution::Micro) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot open for writing: " + path);
  write_pcap(f, packets, res);
}

}  // namespace eids::flowcap
