#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "netssm/pcap.hpp"

namespace craft {

// Minimal Eth+IPv4+TCP packet builder for fixtures. Payload bytes are
// appended only when `payload` is non-empty; `declared_payload` sets
// the IP total length regardless, so header-only packets can still
// claim a payload the way decoded synthetic packets do.
struct TcpSpec {
  std::array<uint8_t, 4> src{10, 0, 0, 1};
  std::array<uint8_t, 4> dst{10, 0, 0, 2};
  uint16_t sport = 49152;
  uint16_t dport = 443;
  uint32_t seq = 0;
  uint32_t ack = 0;
  uint8_t flags = 0;
  uint16_t window = 0xFFFF;
  std::vector<uint8_t> options;  // caller pads to a 4-byte multiple
  std::size_t declared_payload = 0;
  std::vector<uint8_t> payload;
};

inline void put16(std::vector<uint8_t>& v, uint16_t x) {
  v.push_back(uint8_t(x >> 8));
  v.push_back(uint8_t(x));
}
inline void put32(std::vector<uint8_t>& v, uint32_t x) {
  v.push_back(uint8_t(x >> 24));
  v.push_back(uint8_t(x >> 16));
  v.push_back(uint8_t(x >> 8));
  v.push_back(uint8_t(x));
}

inline netssm::pcap::PacketRecord tcp_packet(const TcpSpec& s) {
  std::vector<uint8_t> d;
  // Ethernet
  for (int i = 0; i < 6; ++i) d.push_back(uint8_t(0x02 + i));
  for (int i = 0; i < 6; ++i) d.push_back(uint8_t(0x12 + i));
  put16(d, 0x0800);
  // IPv4, no options
  std::size_t tcp_len = 20 + s.options.size();
  std::size_t payload_len = s.payload.empty() ? s.declared_payload : s.payload.size();
  d.push_back(0x45);
  d.push_back(0);
  put16(d, uint16_t(20 + tcp_len + payload_len));
  put16(d, 0);       // id
  put16(d, 0x4000);  // DF
  d.push_back(64);   // ttl
  d.push_back(6);    // tcp
  put16(d, 0);       // checksum unused
  d.insert(d.end(), s.src.begin(), s.src.end());
  d.insert(d.end(), s.dst.begin(), s.dst.end());
  // TCP
  put16(d, s.sport);
  put16(d, s.dport);
  put32(d, s.seq);
  put32(d, s.ack);
  d.push_back(uint8_t((tcp_len / 4) << 4));
  d.push_back(s.flags);
  put16(d, s.window);
  put16(d, 0);  // checksum unused
  put16(d, 0);  // urgent
  d.insert(d.end(), s.options.begin(), s.options.end());
  d.insert(d.end(), s.payload.begin(), s.payload.end());

  netssm::pcap::PacketRecord rec;
  rec.data = std::move(d);
  rec.incl_len = rec.orig_len = uint32_t(rec.data.size());
  return rec;
}

}  // namespace craft
