#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace netssm::pcap {

// One captured packet. `data` holds the raw Packet Data field.
struct PacketRecord {
  uint32_t ts_sec = 0;
  uint32_t ts_usec = 0;
  uint32_t incl_len = 0;
  uint32_t orig_len = 0;
  std::vector<uint8_t> data;

  double timestamp() const { return static_cast<double>(ts_sec) + ts_usec * 1e-6; }
  void set_timestamp(double t);

  bool operator==(const PacketRecord&) const = default;
};

struct FiveTuple {
  std::string src_ip;
  std::string dst_ip;
  uint16_t src_port = 0;
  uint16_t dst_port = 0;
  uint8_t ip_proto = 0;

  bool operator==(const FiveTuple&) const = default;
  auto operator<=>(const FiveTuple&) const = default;

  std::string to_string() const;
};

struct Trace {
  uint32_t link_type = 1;  // LINKTYPE_ETHERNET
  std::vector<PacketRecord> records;

  bool operator==(const Trace&) const = default;
};

// Empirical inter-arrival-time distribution, seconds.
struct IatDistribution {
  std::vector<double> samples;
};

Trace read_pcap(const std::vector<uint8_t>& bytes);
Trace read_pcap_file(const std::string& path);
std::vector<uint8_t> write_pcap(const Trace& trace);
void write_pcap_file(const Trace& trace, const std::string& path);

// Parsed link/network/transport view of a packet. Offsets index into
// PacketRecord::data; payload_len comes from the declared header lengths,
// not the captured length, so header-only synthetic packets report the
// payload the headers claim.
struct ParsedPacket {
  FiveTuple tuple;
  bool is_ipv6 = false;
  std::size_t ip_offset = 0;
  std::size_t ip_header_len = 0;
  std::size_t transport_offset = 0;
  std::size_t transport_header_len = 0;
  std::size_t payload_len = 0;
  // TCP only
  bool is_tcp = false;
  uint32_t seq = 0;
  uint32_t ack = 0;
  uint8_t flags = 0;
  uint16_t window = 0;
};

std::optional<ParsedPacket> parse_packet(const PacketRecord& pkt);
std::optional<FiveTuple> five_tuple(const PacketRecord& pkt);

// Canonical key for a flow: direction-sorted endpoints + protocol when
// bidirectional, raw five-tuple order otherwise.
std::string flow_key(const FiveTuple& t, bool bidirectional);

inline constexpr const char* kNonIpFlowKey = "<non-ip>";

std::map<std::string, Trace> split_flows(const Trace& trace, bool bidirectional = true);

IatDistribution harvest_iats(const Trace& trace);

Trace assign_timestamps(const Trace& trace, const IatDistribution& dist, double base,
                        uint64_t rng_seed);

// TCP flag bits
inline constexpr uint8_t kTcpFin = 0x01;
inline constexpr uint8_t kTcpSyn = 0x02;
inline constexpr uint8_t kTcpRst = 0x04;
inline constexpr uint8_t kTcpPsh = 0x08;
inline constexpr uint8_t kTcpAck = 0x10;

}  // namespace netssm::pcap
