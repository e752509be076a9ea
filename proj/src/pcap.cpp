#include "netssm/pcap.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

#include "netssm/errors.hpp"

namespace netssm::pcap {

namespace {

constexpr uint32_t kMagicNative = 0xA1B2C3D4u;
constexpr uint32_t kMagicSwapped = 0xD4C3B2A1u;
constexpr uint32_t kMagicNanoNative = 0xA1B23C4Du;
constexpr uint32_t kMagicNanoSwapped = 0x4D3CB2A1u;

uint32_t bswap32(uint32_t v) {
  return ((v & 0xFF) << 24) | ((v & 0xFF00) << 8) | ((v >> 8) & 0xFF00) | (v >> 24);
}
uint16_t bswap16(uint16_t v) { return static_cast<uint16_t>((v << 8) | (v >> 8)); }

struct Reader {
  const std::vector<uint8_t>& buf;
  std::size_t pos = 0;
  bool swap = false;

  std::size_t remaining() const { return buf.size() - pos; }

  uint32_t u32() {
    uint32_t v;
    std::memcpy(&v, buf.data() + pos, 4);
    pos += 4;
    return swap ? bswap32(v) : v;
  }
  uint16_t u16() {
    uint16_t v;
    std::memcpy(&v, buf.data() + pos, 2);
    pos += 2;
    return swap ? bswap16(v) : v;
  }
};

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
  out.insert(out.end(), {static_cast<uint8_t>(v), static_cast<uint8_t>(v >> 8),
                         static_cast<uint8_t>(v >> 16), static_cast<uint8_t>(v >> 24)});
}
void put_u16(std::vector<uint8_t>& out, uint16_t v) {
  out.insert(out.end(), {static_cast<uint8_t>(v), static_cast<uint8_t>(v >> 8)});
}

uint16_t be16(const uint8_t* p) { return static_cast<uint16_t>(p[0] << 8 | p[1]); }
uint32_t be32(const uint8_t* p) {
  return (uint32_t(p[0]) << 24) | (uint32_t(p[1]) << 16) | (uint32_t(p[2]) << 8) | p[3];
}

std::string ipv4_str(const uint8_t* p) {
  std::ostringstream os;
  os << int(p[0]) << '.' << int(p[1]) << '.' << int(p[2]) << '.' << int(p[3]);
  return os.str();
}

std::string ipv6_str(const uint8_t* p) {
  std::ostringstream os;
  os << std::hex;
  for (int i = 0; i < 8; ++i) {
    if (i) os << ':';
    os << be16(p + 2 * i);
  }
  return os.str();
}

}  // namespace

void PacketRecord::set_timestamp(double t) {
  ts_sec = static_cast<uint32_t>(t);
  ts_usec = static_cast<uint32_t>(std::llround((t - ts_sec) * 1e6));
  if (ts_usec >= 1000000) {
    ts_sec += 1;
    ts_usec -= 1000000;
  }
}

std::string FiveTuple::to_string() const {
  std::ostringstream os;
  os << src_ip << ':' << src_port << '>' << dst_ip << ':' << dst_port << '/' << int(ip_proto);
  return os.str();
}

Trace read_pcap(const std::vector<uint8_t>& bytes) {
  if (bytes.size() < 24) throw FormatError("pcap: stream shorter than global header");
  Reader r{bytes};
  uint32_t magic;
  std::memcpy(&magic, bytes.data(), 4);
  if (magic == kMagicNanoNative || magic == kMagicNanoSwapped)
    throw FormatError("pcap: nanosecond-resolution captures are not supported");
  if (magic == kMagicSwapped)
    r.swap = true;
  else if (magic != kMagicNative)
    throw FormatError("pcap: unknown magic number");
  r.pos = 4;
  r.u16();  // version major
  r.u16();  // version minor
  r.u32();  // thiszone
  r.u32();  // sigfigs
  r.u32();  // snaplen
  Trace trace;
  trace.link_type = r.u32();

  std::size_t index = 0;
  while (r.remaining() > 0) {
    if (r.remaining() < 16)
      throw TruncationError("pcap: truncated record header at record " + std::to_string(index));
    PacketRecord rec;
    rec.ts_sec = r.u32();
    rec.ts_usec = r.u32();
    rec.incl_len = r.u32();
    rec.orig_len = r.u32();
    if (r.remaining() < rec.incl_len)
      throw TruncationError("pcap: record " + std::to_string(index) + " declares " +
                            std::to_string(rec.incl_len) + " bytes but only " +
                            std::to_string(r.remaining()) + " remain");
    rec.data.assign(bytes.begin() + r.pos, bytes.begin() + r.pos + rec.incl_len);
    r.pos += rec.incl_len;
    trace.records.push_back(std::move(rec));
    ++index;
  }
  return trace;
}

Trace read_pcap_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path);
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                             std::istreambuf_iterator<char>());
  return read_pcap(bytes);
}

std::vector<uint8_t> write_pcap(const Trace& trace) {
  uint32_t snaplen = 65535;
  for (const auto& rec : trace.records) {
    if (rec.incl_len != rec.data.size())
      throw InvariantError("pcap: record incl_len does not match data length");
    if (rec.incl_len > rec.orig_len)
      throw InvariantError("pcap: record incl_len exceeds orig_len");
    snaplen = std::max(snaplen, rec.incl_len);
  }
  std::vector<uint8_t> out;
  put_u32(out, kMagicNative);
  put_u16(out, 2);
  put_u16(out, 4);
  put_u32(out, 0);  // thiszone
  put_u32(out, 0);  // sigfigs
  put_u32(out, snaplen);
  put_u32(out, trace.link_type);
  for (const auto& rec : trace.records) {
    put_u32(out, rec.ts_sec);
    put_u32(out, rec.ts_usec);
    put_u32(out, rec.incl_len);
    put_u32(out, rec.orig_len);
    out.insert(out.end(), rec.data.begin(), rec.data.end());
  }
  return out;
}

void write_pcap_file(const Trace& trace, const std::string& path) {
  auto bytes = write_pcap(trace);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

std::optional<ParsedPacket> parse_packet(const PacketRecord& pkt) {
  const auto& d = pkt.data;
  if (d.size() < 14) return std::nullopt;
  uint16_t ethertype = be16(d.data() + 12);
  ParsedPacket p;
  p.ip_offset = 14;

  if (ethertype == 0x0800) {  // IPv4
    if (d.size() < p.ip_offset + 20) return std::nullopt;
    const uint8_t* ip = d.data() + p.ip_offset;
    if ((ip[0] >> 4) != 4) return std::nullopt;
    p.ip_header_len = std::size_t(ip[0] & 0x0F) * 4;
    if (p.ip_header_len < 20 || d.size() < p.ip_offset + p.ip_header_len) return std::nullopt;
    uint16_t total_len = be16(ip + 2);
    p.tuple.ip_proto = ip[9];
    p.tuple.src_ip = ipv4_str(ip + 12);
    p.tuple.dst_ip = ipv4_str(ip + 16);
    p.transport_offset = p.ip_offset + p.ip_header_len;
    p.payload_len = total_len >= p.ip_header_len ? total_len - p.ip_header_len : 0;
  } else if (ethertype == 0x86DD) {  // IPv6
    if (d.size() < p.ip_offset + 40) return std::nullopt;
    const uint8_t* ip = d.data() + p.ip_offset;
    if ((ip[0] >> 4) != 6) return std::nullopt;
    p.is_ipv6 = true;
    p.ip_header_len = 40;
    p.tuple.ip_proto = ip[6];  // next header; extension headers not chased
    p.tuple.src_ip = ipv6_str(ip + 8);
    p.tuple.dst_ip = ipv6_str(ip + 24);
    p.transport_offset = p.ip_offset + 40;
    p.payload_len = be16(ip + 4);
  } else {
    return std::nullopt;
  }

  const uint8_t* tp = d.data() + p.transport_offset;
  std::size_t tp_avail = d.size() - p.transport_offset;
  if (p.tuple.ip_proto == 6) {  // TCP
    if (tp_avail < 20) return std::nullopt;
    p.is_tcp = true;
    p.tuple.src_port = be16(tp);
    p.tuple.dst_port = be16(tp + 2);
    p.seq = be32(tp + 4);
    p.ack = be32(tp + 8);
    p.transport_header_len = std::size_t(tp[12] >> 4) * 4;
    p.flags = tp[13];
    p.window = be16(tp + 14);
    if (p.transport_header_len < 20) return std::nullopt;
    p.payload_len = p.payload_len >= p.transport_header_len
                        ? p.payload_len - p.transport_header_len
                        : 0;
  } else if (p.tuple.ip_proto == 17) {  // UDP
    if (tp_avail < 8) return std::nullopt;
    p.tuple.src_port = be16(tp);
    p.tuple.dst_port = be16(tp + 2);
    p.transport_header_len = 8;
    uint16_t udp_len = be16(tp + 4);
    p.payload_len = udp_len >= 8 ? udp_len - 8 : 0;
  } else {
    p.transport_header_len = 0;
    // ports stay 0 for non-port protocols
  }
  return p;
}

std::optional<FiveTuple> five_tuple(const PacketRecord& pkt) {
  auto parsed = parse_packet(pkt);
  if (!parsed) return std::nullopt;
  if (parsed->tuple.ip_proto != 6 && parsed->tuple.ip_proto != 17) return std::nullopt;
  return parsed->tuple;
}

std::string flow_key(const FiveTuple& t, bool bidirectional) {
  std::ostringstream os;
  if (bidirectional) {
    auto a = std::make_pair(t.src_ip, t.src_port);
    auto b = std::make_pair(t.dst_ip, t.dst_port);
    if (b < a) std::swap(a, b);
    os << a.first << ':' << a.second << '|' << b.first << ':' << b.second << '/'
       << int(t.ip_proto);
  } else {
    os << t.src_ip << ':' << t.src_port << '|' << t.dst_ip << ':' << t.dst_port << '/'
       << int(t.ip_proto);
  }
  return os.str();
}

std::map<std::string, Trace> split_flows(const Trace& trace, bool bidirectional) {
  std::map<std::string, Trace> flows;
  for (const auto& rec : trace.records) {
    auto tuple = five_tuple(rec);
    std::string key = tuple ? flow_key(*tuple, bidirectional) : std::string(kNonIpFlowKey);
    auto [it, inserted] = flows.try_emplace(key);
    if (inserted) it->second.link_type = trace.link_type;
    it->second.records.push_back(rec);
  }
  return flows;
}

IatDistribution harvest_iats(const Trace& trace) {
  if (trace.records.size() < 2)
    throw InsufficientDataError("harvest_iats: need at least 2 records");
  IatDistribution dist;
  dist.samples.reserve(trace.records.size() - 1);
  for (std::size_t i = 1; i < trace.records.size(); ++i)
    dist.samples.push_back(trace.records[i].timestamp() - trace.records[i - 1].timestamp());
  return dist;
}

Trace assign_timestamps(const Trace& trace, const IatDistribution& dist, double base,
                        uint64_t rng_seed) {
  if (dist.samples.empty())
    throw InsufficientDataError("assign_timestamps: empty IAT distribution");
  std::mt19937_64 rng(rng_seed);
  std::uniform_int_distribution<std::size_t> pick(0, dist.samples.size() - 1);
  Trace out = trace;
  double t = base;
  for (std::size_t i = 0; i < out.records.size(); ++i) {
    if (i > 0) t += dist.samples[pick(rng)];
    out.records[i].set_timestamp(t);
  }
  return out;
}

}  // namespace netssm::pcap
