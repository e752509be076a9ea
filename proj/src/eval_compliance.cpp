#include "netssm/eval/compliance.hpp"

#include <algorithm>

#include "netssm/errors.hpp"

namespace netssm::eval {

namespace {

// true when b >= a under 2^32 sequence-number wraparound
bool seq_geq(uint32_t b, uint32_t a) { return uint32_t(b - a) < 0x80000000u; }

struct TcpOptions {
  bool mss = false;
  bool wscale = false;
  bool sack_permitted = false;
  std::size_t sack_blocks = 0;
};

TcpOptions parse_options(const pcap::PacketRecord& rec, const pcap::ParsedPacket& p) {
  TcpOptions o;
  std::size_t begin = p.transport_offset + 20;
  std::size_t end = std::min<std::size_t>(p.transport_offset + p.transport_header_len,
                                          rec.data.size());
  for (std::size_t i = begin; i < end;) {
    uint8_t kind = rec.data[i];
    if (kind == 0) break;  // end of option list
    if (kind == 1) {       // NOP
      ++i;
      continue;
    }
    if (i + 1 >= end) break;
    uint8_t len = rec.data[i + 1];
    if (len < 2 || i + len > end) break;
    switch (kind) {
      case 2: o.mss = true; break;
      case 3: o.wscale = true; break;
      case 4: o.sack_permitted = true; break;
      case 5: ++o.sack_blocks; break;
      default: break;
    }
    i += len;
  }
  return o;
}

}  // namespace

FlowComplianceRecord check_flow(const pcap::Trace& flow, const ComplianceOptions& opts) {
  std::vector<pcap::ParsedPacket> pkts;
  std::vector<TcpOptions> options;
  pkts.reserve(flow.records.size());
  for (std::size_t i = 0; i < flow.records.size(); ++i) {
    auto p = pcap::parse_packet(flow.records[i]);
    if (!p || !p->is_tcp)
      throw InputError("check_flow: non-TCP packet at index " + std::to_string(i));
    options.push_back(parse_options(flow.records[i], *p));
    pkts.push_back(std::move(*p));
  }

  FlowComplianceRecord rec;
  auto dir_of = [](const pcap::ParsedPacket& p) {
    return p.tuple.src_ip + ':' + std::to_string(p.tuple.src_port);
  };

  // three-way handshake: SYN, SYN+ACK acking it, ACK acking that,
  // in order, before any data
  std::size_t n = pkts.size();
  std::size_t established = n;  // first index of the established phase
  bool syn_seen = false, synack_seen = false;
  std::string client_dir;
  uint32_t syn_seq = 0, synack_seq = 0;
  bool have_syn_seq = false, have_synack_seq = false;
  std::size_t first_data = n;

  for (std::size_t i = 0; i < n; ++i) {
    const auto& p = pkts[i];
    bool is_data = p.payload_len > 0;
    if (is_data && first_data == n) first_data = i;
    uint8_t f = p.flags;
    if (!syn_seen) {
      if ((f & pcap::kTcpSyn) && !(f & pcap::kTcpAck) && !is_data) {
        syn_seen = true;
        client_dir = dir_of(p);
        syn_seq = p.seq;
        have_syn_seq = true;
      }
    } else if (!synack_seen) {
      if ((f & pcap::kTcpSyn) && (f & pcap::kTcpAck) && dir_of(p) != client_dir &&
          p.ack == syn_seq + 1 && !is_data) {
        synack_seen = true;
        synack_seq = p.seq;
        have_synack_seq = true;
      }
    } else {
      if (!(f & pcap::kTcpSyn) && (f & pcap::kTcpAck) && dir_of(p) == client_dir &&
          p.ack == synack_seq + 1 && first_data == n) {
        rec.correct_handshake = true;
        established = i + 1;
        break;
      }
    }
    if (is_data) break;  // data before completion forfeits the handshake
  }
  if (!rec.correct_handshake) established = first_data;

  // flag anomalies and option placement over the whole flow
  for (std::size_t i = 0; i < n; ++i) {
    const auto& p = pkts[i];
    for (uint8_t combo : opts.forbidden_combos) {
      if (combo == 0 ? p.flags == 0 : (p.flags & combo) == combo) {
        ++rec.conflicting_flags;
        break;
      }
    }
    if (p.flags & pcap::kTcpFin) rec.fin_seen = true;
    bool is_syn = (p.flags & pcap::kTcpSyn) != 0;
    if (!is_syn) {
      if (options[i].mss) ++rec.mss_outside_handshake;
      if (options[i].wscale) ++rec.wscale_outside_handshake;
    }
    if (i >= established) {
      if (p.flags & pcap::kTcpRst) ++rec.rst_in_established;
      if (is_syn) {
        bool retransmission =
            (have_syn_seq && dir_of(p) == client_dir && !(p.flags & pcap::kTcpAck) &&
             p.seq == syn_seq) ||
            (have_synack_seq && dir_of(p) != client_dir && (p.flags & pcap::kTcpAck) &&
             p.seq == synack_seq);
        if (!retransmission) ++rec.unexpected_syn;
      }
    }
  }

  // SACK authorization: SACK-permitted must appear on a handshake SYN
  bool sack_ok = false;
  for (std::size_t i = 0; i < n; ++i)
    if ((pkts[i].flags & pcap::kTcpSyn) && i < established && options[i].sack_permitted)
      sack_ok = true;
  if (!sack_ok)
    for (const auto& o : options) rec.sack_without_ok += o.sack_blocks;

  // per-direction seq/ack monotonicity over the established phase
  rec.seq_progress = true;
  rec.ack_progress = true;
  std::map<std::string, uint32_t> last_seq, last_ack;
  for (std::size_t i = established; i < n; ++i) {
    const auto& p = pkts[i];
    std::string d = dir_of(p);
    if (auto it = last_seq.find(d); it != last_seq.end() && !seq_geq(p.seq, it->second))
      rec.seq_progress = false;
    last_seq[d] = p.seq;
    if (p.flags & pcap::kTcpAck) {
      if (auto it = last_ack.find(d); it != last_ack.end() && !seq_geq(p.ack, it->second))
        rec.ack_progress = false;
      last_ack[d] = p.ack;
    }
  }

  // a FIN is acknowledged when the other direction later acks past
  // seq + payload + 1
  for (std::size_t i = 0; i < n && !rec.finack_observed; ++i) {
    if (!(pkts[i].flags & pcap::kTcpFin)) continue;
    uint32_t expect = pkts[i].seq + uint32_t(pkts[i].payload_len) + 1;
    std::string d = dir_of(pkts[i]);
    for (std::size_t j = i + 1; j < n; ++j) {
      if (dir_of(pkts[j]) != d && (pkts[j].flags & pcap::kTcpAck) &&
          seq_geq(pkts[j].ack, expect)) {
        rec.finack_observed = true;
        break;
      }
    }
  }

  return rec;
}

ComplianceRates corpus_report(const std::vector<FlowComplianceRecord>& flows) {
  if (flows.empty()) throw InsufficientDataError("corpus_report: empty corpus");
  ComplianceRates r;
  double n = double(flows.size());
  for (const auto& f : flows) {
    r["fin_seen"] += f.fin_seen;
    r["correct_handshake"] += f.correct_handshake;
    r["ack_progress"] += f.ack_progress;
    r["seq_progress"] += f.seq_progress;
    r["finack_observed"] += f.finack_observed;
    r["conflicting_flags"] += double(f.conflicting_flags);
    r["sack_without_ok"] += double(f.sack_without_ok);
    r["unexpected_syn"] += double(f.unexpected_syn);
    r["mss_outside_handshake"] += double(f.mss_outside_handshake);
    r["wscale_outside_handshake"] += double(f.wscale_outside_handshake);
    r["rst_in_established"] += double(f.rst_in_established);
  }
  for (auto& [k, v] : r) v /= n;
  return r;
}

ComplianceDelta delta_report(const ComplianceRates& gen, const ComplianceRates& gt) {
  if (gen.size() != gt.size()) throw InputError("delta_report: metric sets differ");
  ComplianceDelta d;
  for (const auto& [k, gt_v] : gt) {
    auto it = gen.find(k);
    if (it == gen.end()) throw InputError("delta_report: missing metric " + k);
    if (gt_v > 0)
      d[k] = 100.0 * (it->second - gt_v) / gt_v;
    else
      d[k] = std::nullopt;
  }
  return d;
}

}  // namespace netssm::eval
