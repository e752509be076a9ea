#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "netssm/pcap.hpp"

namespace netssm::eval {

struct FlowComplianceRecord {
  bool fin_seen = false;
  bool correct_handshake = false;
  bool ack_progress = false;
  bool seq_progress = false;
  bool finack_observed = false;
  std::size_t conflicting_flags = 0;
  std::size_t sack_without_ok = 0;
  std::size_t unexpected_syn = 0;
  std::size_t mss_outside_handshake = 0;
  std::size_t wscale_outside_handshake = 0;
  std::size_t rst_in_established = 0;

  bool operator==(const FlowComplianceRecord&) const = default;
};

// Forbidden flag combinations, overridable. Each entry is a flag mask;
// a packet whose flags contain the whole mask counts once. An empty
// mask matches packets with no flags at all.
struct ComplianceOptions {
  std::vector<uint8_t> forbidden_combos = {
      pcap::kTcpSyn | pcap::kTcpFin,
      pcap::kTcpSyn | pcap::kTcpRst,
      pcap::kTcpFin | pcap::kTcpRst,
      0,
  };
};

// Single bidirectional TCP flow against the session state machine.
FlowComplianceRecord check_flow(const pcap::Trace& flow,
                                const ComplianceOptions& opts = {});

// Boolean metrics aggregate to the fraction of flows where true; count
// metrics to the mean per flow. Keys match FlowComplianceRecord fields.
using ComplianceRates = std::map<std::string, double>;

ComplianceRates corpus_report(const std::vector<FlowComplianceRecord>& flows);

// Per metric, 100 * (gen - gt) / gt when gt > 0, absent otherwise.
using ComplianceDelta = std::map<std::string, std::optional<double>>;

ComplianceDelta delta_report(const ComplianceRates& gen, const ComplianceRates& gt);

}  // namespace netssm::eval
