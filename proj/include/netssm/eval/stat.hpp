#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include "netssm/pcap.hpp"

namespace netssm::eval {

// Normalized histogram over categorical values.
using Histogram = std::map<std::string, double>;

inline constexpr std::array<const char*, 5> kAttributes = {"SA", "DA", "SP", "DP", "PR"};

// One histogram per traffic attribute (SA, DA, SP, DP, PR) over all
// parseable IP packets.
std::map<std::string, Histogram> extract_attributes(const pcap::Trace& trace);

struct Divergences {
  double jsd = 0.0;  // base-2, in [0,1]
  double tvd = 0.0;
  double hd = 0.0;
};

Divergences divergences(const Histogram& p, const Histogram& q);

// nPrint-style per-bit view: one row per Eth+IPv4+TCP packet, cells in
// {-1,0,1}. Columns are IPv4 bits 0..159 then TCP bits (60 bytes
// including the option region) 160..639; -1 marks option bytes the
// packet does not carry.
struct BitGrid {
  std::size_t width = 0;
  std::vector<std::vector<int8_t>> rows;
};

inline constexpr std::size_t kBitGridWidth = (20 + 60) * 8;

BitGrid to_bitgrid(const pcap::Trace& trace);

// Per-column {-1,0,1} category distributions compared between grids,
// averaged over columns.
Divergences header_distances(const BitGrid& a, const BitGrid& b);

}  // namespace netssm::eval
