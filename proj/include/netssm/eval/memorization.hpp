#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "netssm/codec.hpp"
#include "netssm/pcap.hpp"

namespace netssm::eval {

// Distances run over the fixed frame (pad positions included) so
// packets with different option lengths stay commensurable.

struct ExactMatchStats {
  double identical_pct = 0.0;       // % of aligned pairs with equal frames
  double differing_bytes_pct = 0.0; // among differing pairs, mean % of differing slots
  double avg_diff_bytes = 0.0;      // among differing pairs, mean differing slot count
};

ExactMatchStats exact_match_stats(const pcap::Trace& syn, const pcap::Trace& gt,
                                  const codec::FrameProfile& profile = {});

inline constexpr std::array<double, 4> kHammingThresholds = {0.05, 0.10, 0.15, 0.20};

struct IndexBin {
  std::size_t lo = 0, hi = 0;  // [lo, hi) over synthetic packet index
  std::size_t count = 0;
  double mean = 0.0;
  double stddev = 0.0;
};

struct NnHammingReport {
  std::vector<double> distances;  // one per synthetic packet
  double mean = 0.0, median = 0.0, stddev = 0.0, min = 0.0, max = 0.0;
  std::array<double, 4> threshold_pcts{};  // % within 5/10/15/20
  std::array<IndexBin, 3> bins{};          // [0,10), [10,50), [50,100)
};

NnHammingReport nn_hamming(const pcap::Trace& syn, const pcap::Trace& gt,
                           const codec::FrameProfile& profile = {});

struct DiversityResult {
  double ratio = 0.0;
  bool sampled = false;  // true when either side exceeded the pair budget
};

DiversityResult diversity_ratio(const pcap::Trace& syn, const pcap::Trace& gt,
                                std::size_t pair_budget = 1000000,
                                uint64_t rng_seed = 0,
                                const codec::FrameProfile& profile = {});

}  // namespace netssm::eval
