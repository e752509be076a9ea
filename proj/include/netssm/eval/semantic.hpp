#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "netssm/pcap.hpp"

namespace netssm::eval {

// IPv4 CIDR prefix, e.g. "45.57.0.0/17".
struct IpPrefix {
  uint32_t network = 0;
  int bits = 0;

  static IpPrefix parse(const std::string& cidr);
  bool contains(const std::string& ipv4) const;
};

struct Segment {
  std::string flow;          // canonical flow key
  std::size_t start_index;   // packet index of the opening uplink packet
  uint64_t total_bytes = 0;  // accumulated downstream payload bytes
};

// DASH segment extraction. A segment opens on an uplink packet matching
// the rule and accumulates downlink payload bytes on that flow until the
// flow's next opener. Uplink = packets sent by the flow initiator (the
// source of the flow's first packet).
std::vector<Segment> extract_segments_netflix(const pcap::Trace& trace,
                                              const std::vector<IpPrefix>& cdn_prefixes);
std::vector<Segment> extract_segments_youtube(const pcap::Trace& trace);

enum class SegmentEvaluation { raw_size, avg_size_per_flow, count_per_flow };

std::vector<double> segment_values(const std::vector<Segment>& segments,
                                   SegmentEvaluation eval);

struct SegmentComparison {
  double mean_delta = 0.0;    // mean(gt) - mean(gen)
  double median_delta = 0.0;  // median(gt) - median(gen)
  double stddev_delta = 0.0;  // stddev(gt) - stddev(gen)
  double ks_stat = 0.0;
  double ks_p = 0.0;
  double ad_stat = 0.0;
  double ad_p = 0.0;  // from the published interpolation table; approximate
  double kl_nats = 0.0;
  double emd = 0.0;
};

SegmentComparison compare_segments(const std::vector<Segment>& gt_segments,
                                   const std::vector<Segment>& gen_segments,
                                   SegmentEvaluation eval);

// Two-sample statistics, exposed for direct use and oracle testing.
double ks_statistic(std::vector<double> a, std::vector<double> b);
double ks_pvalue(double stat, std::size_t n, std::size_t m);
double anderson_darling_statistic(std::vector<double> a, std::vector<double> b);
double anderson_darling_pvalue(double stat, std::size_t n, std::size_t m);
// KL(P_gt || P_gen) in nats over Freedman-Diaconis bins of the pooled
// sample, additive smoothing eps = 1e-9.
double binned_kl(const std::vector<double>& gt, const std::vector<double>& gen);
double emd_1d(std::vector<double> a, std::vector<double> b);

struct ThroughputSeries {
  std::size_t slice_len = 100;
  std::map<std::string, std::vector<double>> per_flow;  // kilobits per slice
  std::vector<double> aggregate;
};

ThroughputSeries throughput(const pcap::Trace& trace, std::size_t slice_len = 100);

struct SeriesSimilarity {
  std::optional<double> pcc;  // absent when a series has zero variance
  double dtw_normalized = 0.0;
};

SeriesSimilarity series_similarity(const std::vector<double>& a, const std::vector<double>& b);

// Dynamic time warping with absolute-difference cost, full window.
// Returns (total cost, optimal path length).
std::pair<double, std::size_t> dtw(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace netssm::eval
