#include "netssm/eval/memorization.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "netssm/errors.hpp"

namespace netssm::eval {

namespace {

using Frame = std::vector<uint32_t>;  // byte values 0..255 plus pad slots

// Fixed-length frame for any packet: the codec frame when the packet
// matches the profile, otherwise raw bytes tail-padded to frame_len.
Frame frame_of(const pcap::PacketRecord& pkt, const codec::FrameProfile& profile,
               const codec::Vocabulary& vocab) {
  try {
    codec::TokenSequence t = codec::encode_packet(pkt, profile, vocab);
    return Frame(t.begin(), t.end());
  } catch (const Error&) {
    Frame f(profile.frame_len(), vocab.pad_token);
    std::size_t n = std::min<std::size_t>(pkt.data.size(), profile.frame_len());
    for (std::size_t i = 0; i < n; ++i) f[i] = pkt.data[i];
    return f;
  }
}

std::vector<Frame> frames_of(const pcap::Trace& t, const codec::FrameProfile& profile) {
  codec::Vocabulary vocab;
  std::vector<Frame> out;
  out.reserve(t.records.size());
  for (const auto& r : t.records) out.push_back(frame_of(r, profile, vocab));
  return out;
}

std::size_t diff_count(const Frame& a, const Frame& b) {
  std::size_t d = 0;
  for (std::size_t i = 0; i < a.size(); ++i) d += (a[i] != b[i]) ? 1 : 0;
  return d;
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / double(v.size());
}

double stddev_of(const std::vector<double>& v, double m) {
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / double(v.size()));
}

}  // namespace

ExactMatchStats exact_match_stats(const pcap::Trace& syn, const pcap::Trace& gt,
                                  const codec::FrameProfile& profile) {
  if (syn.records.empty() || gt.records.empty())
    throw InsufficientDataError("exact_match_stats: empty trace");
  auto fs = frames_of(syn, profile);
  auto fg = frames_of(gt, profile);
  std::size_t n = std::min(fs.size(), fg.size());
  double frame_len = double(profile.frame_len());

  std::size_t identical = 0;
  double diff_pct_sum = 0.0, diff_cnt_sum = 0.0;
  std::size_t differing = 0;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t d = diff_count(fs[i], fg[i]);
    if (d == 0) {
      ++identical;
    } else {
      ++differing;
      diff_pct_sum += 100.0 * double(d) / frame_len;
      diff_cnt_sum += double(d);
    }
  }
  ExactMatchStats s;
  s.identical_pct = 100.0 * double(identical) / double(n);
  if (differing > 0) {
    s.differing_bytes_pct = diff_pct_sum / double(differing);
    s.avg_diff_bytes = diff_cnt_sum / double(differing);
  }
  return s;
}

NnHammingReport nn_hamming(const pcap::Trace& syn, const pcap::Trace& gt,
                           const codec::FrameProfile& profile) {
  if (syn.records.empty() || gt.records.empty())
    throw InsufficientDataError("nn_hamming: empty trace");
  auto fs = frames_of(syn, profile);
  auto fg = frames_of(gt, profile);
  double frame_len = double(profile.frame_len());

  NnHammingReport r;
  r.distances.reserve(fs.size());
  for (const auto& f : fs) {
    std::size_t best = std::size_t(frame_len);
    for (const auto& g : fg) {
      std::size_t d = diff_count(f, g);
      best = std::min(best, d);
      if (best == 0) break;
    }
    r.distances.push_back(double(best) / frame_len);
  }

  r.mean = mean_of(r.distances);
  r.stddev = stddev_of(r.distances, r.mean);
  std::vector<double> sorted = r.distances;
  std::sort(sorted.begin(), sorted.end());
  r.min = sorted.front();
  r.max = sorted.back();
  std::size_t n = sorted.size();
  r.median = n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
  for (std::size_t t = 0; t < kHammingThresholds.size(); ++t) {
    std::size_t within = 0;
    for (double d : r.distances) within += (d <= kHammingThresholds[t]) ? 1 : 0;
    r.threshold_pcts[t] = 100.0 * double(within) / double(n);
  }

  constexpr std::array<std::pair<std::size_t, std::size_t>, 3> ranges = {
      {{0, 10}, {10, 50}, {50, 100}}};
  for (std::size_t b = 0; b < 3; ++b) {
    IndexBin bin;
    bin.lo = ranges[b].first;
    bin.hi = ranges[b].second;
    std::vector<double> vals;
    for (std::size_t i = bin.lo; i < std::min(bin.hi, r.distances.size()); ++i)
      vals.push_back(r.distances[i]);
    bin.count = vals.size();
    if (!vals.empty()) {
      bin.mean = mean_of(vals);
      bin.stddev = stddev_of(vals, bin.mean);
    }
    r.bins[b] = bin;
  }
  return r;
}

DiversityResult diversity_ratio(const pcap::Trace& syn, const pcap::Trace& gt,
                                std::size_t pair_budget, uint64_t rng_seed,
                                const codec::FrameProfile& profile) {
  if (syn.records.size() < 2 || gt.records.size() < 2)
    throw InsufficientDataError("diversity_ratio: need >= 2 packets per side");
  double frame_len = double(profile.frame_len());
  std::mt19937_64 rng(rng_seed);
  DiversityResult res;

  auto mean_pairwise = [&](const std::vector<Frame>& f) {
    std::size_t n = f.size();
    std::size_t pairs = n * (n - 1) / 2;
    double sum = 0.0;
    if (pairs <= pair_budget) {
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
          sum += double(diff_count(f[i], f[j])) / frame_len;
      return sum / double(pairs);
    }
    res.sampled = true;
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    for (std::size_t k = 0; k < pair_budget; ++k) {
      std::size_t i = pick(rng), j = pick(rng);
      while (j == i) j = pick(rng);
      sum += double(diff_count(f[i], f[j])) / frame_len;
    }
    return sum / double(pair_budget);
  };

  double ds = mean_pairwise(frames_of(syn, profile));
  double dg = mean_pairwise(frames_of(gt, profile));
  if (dg == 0.0)
    throw InsufficientDataError("diversity_ratio: ground truth has zero diversity");
  res.ratio = ds / dg;
  return res;
}

}  // namespace netssm::eval
