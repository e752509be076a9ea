#include "netssm/eval/semantic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <sstream>

#include "netssm/errors.hpp"

namespace netssm::eval {

namespace {

double mean(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / double(v.size());
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double stddev(const std::vector<double>& v) {
  double m = mean(v);
  double sq = 0.0;
  for (double x : v) sq += (x - m) * (x - m);
  return std::sqrt(sq / double(v.size()));
}

uint32_t parse_ipv4(const std::string& s) {
  std::istringstream is(s);
  uint32_t out = 0;
  for (int i = 0; i < 4; ++i) {
    int octet;
    char dot;
    if (!(is >> octet) || octet < 0 || octet > 255)
      throw InputError("bad IPv4 address: " + s);
    if (i < 3 && (!(is >> dot) || dot != '.')) throw InputError("bad IPv4 address: " + s);
    out = (out << 8) | uint32_t(octet);
  }
  return out;
}

// Shared walk for both segment rules. `opens` decides whether an uplink
// packet with the given payload and destination starts a segment.
template <class OpenRule>
std::vector<Segment> extract_segments(const pcap::Trace& trace, OpenRule opens) {
  struct FlowState {
    std::string initiator;       // "ip:port" of the flow's first source
    std::ptrdiff_t open = -1;    // index into `segments`
  };
  std::map<std::string, FlowState> flows;
  std::vector<Segment> segments;

  for (std::size_t i = 0; i < trace.records.size(); ++i) {
    auto p = pcap::parse_packet(trace.records[i]);
    if (!p || (p->tuple.ip_proto != 6 && p->tuple.ip_proto != 17)) continue;
    std::string key = pcap::flow_key(p->tuple, true);
    std::string src = p->tuple.src_ip + ':' + std::to_string(p->tuple.src_port);
    auto [it, inserted] = flows.try_emplace(key);
    if (inserted) it->second.initiator = src;
    bool uplink = (src == it->second.initiator);

    if (uplink) {
      if (opens(*p)) {
        segments.push_back({key, i, 0});
        it->second.open = std::ptrdiff_t(segments.size()) - 1;
      }
    } else if (it->second.open >= 0 && p->payload_len > 0) {
      segments[std::size_t(it->second.open)].total_bytes += p->payload_len;
    }
  }
  return segments;
}

}  // namespace

IpPrefix IpPrefix::parse(const std::string& cidr) {
  auto slash = cidr.find('/');
  IpPrefix p;
  if (slash == std::string::npos) {
    p.network = parse_ipv4(cidr);
    p.bits = 32;
  } else {
    p.network = parse_ipv4(cidr.substr(0, slash));
    p.bits = std::stoi(cidr.substr(slash + 1));
    if (p.bits < 0 || p.bits > 32) throw InputError("bad prefix length in " + cidr);
  }
  return p;
}

bool IpPrefix::contains(const std::string& ipv4) const {
  uint32_t addr;
  try {
    addr = parse_ipv4(ipv4);
  } catch (const InputError&) {
    return false;  // IPv6 or malformed never matches an IPv4 prefix
  }
  if (bits == 0) return true;
  uint32_t mask = bits == 32 ? 0xFFFFFFFFu : ~((1u << (32 - bits)) - 1);
  return (addr & mask) == (network & mask);
}

std::vector<Segment> extract_segments_netflix(const pcap::Trace& trace,
                                              const std::vector<IpPrefix>& cdn_prefixes) {
  if (cdn_prefixes.empty())
    throw InsufficientDataError("extract_segments_netflix: empty CDN prefix set");
  return extract_segments(trace, [&](const pcap::ParsedPacket& p) {
    if (p.payload_len == 0) return false;
    for (const auto& pre : cdn_prefixes)
      if (pre.contains(p.tuple.dst_ip)) return true;
    return false;
  });
}

std::vector<Segment> extract_segments_youtube(const pcap::Trace& trace) {
  auto segments =
      extract_segments(trace, [](const pcap::ParsedPacket& p) { return p.payload_len > 300; });
  std::erase_if(segments, [](const Segment& s) { return s.total_bytes < 80000; });
  return segments;
}

std::vector<double> segment_values(const std::vector<Segment>& segments,
                                   SegmentEvaluation eval) {
  if (eval == SegmentEvaluation::raw_size) {
    std::vector<double> out;
    for (const auto& s : segments) out.push_back(double(s.total_bytes));
    return out;
  }
  std::map<std::string, std::pair<double, std::size_t>> per_flow;  // sum, count
  for (const auto& s : segments) {
    auto& [sum, count] = per_flow[s.flow];
    sum += double(s.total_bytes);
    ++count;
  }
  std::vector<double> out;
  for (const auto& [flow, sc] : per_flow)
    out.push_back(eval == SegmentEvaluation::avg_size_per_flow ? sc.first / double(sc.second)
                                                               : double(sc.second));
  return out;
}

double ks_statistic(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw InsufficientDataError("ks_statistic: empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  double d = 0.0;
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
    d = std::max(d, std::abs(double(i) / double(a.size()) - double(j) / double(b.size())));
  }
  return d;
}

double ks_pvalue(double stat, std::size_t n, std::size_t m) {
  double en = std::sqrt(double(n) * double(m) / double(n + m));
  double lambda = (en + 0.12 + 0.11 / en) * stat;
  double sign = 1.0, p = 0.0, prev_term = 0.0;
  for (int k = 1; k <= 100; ++k) {
    double term = 2.0 * std::exp(-2.0 * k * k * lambda * lambda);
    p += sign * term;
    if (term <= 0.001 * prev_term || term <= 1e-10 * p)
      return std::min(1.0, std::max(0.0, p));
    sign = -sign;
    prev_term = term;
  }
  return 1.0;  // series fails to converge only as lambda -> 0
}

double anderson_darling_statistic(std::vector<double> a, std::vector<double> b) {
  // Scholz-Stephens k-sample statistic (midrank/tie-aware form),
  // standardized by its null mean and variance, k = 2.
  if (a.size() < 2 || b.size() < 2)
    throw InsufficientDataError("anderson_darling: need >= 2 values per side");
  const std::size_t k = 2;
  std::vector<std::vector<double>> samples{a, b};
  std::vector<double> pooled;
  pooled.insert(pooled.end(), a.begin(), a.end());
  pooled.insert(pooled.end(), b.begin(), b.end());
  std::sort(pooled.begin(), pooled.end());
  const double N = double(pooled.size());

  std::vector<double> zstar;
  std::vector<double> lj;
  for (std::size_t i = 0; i < pooled.size();) {
    std::size_t j = i;
    while (j < pooled.size() && pooled[j] == pooled[i]) ++j;
    zstar.push_back(pooled[i]);
    lj.push_back(double(j - i));
    i = j;
  }

  double a2 = 0.0;
  for (const auto& sample : samples) {
    double ni = double(sample.size());
    double inner = 0.0;
    double bj = 0.0;  // pooled count below + half ties, cumulative
    double mi = 0.0;
    for (std::size_t j = 0; j < zstar.size(); ++j) {
      double tie_i = 0.0;
      for (double x : sample) tie_i += (x == zstar[j]) ? 1.0 : 0.0;
      double below_i = 0.0;
      for (double x : sample) below_i += (x < zstar[j]) ? 1.0 : 0.0;
      mi = below_i + tie_i / 2.0;
      double bjj = bj + lj[j] / 2.0;
      double denom = bjj * (N - bjj) - N * lj[j] / 4.0;
      if (denom > 0) {
        double num = N * mi - ni * bjj;
        inner += lj[j] / N * num * num / denom;
      }
      bj += lj[j];
    }
    a2 += inner / ni;
  }
  a2 *= (N - 1.0) / N;

  // null variance (Scholz & Stephens 1987)
  double H = 1.0 / double(a.size()) + 1.0 / double(b.size());
  double h = 0.0;
  for (std::size_t i = 1; i <= pooled.size() - 1; ++i) h += 1.0 / double(i);
  double g = 0.0;
  for (std::size_t i = 1; i + 1 <= pooled.size() - 1; ++i)
    for (std::size_t j = i + 1; j <= pooled.size() - 1; ++j)
      g += 1.0 / (double(pooled.size() - i) * double(j));
  double kk = double(k);
  double va = (4.0 * g - 6.0) * (kk - 1.0) + (10.0 - 6.0 * g) * H;
  double vb = (2.0 * g - 4.0) * kk * kk + 8.0 * h * kk +
              (2.0 * g - 14.0 * h - 4.0) * H - 8.0 * h + 4.0 * g - 6.0;
  double vc = (6.0 * h + 2.0 * g - 2.0) * kk * kk + (4.0 * h - 4.0 * g + 6.0) * kk +
              (2.0 * h - 6.0) * H + 4.0 * h;
  double vd = (2.0 * h + 6.0) * kk * kk - 4.0 * h * kk;
  double var = (va * N * N * N + vb * N * N + vc * N + vd) /
               ((N - 1.0) * (N - 2.0) * (N - 3.0));
  if (var <= 0) return 0.0;
  return (a2 - (kk - 1.0)) / std::sqrt(var);
}

double anderson_darling_pvalue(double stat, std::size_t /*n*/, std::size_t /*m*/) {
  // log-linear interpolation against the published critical-value table
  // for m = k-1 = 1; approximate, clamped to [0.001, 0.25]
  static constexpr std::array<double, 7> sig = {0.25, 0.10, 0.05, 0.025, 0.01, 0.005, 0.001};
  static constexpr std::array<double, 7> b0 = {0.675, 1.281, 1.645, 1.960,
                                               2.326, 2.573, 3.085};
  static constexpr std::array<double, 7> b1 = {-0.245, 0.250, 0.678, 1.149,
                                               1.822,  2.364, 3.615};
  static constexpr std::array<double, 7> b2 = {-0.105, -0.305, -0.362, -0.391,
                                               -0.396, -0.345, -0.154};
  std::array<double, 7> tm{};
  for (std::size_t i = 0; i < 7; ++i) tm[i] = b0[i] + b1[i] + b2[i];  // m = 1
  if (stat <= tm.front()) return 0.25;
  if (stat >= tm.back()) return 0.001;
  for (std::size_t i = 1; i < 7; ++i) {
    if (stat <= tm[i]) {
      double w = (stat - tm[i - 1]) / (tm[i] - tm[i - 1]);
      return std::exp(std::log(sig[i - 1]) + w * (std::log(sig[i]) - std::log(sig[i - 1])));
    }
  }
  return 0.001;
}

double binned_kl(const std::vector<double>& gt, const std::vector<double>& gen) {
  if (gt.empty() || gen.empty()) throw InsufficientDataError("binned_kl: empty sample");
  std::vector<double> pooled;
  pooled.insert(pooled.end(), gt.begin(), gt.end());
  pooled.insert(pooled.end(), gen.begin(), gen.end());
  std::sort(pooled.begin(), pooled.end());
  double lo = pooled.front(), hi = pooled.back();
  double q1 = pooled[pooled.size() / 4];
  double q3 = pooled[(pooled.size() * 3) / 4];
  double width = 2.0 * (q3 - q1) / std::cbrt(double(pooled.size()));
  std::size_t n_bins = 1;
  if (width > 0 && hi > lo)
    n_bins = std::max<std::size_t>(1, std::size_t(std::ceil((hi - lo) / width)));
  n_bins = std::min<std::size_t>(n_bins, 10000);

  const double eps = 1e-9;
  std::vector<double> p(n_bins, eps), q(n_bins, eps);
  auto bin_of = [&](double x) {
    if (hi == lo) return std::size_t(0);
    auto b = std::size_t((x - lo) / (hi - lo) * double(n_bins));
    return std::min(b, n_bins - 1);
  };
  for (double x : gt) p[bin_of(x)] += 1.0;
  for (double x : gen) q[bin_of(x)] += 1.0;
  double ps = std::accumulate(p.begin(), p.end(), 0.0);
  double qs = std::accumulate(q.begin(), q.end(), 0.0);
  double kl = 0.0;
  for (std::size_t i = 0; i < n_bins; ++i) kl += p[i] / ps * std::log((p[i] / ps) / (q[i] / qs));
  return std::max(0.0, kl);
}

double emd_1d(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw InsufficientDataError("emd_1d: empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::vector<double> points;
  points.reserve(a.size() + b.size());
  points.insert(points.end(), a.begin(), a.end());
  points.insert(points.end(), b.begin(), b.end());
  std::sort(points.begin(), points.end());
  double emd = 0.0;
  for (std::size_t i = 0; i + 1 < points.size(); ++i) {
    double x = points[i];
    double fa = double(std::upper_bound(a.begin(), a.end(), x) - a.begin()) / double(a.size());
    double fb = double(std::upper_bound(b.begin(), b.end(), x) - b.begin()) / double(b.size());
    emd += std::abs(fa - fb) * (points[i + 1] - points[i]);
  }
  return emd;
}

SegmentComparison compare_segments(const std::vector<Segment>& gt_segments,
                                   const std::vector<Segment>& gen_segments,
                                   SegmentEvaluation eval) {
  auto gt = segment_values(gt_segments, eval);
  auto gen = segment_values(gen_segments, eval);
  if (gt.size() < 2 || gen.size() < 2)
    throw InsufficientDataError("compare_segments: need >= 2 values per side");
  SegmentComparison c;
  c.mean_delta = mean(gt) - mean(gen);
  c.median_delta = median(gt) - median(gen);
  c.stddev_delta = stddev(gt) - stddev(gen);
  c.ks_stat = ks_statistic(gt, gen);
  c.ks_p = ks_pvalue(c.ks_stat, gt.size(), gen.size());
  c.ad_stat = anderson_darling_statistic(gt, gen);
  c.ad_p = anderson_darling_pvalue(c.ad_stat, gt.size(), gen.size());
  c.kl_nats = binned_kl(gt, gen);
  c.emd = emd_1d(gt, gen);
  return c;
}

ThroughputSeries throughput(const pcap::Trace& trace, std::size_t slice_len) {
  if (slice_len < 1) throw InvariantError("throughput: slice_len must be >= 1");
  ThroughputSeries ts;
  ts.slice_len = slice_len;
  std::size_t n_slices = (trace.records.size() + slice_len - 1) / slice_len;
  ts.aggregate.assign(n_slices, 0.0);
  for (std::size_t i = 0; i < trace.records.size(); ++i) {
    std::size_t slice = i / slice_len;
    auto tuple = pcap::five_tuple(trace.records[i]);
    std::string key = tuple ? pcap::flow_key(*tuple, true) : std::string(pcap::kNonIpFlowKey);
    auto [it, inserted] = ts.per_flow.try_emplace(key);
    if (inserted) it->second.assign(n_slices, 0.0);
    double kbits = double(trace.records[i].incl_len) * 8.0 / 1000.0;
    it->second[slice] += kbits;
    ts.aggregate[slice] += kbits;
  }
  return ts;
}

std::pair<double, std::size_t> dtw(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.empty() || b.empty()) throw InsufficientDataError("dtw: empty series");
  const std::size_t n = a.size(), m = b.size();
  std::vector<std::vector<double>> d(n, std::vector<double>(m, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      double cost = std::abs(a[i] - b[j]);
      double best = 0.0;
      if (i > 0 && j > 0)
        best = std::min({d[i - 1][j - 1], d[i - 1][j], d[i][j - 1]});
      else if (i > 0)
        best = d[i - 1][j];
      else if (j > 0)
        best = d[i][j - 1];
      d[i][j] = cost + best;
    }
  }
  // backtrack one optimal path, diagonal preferred
  std::size_t i = n - 1, j = m - 1, len = 1;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0) {
      double diag = d[i - 1][j - 1], up = d[i - 1][j], left = d[i][j - 1];
      if (diag <= up && diag <= left) {
        --i;
        --j;
      } else if (up <= left) {
        --i;
      } else {
        --j;
      }
    } else if (i > 0) {
      --i;
    } else {
      --j;
    }
    ++len;
  }
  return {d[n - 1][m - 1], len};
}

SeriesSimilarity series_similarity(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() < 2 || b.size() < 2)
    throw InsufficientDataError("series_similarity: series shorter than 2");
  SeriesSimilarity s;
  std::size_t n = std::min(a.size(), b.size());
  std::vector<double> x(a.begin(), a.begin() + std::ptrdiff_t(n));
  std::vector<double> y(b.begin(), b.begin() + std::ptrdiff_t(n));
  double mx = mean(x), my = mean(y);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx > 0 && syy > 0) s.pcc = sxy / std::sqrt(sxx * syy);
  auto [cost, len] = dtw(a, b);
  s.dtw_normalized = cost / double(len);
  return s;
}

}  // namespace netssm::eval
