#include "netssm/eval/stat.hpp"

#include <cmath>
#include <set>

#include "netssm/errors.hpp"

namespace netssm::eval {

namespace {

void normalize(Histogram& h) {
  double total = 0.0;
  for (const auto& [k, v] : h) total += v;
  for (auto& [k, v] : h) v /= total;
}

void check_normalized(const Histogram& h, const char* which) {
  double total = 0.0;
  for (const auto& [k, v] : h) {
    if (v < 0) throw InvariantError(std::string("divergences: negative mass in ") + which);
    total += v;
  }
  if (std::abs(total - 1.0) > 1e-9)
    throw InvariantError(std::string("divergences: ") + which + " not normalized");
}

}  // namespace

std::map<std::string, Histogram> extract_attributes(const pcap::Trace& trace) {
  std::map<std::string, Histogram> out;
  for (const char* a : kAttributes) out[a] = {};
  std::size_t parsed = 0;
  for (const auto& rec : trace.records) {
    auto p = pcap::parse_packet(rec);
    if (!p) continue;
    ++parsed;
    out["SA"][p->tuple.src_ip] += 1.0;
    out["DA"][p->tuple.dst_ip] += 1.0;
    out["SP"][std::to_string(p->tuple.src_port)] += 1.0;
    out["DP"][std::to_string(p->tuple.dst_port)] += 1.0;
    out["PR"][std::to_string(p->tuple.ip_proto)] += 1.0;
  }
  if (parsed == 0)
    throw InsufficientDataError("extract_attributes: no parseable IP packets");
  for (auto& [k, h] : out) normalize(h);
  return out;
}

Divergences divergences(const Histogram& p, const Histogram& q) {
  check_normalized(p, "p");
  check_normalized(q, "q");
  std::set<std::string> support;
  for (const auto& [k, v] : p) support.insert(k);
  for (const auto& [k, v] : q) support.insert(k);

  auto get = [](const Histogram& h, const std::string& k) {
    auto it = h.find(k);
    return it == h.end() ? 0.0 : it->second;
  };

  Divergences d;
  double bc = 0.0;  // Bhattacharyya coefficient
  for (const auto& k : support) {
    double pi = get(p, k), qi = get(q, k);
    double m = 0.5 * (pi + qi);
    if (pi > 0) d.jsd += 0.5 * pi * std::log2(pi / m);
    if (qi > 0) d.jsd += 0.5 * qi * std::log2(qi / m);
    d.tvd += 0.5 * std::abs(pi - qi);
    bc += std::sqrt(pi * qi);
  }
  d.hd = std::sqrt(std::max(0.0, 1.0 - bc));
  // clamp tiny negative rounding
  d.jsd = std::min(1.0, std::max(0.0, d.jsd));
  d.tvd = std::min(1.0, std::max(0.0, d.tvd));
  return d;
}

BitGrid to_bitgrid(const pcap::Trace& trace) {
  BitGrid grid;
  grid.width = kBitGridWidth;
  for (const auto& rec : trace.records) {
    auto p = pcap::parse_packet(rec);
    if (!p || !p->is_tcp || p->is_ipv6) continue;
    std::vector<int8_t> row(kBitGridWidth, -1);
    auto set_bits = [&](std::size_t col, const uint8_t* bytes, std::size_t n) {
      for (std::size_t i = 0; i < n; ++i)
        for (int b = 0; b < 8; ++b)
          row[col + i * 8 + std::size_t(b)] = (bytes[i] >> (7 - b)) & 1;
    };
    // first 20 IPv4 bytes; options beyond that are outside the grid
    set_bits(0, rec.data.data() + p->ip_offset, 20);
    std::size_t tcp_present =
        std::min<std::size_t>(p->transport_header_len, rec.data.size() - p->transport_offset);
    set_bits(160, rec.data.data() + p->transport_offset,
             std::min<std::size_t>(tcp_present, 60));
    grid.rows.push_back(std::move(row));
  }
  return grid;
}

Divergences header_distances(const BitGrid& a, const BitGrid& b) {
  if (a.width != b.width) throw ShapeError("header_distances: grid widths differ");
  if (a.rows.empty() || b.rows.empty())
    throw InsufficientDataError("header_distances: empty grid");
  Divergences sum;
  for (std::size_t col = 0; col < a.width; ++col) {
    auto column_hist = [col](const BitGrid& g) {
      Histogram h{{"-1", 0.0}, {"0", 0.0}, {"1", 0.0}};
      for (const auto& row : g.rows) h[std::to_string(int(row[col]))] += 1.0;
      for (auto& [k, v] : h) v /= double(g.rows.size());
      return h;
    };
    Divergences d = divergences(column_hist(a), column_hist(b));
    sum.jsd += d.jsd;
    sum.tvd += d.tvd;
    sum.hd += d.hd;
  }
  sum.jsd /= double(a.width);
  sum.tvd /= double(a.width);
  sum.hd /= double(a.width);
  return sum;
}

}  // namespace netssm::eval
