#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <random>

#include "craft.hpp"
#include "doctest.h"
#include "netssm/errors.hpp"
#include "netssm/eval/stat.hpp"

using namespace netssm;

namespace {

// brute-force oracle over the union support, straight from the definitions
eval::Divergences oracle_divergences(const eval::Histogram& p, const eval::Histogram& q) {
  std::map<std::string, std::pair<double, double>> joint;
  for (const auto& [k, v] : p) joint[k].first = v;
  for (const auto& [k, v] : q) joint[k].second = v;
  double kl_pm = 0.0, kl_qm = 0.0, tvd = 0.0, bc = 0.0;
  for (const auto& [k, pq] : joint) {
    double m = (pq.first + pq.second) / 2.0;
    if (pq.first > 0) kl_pm += pq.first * std::log2(pq.first / m);
    if (pq.second > 0) kl_qm += pq.second * std::log2(pq.second / m);
    tvd += std::abs(pq.first - pq.second) / 2.0;
    bc += std::sqrt(pq.first * pq.second);
  }
  return {(kl_pm + kl_qm) / 2.0, tvd, std::sqrt(std::max(0.0, 1.0 - bc))};
}

pcap::Trace trace_of(std::vector<pcap::PacketRecord> recs) {
  pcap::Trace t;
  t.records = std::move(recs);
  return t;
}

eval::Histogram random_hist(std::mt19937_64& rng, int support, bool sparse) {
  eval::Histogram h;
  double total = 0.0;
  for (int i = 0; i < support; ++i) {
    if (sparse && rng() % 3 == 0) continue;
    double w = double(rng() % 1000 + 1);
    h["k" + std::to_string(i)] = w;
    total += w;
  }
  if (h.empty()) {
    h["k0"] = 1.0;
    total = 1.0;
  }
  for (auto& [k, v] : h) v /= total;
  return h;
}

}  // namespace

TEST_CASE("divergences match the definition on random histograms") {
  std::mt19937_64 rng(17);
  for (int i = 0; i < 50; ++i) {
    auto p = random_hist(rng, 8, true);
    auto q = random_hist(rng, 8, true);
    auto got = eval::divergences(p, q);
    auto want = oracle_divergences(p, q);
    CHECK(got.jsd == doctest::Approx(want.jsd).epsilon(1e-9));
    CHECK(got.tvd == doctest::Approx(want.tvd).epsilon(1e-9));
    CHECK(got.hd == doctest::Approx(want.hd).epsilon(1e-9));
  }
}

TEST_CASE("divergence identities: self-distance, symmetry, disjoint support") {
  std::mt19937_64 rng(23);
  for (int i = 0; i < 10; ++i) {
    auto p = random_hist(rng, 6, false);
    auto q = random_hist(rng, 6, true);
    auto d0 = eval::divergences(p, p);
    CHECK(d0.jsd == doctest::Approx(0.0));
    CHECK(d0.tvd == doctest::Approx(0.0));
    CHECK(d0.hd == doctest::Approx(0.0));
    auto ab = eval::divergences(p, q);
    auto ba = eval::divergences(q, p);
    CHECK(ab.jsd == doctest::Approx(ba.jsd));
    CHECK(ab.tvd == doctest::Approx(ba.tvd));
    CHECK(ab.hd == doctest::Approx(ba.hd));
    CHECK(ab.jsd >= 0.0);
    CHECK(ab.jsd <= 1.0);
    CHECK(ab.tvd <= 1.0);
    CHECK(ab.hd <= 1.0 + 1e-12);
  }

  eval::Histogram a{{"x", 1.0}}, b{{"y", 1.0}};
  auto d = eval::divergences(a, b);
  CHECK(d.jsd == doctest::Approx(1.0));
  CHECK(d.tvd == doctest::Approx(1.0));
  CHECK(d.hd == doctest::Approx(1.0));
}

TEST_CASE("tvd obeys the triangle inequality") {
  std::mt19937_64 rng(31);
  for (int i = 0; i < 20; ++i) {
    auto p = random_hist(rng, 5, true);
    auto q = random_hist(rng, 5, true);
    auto r = random_hist(rng, 5, true);
    double pq = eval::divergences(p, q).tvd;
    double qr = eval::divergences(q, r).tvd;
    double pr = eval::divergences(p, r).tvd;
    CHECK(pr <= pq + qr + 1e-12);
  }
}

TEST_CASE("unnormalized or negative input is rejected") {
  eval::Histogram ok{{"a", 0.5}, {"b", 0.5}};
  eval::Histogram bad{{"a", 0.5}, {"b", 0.6}};
  eval::Histogram neg{{"a", 1.5}, {"b", -0.5}};
  CHECK_THROWS_AS(eval::divergences(ok, bad), InvariantError);
  CHECK_THROWS_AS(eval::divergences(neg, ok), InvariantError);
}

TEST_CASE("extract_attributes counts the five tuple fields") {
  craft::TcpSpec a;
  a.src = {10, 0, 0, 1};
  a.dst = {10, 0, 0, 2};
  a.sport = 1234;
  a.dport = 443;
  craft::TcpSpec b = a;
  b.src = {10, 0, 0, 3};
  pcap::Trace t;
  t.records = {craft::tcp_packet(a), craft::tcp_packet(a), craft::tcp_packet(b)};
  auto attrs = eval::extract_attributes(t);
  CHECK(attrs["SA"]["10.0.0.1"] == doctest::Approx(2.0 / 3.0));
  CHECK(attrs["SA"]["10.0.0.3"] == doctest::Approx(1.0 / 3.0));
  CHECK(attrs["DA"]["10.0.0.2"] == doctest::Approx(1.0));
  CHECK(attrs["SP"]["1234"] == doctest::Approx(1.0));
  CHECK(attrs["DP"]["443"] == doctest::Approx(1.0));
  CHECK(attrs["PR"]["6"] == doctest::Approx(1.0));

  pcap::Trace arps;
  pcap::PacketRecord arp;
  arp.data.assign(42, 0);
  arp.data[12] = 0x08;
  arp.data[13] = 0x06;
  arp.incl_len = arp.orig_len = 42;
  arps.records = {arp};
  CHECK_THROWS_AS(eval::extract_attributes(arps), InsufficientDataError);
}

TEST_CASE("bitgrid lays out header bits column by column") {
  craft::TcpSpec s;
  s.flags = 0x02;  // SYN
  auto grid = eval::to_bitgrid(trace_of({craft::tcp_packet(s)}));
  REQUIRE(grid.rows.size() == 1);
  REQUIRE(grid.width == 640);
  const auto& row = grid.rows[0];

  // IPv4 version nibble 0100 at columns 0..3
  CHECK(row[0] == 0);
  CHECK(row[1] == 1);
  CHECK(row[2] == 0);
  CHECK(row[3] == 0);
  // TCP flags live in byte 13 of the TCP header; SYN is bit 6 of that byte
  std::size_t flag_col = 160 + 13 * 8;
  for (int b = 0; b < 8; ++b) CHECK(row[flag_col + std::size_t(b)] == (b == 6 ? 1 : 0));
  // no options: the 40-byte option region is all absent
  for (std::size_t c = 160 + 20 * 8; c < 640; ++c) CHECK(row[c] == -1);

  // with 4 option bytes the first 32 option columns become concrete
  craft::TcpSpec o = s;
  o.options = {2, 4, 0x05, 0xB4};  // MSS 1460
  auto g2 = eval::to_bitgrid(trace_of({craft::tcp_packet(o)}));
  const auto& r2 = g2.rows[0];
  for (std::size_t c = 320; c < 320 + 32; ++c) CHECK(r2[c] != -1);
  for (std::size_t c = 320 + 32; c < 640; ++c) CHECK(r2[c] == -1);
  // kind byte 2 = 00000010
  CHECK(r2[320 + 6] == 1);
  CHECK(r2[320 + 7] == 0);
}

TEST_CASE("bitgrid skips non-TCP packets") {
  craft::TcpSpec s;
  auto udp = craft::tcp_packet(s);
  udp.data[14 + 9] = 17;  // relabel protocol; body stays parseable enough to skip
  auto t = trace_of({craft::tcp_packet(s), udp});
  auto grid = eval::to_bitgrid(t);
  CHECK(grid.rows.size() == 1);
}

TEST_CASE("header_distances average per-column divergences") {
  std::mt19937_64 rng(41);
  auto random_grid = [&](std::size_t rows) {
    eval::BitGrid g;
    g.width = 8;
    for (std::size_t r = 0; r < rows; ++r) {
      std::vector<int8_t> row(8);
      for (auto& c : row) c = int8_t(int(rng() % 3) - 1);
      g.rows.push_back(std::move(row));
    }
    return g;
  };

  for (int trial = 0; trial < 50; ++trial) {
    auto a = random_grid(5), b = random_grid(8);
    auto got = eval::header_distances(a, b);
    // oracle: per-column categorical histograms, averaged
    eval::Divergences want;
    for (std::size_t col = 0; col < 8; ++col) {
      auto hist = [&](const eval::BitGrid& g) {
        eval::Histogram h;
        for (const auto& row : g.rows) h[std::to_string(int(row[col]))] += 1.0;
        for (auto& [k, v] : h) v /= double(g.rows.size());
        return h;
      };
      auto d = oracle_divergences(hist(a), hist(b));
      want.jsd += d.jsd / 8.0;
      want.tvd += d.tvd / 8.0;
      want.hd += d.hd / 8.0;
    }
    CHECK(got.jsd == doctest::Approx(want.jsd).epsilon(1e-9));
    CHECK(got.tvd == doctest::Approx(want.tvd).epsilon(1e-9));
    CHECK(got.hd == doctest::Approx(want.hd).epsilon(1e-9));
  }
}

TEST_CASE("identical grids have zero distance, complemented grids the maximum") {
  craft::TcpSpec s;
  auto t = trace_of({craft::tcp_packet(s), craft::tcp_packet(s)});
  auto g = eval::to_bitgrid(t);
  auto zero = eval::header_distances(g, g);
  CHECK(zero.jsd == doctest::Approx(0.0));
  CHECK(zero.tvd == doctest::Approx(0.0));
  CHECK(zero.hd == doctest::Approx(0.0));

  eval::BitGrid flipped = g;
  for (auto& row : flipped.rows)
    for (auto& c : row) c = (c == -1) ? int8_t(1) : int8_t(c == 0 ? 1 : 0);
  auto maxed = eval::header_distances(g, flipped);
  CHECK(maxed.jsd == doctest::Approx(1.0));
  CHECK(maxed.tvd == doctest::Approx(1.0));
  CHECK(maxed.hd == doctest::Approx(1.0));

  eval::BitGrid narrow;
  narrow.width = 4;
  narrow.rows = {{0, 1, 0, 1}};
  CHECK_THROWS_AS(eval::header_distances(g, narrow), ShapeError);
  eval::BitGrid empty;
  empty.width = 640;
  CHECK_THROWS_AS(eval::header_distances(g, empty), InsufficientDataError);
}
