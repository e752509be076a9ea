#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "craft.hpp"
#include "doctest.h"
#include "netssm/errors.hpp"
#include "netssm/eval/compliance.hpp"
#include "toy_corpus.hpp"

using namespace netssm;

namespace {

constexpr uint8_t SYN = pcap::kTcpSyn, ACK = pcap::kTcpAck, FIN = pcap::kTcpFin,
                  RST = pcap::kTcpRst, PSH = pcap::kTcpPsh;

struct Dir {
  std::array<uint8_t, 4> src, dst;
  uint16_t sport, dport;
};

const Dir kUp{{10, 0, 0, 1}, {10, 0, 0, 2}, 50000, 443};
const Dir kDown{{10, 0, 0, 2}, {10, 0, 0, 1}, 443, 50000};

pcap::PacketRecord mk(const Dir& d, uint8_t flags, uint32_t seq, uint32_t ack,
                      std::size_t payload = 0, std::vector<uint8_t> options = {}) {
  craft::TcpSpec s;
  s.src = d.src;
  s.dst = d.dst;
  s.sport = d.sport;
  s.dport = d.dport;
  s.flags = flags;
  s.seq = seq;
  s.ack = ack;
  s.declared_payload = payload;
  s.options = std::move(options);
  return craft::tcp_packet(s);
}

// minimal clean session: handshake, one data exchange, FIN in each
// direction, everything acknowledged
std::vector<pcap::PacketRecord> clean_session(uint32_t c = 1000, uint32_t s = 5000) {
  return {
      mk(kUp, SYN, c, 0),
      mk(kDown, SYN | ACK, s, c + 1),
      mk(kUp, ACK, c + 1, s + 1),
      mk(kUp, PSH | ACK, c + 1, s + 1, 10),
      mk(kDown, ACK, s + 1, c + 11),
      mk(kUp, FIN | ACK, c + 11, s + 1),
      mk(kDown, FIN | ACK, s + 1, c + 12),
      mk(kUp, ACK, c + 12, s + 2),
  };
}

pcap::Trace trace_of(std::vector<pcap::PacketRecord> recs) {
  pcap::Trace t;
  t.records = std::move(recs);
  return t;
}

}  // namespace

TEST_CASE("a clean scripted flow passes every check") {
  auto rec = eval::check_flow(toy::make_flow(0x40, 0));
  CHECK(rec.correct_handshake);
  CHECK(rec.fin_seen);
  CHECK(rec.seq_progress);
  CHECK(rec.ack_progress);
  CHECK(rec.finack_observed);
  CHECK(rec.conflicting_flags == 0);
  CHECK(rec.sack_without_ok == 0);
  CHECK(rec.unexpected_syn == 0);
  CHECK(rec.mss_outside_handshake == 0);
  CHECK(rec.wscale_outside_handshake == 0);
  CHECK(rec.rst_in_established == 0);

  auto hand = eval::check_flow(trace_of(clean_session()));
  CHECK(hand == eval::FlowComplianceRecord{true, true, true, true, true, 0, 0, 0, 0, 0, 0});
}

TEST_CASE("handshake must run SYN, SYN+ACK, ACK in order before data") {
  auto good = clean_session();

  // SYN+ACK first
  auto perm = good;
  std::swap(perm[0], perm[1]);
  CHECK(!eval::check_flow(trace_of(perm)).correct_handshake);

  // wrong ack number on the SYN+ACK
  auto bad_ack = good;
  bad_ack[1] = mk(kDown, SYN | ACK, 5000, 999);
  CHECK(!eval::check_flow(trace_of(bad_ack)).correct_handshake);

  // data arrives before the final ACK
  auto early_data = good;
  early_data[2] = mk(kUp, PSH | ACK, 1001, 5001, 5);
  CHECK(!eval::check_flow(trace_of(early_data)).correct_handshake);

  // completing ACK from the wrong side
  auto wrong_side = good;
  wrong_side[2] = mk(kDown, ACK, 5001, 1001);
  CHECK(!eval::check_flow(trace_of(wrong_side)).correct_handshake);
}

TEST_CASE("forbidden flag combinations are counted and overridable") {
  auto flow = clean_session();
  flow.push_back(mk(kUp, SYN | FIN | ACK, 2000, 5002));
  flow.push_back(mk(kUp, 0, 2001, 0));
  flow.push_back(mk(kDown, FIN | RST, 6000, 2001));
  auto rec = eval::check_flow(trace_of(flow));
  CHECK(rec.conflicting_flags == 3);

  eval::ComplianceOptions lax;
  lax.forbidden_combos = {SYN | RST};
  CHECK(eval::check_flow(trace_of(flow), lax).conflicting_flags == 0);
}

TEST_CASE("SACK blocks require SACK-permitted on a handshake SYN") {
  std::vector<uint8_t> sack_ok{4, 2, 1, 1};  // kind 4 len 2, padded with NOPs
  std::vector<uint8_t> sack_block{5, 10, 0, 0, 0, 1, 0, 0, 0, 2, 1, 1};

  auto with_ok = clean_session();
  with_ok[0] = mk(kUp, SYN, 1000, 0, 0, sack_ok);
  with_ok.push_back(mk(kDown, ACK, 5002, 1012, 0, sack_block));
  CHECK(eval::check_flow(trace_of(with_ok)).sack_without_ok == 0);

  auto without = clean_session();
  without.push_back(mk(kDown, ACK, 5002, 1012, 0, sack_block));
  CHECK(eval::check_flow(trace_of(without)).sack_without_ok == 1);
}

TEST_CASE("MSS and window scale belong on SYN packets") {
  std::vector<uint8_t> mss{2, 4, 5, 0xB4};
  std::vector<uint8_t> wscale{3, 3, 7, 1};

  auto good = clean_session();
  good[0] = mk(kUp, SYN, 1000, 0, 0, mss);
  good[1] = mk(kDown, SYN | ACK, 5000, 1001, 0, wscale);
  auto rec = eval::check_flow(trace_of(good));
  CHECK(rec.mss_outside_handshake == 0);
  CHECK(rec.wscale_outside_handshake == 0);

  auto bad = clean_session();
  bad[3] = mk(kUp, PSH | ACK, 1001, 5001, 10, mss);
  bad[4] = mk(kDown, ACK, 5001, 1011, 0, wscale);
  rec = eval::check_flow(trace_of(bad));
  CHECK(rec.mss_outside_handshake == 1);
  CHECK(rec.wscale_outside_handshake == 1);
}

TEST_CASE("SYNs after establishment are unexpected unless retransmitted") {
  auto flow = clean_session();
  flow.push_back(mk(kUp, SYN, 1000, 0));           // retransmission of the original SYN
  flow.push_back(mk(kDown, SYN | ACK, 5000, 1001));  // retransmission of the SYN+ACK
  CHECK(eval::check_flow(trace_of(flow)).unexpected_syn == 0);

  flow.push_back(mk(kUp, SYN, 7777, 0));  // brand-new SYN mid-session
  CHECK(eval::check_flow(trace_of(flow)).unexpected_syn == 1);
}

TEST_CASE("RST inside an established session is flagged") {
  auto flow = clean_session();
  flow.push_back(mk(kDown, RST | ACK, 5002, 1012));
  auto rec = eval::check_flow(trace_of(flow));
  CHECK(rec.rst_in_established == 1);

  // RST before establishment is a refused connection, not a violation
  auto refused = trace_of({mk(kUp, SYN, 1, 0), mk(kDown, RST | ACK, 0, 2)});
  CHECK(eval::check_flow(refused).rst_in_established == 0);
}

TEST_CASE("sequence and ack numbers may wrap modulo 2^32") {
  uint32_t c = 0xFFFFFFF0u, s = 9000;
  auto flow = trace_of({
      mk(kUp, SYN, c, 0),
      mk(kDown, SYN | ACK, s, c + 1),
      mk(kUp, ACK, c + 1, s + 1),
      mk(kUp, PSH | ACK, c + 1, s + 1, 100),  // seq crosses zero next
      mk(kDown, ACK, s + 1, c + 101),         // ack 0x55: wrapped past zero
      mk(kUp, PSH | ACK, c + 101, s + 1, 10),
  });
  auto rec = eval::check_flow(flow);
  CHECK(rec.correct_handshake);
  CHECK(rec.seq_progress);
  CHECK(rec.ack_progress);

  // genuine regression still fails
  auto bad = clean_session();
  bad.push_back(mk(kUp, PSH | ACK, 900, 5001, 5));  // seq below the handshake
  rec = eval::check_flow(trace_of(bad));
  CHECK(!rec.seq_progress);

  auto bad_ack = clean_session();
  bad_ack.push_back(mk(kUp, ACK, 1012, 4000));  // ack regresses
  CHECK(!eval::check_flow(trace_of(bad_ack)).ack_progress);
}

TEST_CASE("a FIN without a matching ACK is unacknowledged") {
  auto flow = clean_session();
  flow.pop_back();  // drop the final ACK
  flow.pop_back();  // drop the server FIN
  // server never acks past the client FIN
  auto rec = eval::check_flow(trace_of(flow));
  CHECK(rec.fin_seen);
  CHECK(!rec.finack_observed);
}

TEST_CASE("non-TCP input is rejected") {
  craft::TcpSpec s;
  auto udp = craft::tcp_packet(s);
  udp.data[14 + 9] = 17;
  CHECK_THROWS_AS(eval::check_flow(trace_of({udp})), InputError);
}

TEST_CASE("corpus rates are fractions for booleans and means for counts") {
  eval::FlowComplianceRecord clean{true, true, true, true, true, 0, 0, 0, 0, 0, 0};
  eval::FlowComplianceRecord dirty{false, false, true, false, false, 3, 1, 0, 2, 0, 1};
  auto rates = eval::corpus_report({clean, clean, dirty, clean});
  CHECK(rates["correct_handshake"] == doctest::Approx(0.75));
  CHECK(rates["fin_seen"] == doctest::Approx(0.75));
  CHECK(rates["ack_progress"] == doctest::Approx(1.0));
  CHECK(rates["conflicting_flags"] == doctest::Approx(0.75));
  CHECK(rates["mss_outside_handshake"] == doctest::Approx(0.5));
  CHECK(rates["rst_in_established"] == doctest::Approx(0.25));
  CHECK_THROWS_AS(eval::corpus_report({}), InsufficientDataError);
}

TEST_CASE("delta report is a relative percentage, absent at zero baseline") {
  eval::ComplianceRates gt{{"correct_handshake", 0.8}, {"conflicting_flags", 0.0}};
  eval::ComplianceRates gen{{"correct_handshake", 0.6}, {"conflicting_flags", 0.5}};
  auto d = eval::delta_report(gen, gt);
  REQUIRE(d.at("correct_handshake").has_value());
  CHECK(*d.at("correct_handshake") == doctest::Approx(-25.0));
  CHECK(!d.at("conflicting_flags").has_value());

  eval::ComplianceRates missing{{"correct_handshake", 0.6}};
  CHECK_THROWS_AS(eval::delta_report(missing, gt), InputError);
  eval::ComplianceRates renamed{{"correct_handshake", 0.6}, {"other", 0.5}};
  CHECK_THROWS_AS(eval::delta_report(renamed, gt), InputError);
}
