#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <random>

#include "craft.hpp"
#include "doctest.h"
#include "netssm/codec.hpp"
#include "netssm/errors.hpp"

using namespace netssm;

namespace {

pcap::PacketRecord random_tcp_packet(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> byte(0, 255);
  craft::TcpSpec s;
  for (auto& b : s.src) b = uint8_t(byte(rng));
  for (auto& b : s.dst) b = uint8_t(byte(rng));
  s.sport = uint16_t(byte(rng) << 8 | byte(rng));
  s.dport = uint16_t(byte(rng) << 8 | byte(rng));
  s.seq = uint32_t(rng());
  s.ack = uint32_t(rng());
  s.flags = uint8_t(byte(rng));
  s.window = uint16_t(byte(rng) << 8 | byte(rng));
  std::size_t opt_words = std::size_t(rng() % 11);  // 0..40 option bytes
  for (std::size_t i = 0; i < opt_words * 4; ++i) s.options.push_back(uint8_t(byte(rng)));
  s.declared_payload = std::size_t(rng() % 1400);
  return craft::tcp_packet(s);
}

}  // namespace

TEST_CASE("frame arithmetic for optionless and optioned packets") {
  codec::Vocabulary vocab;
  codec::FrameProfile profile;
  craft::TcpSpec plain;
  auto seq = codec::encode_packet(craft::tcp_packet(plain), profile, vocab);
  REQUIRE(seq.size() == 94);
  for (std::size_t i = 0; i < 54; ++i) CHECK(seq[i] <= 255);
  for (std::size_t i = 54; i < 94; ++i) CHECK(seq[i] == vocab.pad_token);

  craft::TcpSpec with_opts;
  with_opts.options.assign(20, 1);  // 20 B of NOPs
  seq = codec::encode_packet(craft::tcp_packet(with_opts), profile, vocab);
  REQUIRE(seq.size() == 94);
  for (std::size_t i = 0; i < 74; ++i) CHECK(seq[i] <= 255);
  for (std::size_t i = 74; i < 94; ++i) CHECK(seq[i] == vocab.pad_token);
}

TEST_CASE("byte tokens are the identity map") {
  codec::Vocabulary vocab;
  codec::FrameProfile profile;
  craft::TcpSpec s;
  auto pkt = craft::tcp_packet(s);
  auto seq = codec::encode_packet(pkt, profile, vocab);
  for (std::size_t i = 0; i < 54; ++i) CHECK(seq[i] == pkt.data[i]);
}

TEST_CASE("encode-decode round trips 1000 random valid headers") {
  std::mt19937_64 rng(11);
  codec::Vocabulary vocab;
  codec::FrameProfile profile;
  for (int i = 0; i < 1000; ++i) {
    auto pkt = random_tcp_packet(rng);
    auto seq = codec::encode_packet(pkt, profile, vocab);
    REQUIRE(seq.size() == profile.frame_len());
    auto back = codec::decode_packet(seq, profile);
    CHECK(back.data == pkt.data);
  }
}

TEST_CASE("profile mismatches name the offending layer") {
  codec::Vocabulary vocab;
  codec::FrameProfile profile;
  pcap::PacketRecord arp;
  arp.data.assign(42, 0);
  arp.data[12] = 0x08;
  arp.data[13] = 0x06;
  arp.incl_len = arp.orig_len = 42;
  CHECK_THROWS_AS(codec::encode_packet(arp, profile, vocab), ProfileMismatchError);

  // ICMP: parses as IP but not TCP/UDP
  craft::TcpSpec s;
  auto pkt = craft::tcp_packet(s);
  pkt.data[14 + 9] = 1;
  try {
    codec::encode_packet(pkt, profile, vocab);
    FAIL("expected ProfileMismatchError");
  } catch (const ProfileMismatchError& e) {
    CHECK(std::string(e.what()).find("transport") != std::string::npos);
  }
}

TEST_CASE("decode rejects malformed frames") {
  codec::Vocabulary vocab;
  codec::FrameProfile profile;
  codec::TokenSequence all_pad(94, vocab.pad_token);
  CHECK_THROWS_AS(codec::decode_packet(all_pad, profile), FrameError);

  codec::TokenSequence with_pkt(94, 0);
  with_pkt[10] = vocab.pkt_token;
  CHECK_THROWS_AS(codec::decode_packet(with_pkt, profile), VocabularyError);

  codec::TokenSequence short_frame(93, 0);
  CHECK_THROWS_AS(codec::decode_packet(short_frame, profile), FrameError);
}

TEST_CASE("decode surfaces consistency warnings without rewriting") {
  codec::Vocabulary vocab;
  codec::FrameProfile profile;
  craft::TcpSpec s;
  auto pkt = craft::tcp_packet(s);
  pkt.data[14 + 2] = 0;
  pkt.data[14 + 3] = 20;  // IP total length below the header byte count
  auto seq = codec::encode_packet(pkt, profile, vocab);
  std::vector<std::string> warnings;
  auto back = codec::decode_packet(seq, profile, &warnings);
  CHECK(back.data == pkt.data);  // bytes untouched
  CHECK(!warnings.empty());
}

TEST_CASE("build_sample follows the label (frame pkt)* grammar") {
  auto vocab = codec::Vocabulary::with_labels({"netflix"});
  codec::FrameProfile profile;
  craft::TcpSpec s;
  pcap::Trace t;
  t.records = {craft::tcp_packet(s), craft::tcp_packet(s)};
  auto sample = codec::build_sample(t, "netflix", profile, vocab);
  CHECK(sample.size() == 1 + 2 * 95);
  CHECK(sample.front() == vocab.label("netflix"));
  CHECK(std::count(sample.begin(), sample.end(), vocab.pkt_token) == 2);

  pcap::Trace empty;
  auto just_label = codec::build_sample(empty, "netflix", profile, vocab);
  CHECK(just_label == codec::TokenSequence{vocab.label("netflix")});

  CHECK_THROWS_AS(codec::build_sample(t, "bogus", profile, vocab), VocabularyError);
}

TEST_CASE("window_sample splits at packet boundaries") {
  auto vocab = codec::Vocabulary::with_labels({"netflix"});
  codec::FrameProfile profile;
  craft::TcpSpec s;
  pcap::Trace t;
  for (int i = 0; i < 1051; ++i) t.records.push_back(craft::tcp_packet(s));
  auto sample = codec::build_sample(t, "netflix", profile, vocab);

  auto small = codec::window_sample(sample, 100000, profile, vocab);
  // floor((100000-1)/95) = 1052 packets fit, so one chunk
  REQUIRE(small.size() == 1);
  CHECK(small[0] == sample);

  auto chunks = codec::window_sample(sample, 95 * 100 + 1, profile, vocab);
  REQUIRE(chunks.size() == 11);  // 100 packets per chunk, 51 in the last
  CHECK(chunks.back().size() == 1 + 51 * 95);
  codec::TokenSequence joined{vocab.label("netflix")};
  for (const auto& c : chunks) {
    CHECK(c.front() == vocab.label("netflix"));
    joined.insert(joined.end(), c.begin() + 1, c.end());
  }
  CHECK(joined == sample);
}

TEST_CASE("text form matches the seed example") {
  auto vocab = codec::Vocabulary::with_labels({"amazon"});
  codec::TokenSequence seq{vocab.label("amazon"), 188, 34, 203, vocab.pkt_token};
  CHECK(codec::emit_text(seq, vocab) == "<|amazon|> 188 34 203 <|pkt|>");
  CHECK(codec::parse_text("<|amazon|> 188 34 203 <|pkt|>", vocab) == seq);
}

TEST_CASE("parse_text round trips and reports error positions") {
  auto vocab = codec::Vocabulary::with_labels({"a", "b"});
  std::mt19937_64 rng(3);
  for (int i = 0; i < 20; ++i) {
    codec::TokenSequence seq{vocab.label("b")};
    for (int k = 0; k < 30; ++k) seq.push_back(codec::TokenId(rng() % 256));
    seq.push_back(vocab.pkt_token);
    CHECK(codec::parse_text(codec::emit_text(seq, vocab), vocab) == seq);
  }

  try {
    codec::parse_text("<|bogus|> 1", vocab);
    FAIL("expected VocabularyError");
  } catch (const VocabularyError& e) {
    CHECK(std::string(e.what()).find("token 0") != std::string::npos);
  }
  try {
    codec::parse_text("1 2 999", vocab);
    FAIL("expected VocabularyError");
  } catch (const VocabularyError& e) {
    CHECK(std::string(e.what()).find("token 2") != std::string::npos);
  }
}

TEST_CASE("split_frames enforces the grammar in strict mode only") {
  auto vocab = codec::Vocabulary::with_labels({"x"});
  codec::FrameProfile profile;
  craft::TcpSpec s;
  pcap::Trace t;
  t.records = {craft::tcp_packet(s), craft::tcp_packet(s)};
  auto sample = codec::build_sample(t, "x", profile, vocab);

  auto split = codec::split_frames(sample, profile, vocab, true);
  CHECK(split.frames.size() == 2);
  CHECK(split.dropped == 0);

  // corrupt the first frame's length
  codec::TokenSequence bad = sample;
  bad.erase(bad.begin() + 5);
  CHECK_THROWS_AS(codec::split_frames(bad, profile, vocab, true), FrameError);
  auto lenient = codec::split_frames(bad, profile, vocab, false);
  CHECK(lenient.frames.size() == 1);
  CHECK(lenient.dropped == 1);

  // trailing partial frame is dropped in lenient mode
  codec::TokenSequence trailing = sample;
  trailing.push_back(42);
  lenient = codec::split_frames(trailing, profile, vocab, false);
  CHECK(lenient.frames.size() == 2);
  CHECK(lenient.dropped == 1);
}

TEST_CASE("vocabulary serialization and hashing are stable") {
  auto v = codec::Vocabulary::with_labels({"netflix", "youtube"});
  auto v2 = codec::Vocabulary::from_json(v.to_json());
  CHECK(v2.label("netflix") == v.label("netflix"));
  CHECK(v2.hash() == v.hash());
  CHECK(v.size() == 260);
  CHECK(codec::Vocabulary::with_labels({"other"}).hash() != v.hash());

  CHECK_THROWS_AS(codec::Vocabulary::with_labels({"pad"}), VocabularyError);
  CHECK_THROWS_AS(codec::Vocabulary::with_labels({"a", "a"}), VocabularyError);
  CHECK_THROWS_AS(v.label("missing"), VocabularyError);
}
