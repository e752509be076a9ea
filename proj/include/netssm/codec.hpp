#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "netssm/pcap.hpp"

namespace netssm::codec {

using TokenId = uint32_t;
using TokenSequence = std::vector<TokenId>;

// Byte tokens are the identity map 0..255; specials start at 256.
struct Vocabulary {
  TokenId pad_token = 256;
  TokenId pkt_token = 257;
  std::map<std::string, TokenId> label_tokens;

  static Vocabulary with_labels(const std::vector<std::string>& labels);

  TokenId size() const { return 258 + static_cast<TokenId>(label_tokens.size()); }
  TokenId label(const std::string& name) const;
  bool is_special(TokenId id) const { return id >= 256; }
  // Name of a special token, or empty for byte tokens.
  std::string special_name(TokenId id) const;

  std::string to_json() const;
  static Vocabulary from_json(const std::string& json);
  uint64_t hash() const;  // FNV-1a over the canonical JSON form
};

// Fixed per-packet token frame. Default: Ethernet 14 + IPv4 20 (no
// options) + TCP up to 60 (options padded) = 94 tokens.
struct FrameProfile {
  std::size_t eth_len = 14;
  std::size_t ip_len = 20;
  std::size_t transport_max = 60;

  std::size_t frame_len() const { return eth_len + ip_len + transport_max; }
};

TokenSequence encode_packet(const pcap::PacketRecord& pkt, const FrameProfile& profile,
                            const Vocabulary& vocab);

// Strips pad tokens and reassembles the header bytes. Consistency issues
// (IP total length vs header bytes, TCP data offset) are appended to
// `warnings` when provided, never rewritten.
pcap::PacketRecord decode_packet(const TokenSequence& seq, const FrameProfile& profile,
                                 std::vector<std::string>* warnings = nullptr);

TokenSequence build_sample(const pcap::Trace& trace, const std::string& label,
                           const FrameProfile& profile, const Vocabulary& vocab);

std::vector<TokenSequence> window_sample(const TokenSequence& seq, std::size_t context_len,
                                         const FrameProfile& profile, const Vocabulary& vocab);

std::string emit_text(const TokenSequence& seq, const Vocabulary& vocab);
TokenSequence parse_text(const std::string& text, const Vocabulary& vocab);

// Splits the token stream of a sample back into per-packet frames.
// Strict mode throws on any grammar violation; lenient mode drops
// malformed frames and counts them.
struct FrameSplit {
  std::vector<TokenSequence> frames;
  std::size_t dropped = 0;
};
FrameSplit split_frames(const TokenSequence& seq, const FrameProfile& profile,
                        const Vocabulary& vocab, bool strict);

}  // namespace netssm::codec
