#include "netssm/codec.hpp"

#include <algorithm>
#include <sstream>

#include "json.hpp"
#include "netssm/errors.hpp"

namespace netssm::codec {

using nlohmann::json;

Vocabulary Vocabulary::with_labels(const std::vector<std::string>& labels) {
  Vocabulary v;
  TokenId next = 258;
  for (const auto& name : labels) {
    if (name.empty() || name == "pad" || name == "pkt")
      throw VocabularyError("reserved or empty label name: '" + name + "'");
    auto [it, inserted] = v.label_tokens.emplace(name, next);
    if (!inserted) throw VocabularyError("duplicate label: " + name);
    ++next;
  }
  return v;
}

TokenId Vocabulary::label(const std::string& name) const {
  auto it = label_tokens.find(name);
  if (it == label_tokens.end()) throw VocabularyError("unknown label: " + name);
  return it->second;
}

std::string Vocabulary::special_name(TokenId id) const {
  if (id == pad_token) return "pad";
  if (id == pkt_token) return "pkt";
  for (const auto& [name, tid] : label_tokens)
    if (tid == id) return name;
  return {};
}

std::string Vocabulary::to_json() const {
  // label order by token ID so serialization is stable
  std::vector<std::pair<TokenId, std::string>> ordered;
  for (const auto& [name, id] : label_tokens) ordered.emplace_back(id, name);
  std::sort(ordered.begin(), ordered.end());
  json labels = json::array();
  for (const auto& [id, name] : ordered) labels.push_back(name);
  json j{{"byte_tokens", 256}, {"pad_token", pad_token}, {"pkt_token", pkt_token},
         {"labels", labels}};
  return j.dump();
}

Vocabulary Vocabulary::from_json(const std::string& text) {
  json j = json::parse(text);
  std::vector<std::string> labels = j.at("labels").get<std::vector<std::string>>();
  return with_labels(labels);
}

uint64_t Vocabulary::hash() const {
  uint64_t h = 0xCBF29CE484222325ull;
  for (char c : to_json()) {
    h ^= static_cast<uint8_t>(c);
    h *= 0x100000001B3ull;
  }
  return h;
}

TokenSequence encode_packet(const pcap::PacketRecord& pkt, const FrameProfile& profile,
                            const Vocabulary& vocab) {
  auto parsed = pcap::parse_packet(pkt);
  if (!parsed) throw ProfileMismatchError("encode: packet does not parse as Eth+IP");
  if (parsed->is_ipv6 && profile.ip_len != 40)
    throw ProfileMismatchError("encode: IPv6 packet under an IPv4 profile (ip layer)");
  if (!parsed->is_ipv6 && parsed->ip_header_len != profile.ip_len)
    throw ProfileMismatchError("encode: IP header with options not covered by profile (ip layer)");
  if (parsed->tuple.ip_proto != 6 && parsed->tuple.ip_proto != 17)
    throw ProfileMismatchError("encode: not TCP or UDP (transport layer)");
  std::size_t header_end = parsed->transport_offset + parsed->transport_header_len;
  if (parsed->transport_header_len > profile.transport_max || header_end > pkt.data.size())
    throw ProfileMismatchError("encode: transport header exceeds profile (transport layer)");

  TokenSequence seq;
  seq.reserve(profile.frame_len());
  for (std::size_t i = 0; i < header_end; ++i) seq.push_back(pkt.data[i]);
  seq.resize(profile.frame_len(), vocab.pad_token);
  return seq;
}

pcap::PacketRecord decode_packet(const TokenSequence& seq, const FrameProfile& profile,
                                 std::vector<std::string>* warnings) {
  if (seq.size() != profile.frame_len())
    throw FrameError("decode: frame has " + std::to_string(seq.size()) + " tokens, expected " +
                     std::to_string(profile.frame_len()));
  Vocabulary stub;  // pad/pkt IDs are fixed; labels irrelevant here
  pcap::PacketRecord rec;
  for (TokenId t : seq) {
    if (t <= 255)
      rec.data.push_back(static_cast<uint8_t>(t));
    else if (t != stub.pad_token)
      throw VocabularyError("decode: non-byte, non-pad token " + std::to_string(t) + " in frame");
  }
  if (rec.data.empty()) throw FrameError("decode: all-pad frame (empty packet)");
  rec.incl_len = rec.orig_len = static_cast<uint32_t>(rec.data.size());

  if (warnings) {
    auto parsed = pcap::parse_packet(rec);
    if (!parsed) {
      warnings->push_back("decoded bytes do not parse as Eth+IP");
    } else {
      std::size_t captured = rec.data.size() - parsed->ip_offset;
      if (!parsed->is_ipv6) {
        const uint8_t* ip = rec.data.data() + parsed->ip_offset;
        std::size_t total_len = std::size_t(ip[2]) << 8 | ip[3];
        if (total_len < captured)
          warnings->push_back("IP total length smaller than decoded header bytes");
      }
      if (parsed->is_tcp &&
          parsed->transport_offset + parsed->transport_header_len != rec.data.size())
        warnings->push_back("TCP data offset inconsistent with decoded byte count");
    }
  }
  return rec;
}

TokenSequence build_sample(const pcap::Trace& trace, const std::string& label,
                           const FrameProfile& profile, const Vocabulary& vocab) {
  TokenSequence seq;
  seq.reserve(1 + trace.records.size() * (profile.frame_len() + 1));
  seq.push_back(vocab.label(label));
  for (const auto& rec : trace.records) {
    auto frame = encode_packet(rec, profile, vocab);
    seq.insert(seq.end(), frame.begin(), frame.end());
    seq.push_back(vocab.pkt_token);
  }
  return seq;
}

std::vector<TokenSequence> window_sample(const TokenSequence& seq, std::size_t context_len,
                                         const FrameProfile& profile, const Vocabulary& vocab) {
  std::size_t per_packet = profile.frame_len() + 1;
  if (context_len < profile.frame_len() + 2)
    throw InvariantError("window_sample: context length too small for one packet");
  if (seq.empty() || seq.front() < 258 || seq.front() >= vocab.size())
    throw VocabularyError("window_sample: sample does not start with a label token");
  TokenId label = seq.front();
  std::size_t packets_per_chunk = (context_len - 1) / per_packet;
  std::size_t n_packets = (seq.size() - 1) / per_packet;
  if ((seq.size() - 1) % per_packet != 0)
    throw FrameError("window_sample: sample length violates the frame grammar");

  std::vector<TokenSequence> chunks;
  if (n_packets == 0) {
    chunks.push_back({label});
    return chunks;
  }
  for (std::size_t start = 0; start < n_packets; start += packets_per_chunk) {
    std::size_t count = std::min(packets_per_chunk, n_packets - start);
    TokenSequence chunk;
    chunk.reserve(1 + count * per_packet);
    chunk.push_back(label);
    auto begin = seq.begin() + 1 + static_cast<std::ptrdiff_t>(start * per_packet);
    chunk.insert(chunk.end(), begin, begin + static_cast<std::ptrdiff_t>(count * per_packet));
    chunks.push_back(std::move(chunk));
  }
  return chunks;
}

std::string emit_text(const TokenSequence& seq, const Vocabulary& vocab) {
  std::ostringstream os;
  bool first = true;
  for (TokenId t : seq) {
    if (!first) os << ' ';
    first = false;
    if (t <= 255) {
      os << t;
    } else {
      std::string name = vocab.special_name(t);
      if (name.empty()) throw VocabularyError("emit_text: unknown token " + std::to_string(t));
      os << "<|" << name << "|>";
    }
  }
  return os.str();
}

TokenSequence parse_text(const std::string& text, const Vocabulary& vocab) {
  TokenSequence seq;
  std::istringstream is(text);
  std::string word;
  std::size_t pos = 0;
  while (is >> word) {
    if (word.size() > 4 && word.starts_with("<|") && word.ends_with("|>")) {
      std::string name = word.substr(2, word.size() - 4);
      if (name == "pad")
        seq.push_back(vocab.pad_token);
      else if (name == "pkt")
        seq.push_back(vocab.pkt_token);
      else {
        auto it = vocab.label_tokens.find(name);
        if (it == vocab.label_tokens.end())
          throw VocabularyError("parse_text: unknown special <|" + name + "|> at token " +
                                std::to_string(pos));
        seq.push_back(it->second);
      }
    } else {
      unsigned long v = 0;
      std::size_t used = 0;
      try {
        v = std::stoul(word, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != word.size() || v > 255)
        throw VocabularyError("parse_text: invalid token '" + word + "' at token " +
                              std::to_string(pos));
      seq.push_back(static_cast<TokenId>(v));
    }
    ++pos;
  }
  return seq;
}

FrameSplit split_frames(const TokenSequence& seq, const FrameProfile& profile,
                        const Vocabulary& vocab, bool strict) {
  FrameSplit out;
  std::size_t i = 0;
  if (!seq.empty() && seq.front() >= 258 && seq.front() < vocab.size()) i = 1;  // label prefix

  TokenSequence frame;
  auto flush = [&](bool closed) {
    bool ok = closed && frame.size() == profile.frame_len();
    if (ok)
      for (TokenId t : frame)
        if (t > 255 && t != vocab.pad_token) ok = false;
    if (ok && std::all_of(frame.begin(), frame.end(),
                          [&](TokenId t) { return t == vocab.pad_token; }))
      ok = false;
    if (ok) {
      out.frames.push_back(frame);
    } else if (!frame.empty() || closed) {
      if (strict) throw FrameError("split_frames: malformed frame at token " + std::to_string(i));
      ++out.dropped;
    }
    frame.clear();
  };

  for (; i < seq.size(); ++i) {
    if (seq[i] == vocab.pkt_token)
      flush(true);
    else
      frame.push_back(seq[i]);
  }
  if (!frame.empty()) flush(false);  // trailing partial frame
  return out;
}

}  // namespace netssm::codec
