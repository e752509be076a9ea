#include "netssm/pipeline.hpp"

#include <algorithm>

#include "netssm/errors.hpp"
#include "netssm/ssm/model.hpp"

namespace netssm::pipeline {

namespace {

// Token-level generation loop with lenient frame decoding. Returns the
// decoded records (timestamps unassigned); the caller owns timestamping.
std::vector<pcap::PacketRecord> generate_packets(const ssm::ParametersF& model,
                                                 const codec::TokenSequence& seed,
                                                 std::size_t target_packets,
                                                 const ssm::GenerationParams& gp,
                                                 const codec::FrameProfile& profile,
                                                 const codec::Vocabulary& vocab,
                                                 SynthesisReport* report) {
  if (seed.empty() || seed.front() < 258 || seed.front() >= vocab.size())
    throw InvariantError("synthesize: seed must begin with a label token");
  if (seed.size() > model.config.context_len)
    throw ContextError("synthesize: seed exceeds context length");

  codec::FrameSplit seed_frames = codec::split_frames(seed, profile, vocab, /*strict=*/true);
  if (seed_frames.frames.size() > target_packets)
    throw InvariantError("synthesize: target below seed packet count");

  std::vector<pcap::PacketRecord> packets;
  for (const auto& f : seed_frames.frames) packets.push_back(codec::decode_packet(f, profile));
  if (packets.size() == target_packets) return packets;

  ssm::Sampler<float> sampler(gp);
  auto state = ssm::StreamState<float>::init(model.config);
  std::vector<uint8_t> history_mask(model.config.vocab_size, 0);
  Eigen::VectorXf logits;
  for (auto t : seed) {
    logits = ssm::step<float>(model, state, t);
    history_mask[t] = 1;
  }

  const std::size_t budget = 2 * target_packets * (profile.frame_len() + 1);
  std::size_t dropped = 0, generated = 0;
  codec::TokenSequence frame;
  while (packets.size() < target_packets) {
    if (generated >= budget) {
      if (report) {
        report->dropped_frames = dropped;
        report->sampler_fallbacks = sampler.fallback_count();
        report->generated_tokens = generated;
      }
      throw PartialOutputError("synthesize: retry budget exhausted", packets.size(),
                               target_packets);
    }
    codec::TokenId next = sampler.sample_next(logits, history_mask);
    history_mask[next] = 1;
    ++generated;
    if (next == vocab.pkt_token) {
      bool kept = false;
      if (frame.size() == profile.frame_len()) {
        try {
          packets.push_back(codec::decode_packet(frame, profile));
          kept = true;
        } catch (const Error&) {
        }
      }
      if (!kept) ++dropped;
      frame.clear();
    } else {
      frame.push_back(next);
    }
    if (packets.size() < target_packets) logits = ssm::step<float>(model, state, next);
  }
  if (report) {
    report->dropped_frames = dropped;
    report->sampler_fallbacks = sampler.fallback_count();
    report->generated_tokens = generated;
  }
  return packets;
}

pcap::Trace with_timestamps(std::vector<pcap::PacketRecord> records,
                            const pcap::Trace& iat_source, uint64_t rng_seed) {
  pcap::Trace out;
  out.records = std::move(records);
  double base =
      iat_source.records.empty() ? 0.0 : iat_source.records.front().timestamp();
  return pcap::assign_timestamps(out, pcap::harvest_iats(iat_source), base, rng_seed);
}

}  // namespace

codec::TokenSequence make_seed(const SeedSpec& spec, const codec::FrameProfile& profile,
                               const codec::Vocabulary& vocab) {
  if (spec.n_packets < 1 || spec.n_packets > spec.source_trace.records.size())
    throw RangeError("make_seed: n_packets outside [1, " +
                     std::to_string(spec.source_trace.records.size()) + "]");
  pcap::Trace prefix;
  prefix.link_type = spec.source_trace.link_type;
  prefix.records.assign(spec.source_trace.records.begin(),
                        spec.source_trace.records.begin() +
                            std::ptrdiff_t(spec.n_packets));
  return codec::build_sample(prefix, spec.label, profile, vocab);
}

pcap::Trace synthesize(const ssm::ParametersF& model, const codec::TokenSequence& seed,
                       std::size_t target_packets, const ssm::GenerationParams& gp,
                       const pcap::Trace& iat_source, uint64_t rng_seed,
                       const codec::FrameProfile& profile, const codec::Vocabulary& vocab,
                       SynthesisReport* report) {
  auto packets = generate_packets(model, seed, target_packets, gp, profile, vocab, report);
  return with_timestamps(std::move(packets), iat_source, rng_seed);
}

pcap::Trace chain_generate(const PhaseChain& chain, const codec::TokenSequence& initial_seed,
                           const std::vector<std::size_t>& targets,
                           const ssm::GenerationParams& gp, const pcap::Trace& iat_source,
                           uint64_t rng_seed, const codec::FrameProfile& profile,
                           const codec::Vocabulary& vocab, SynthesisReport* report) {
  if (chain.phases.empty()) throw InvariantError("chain_generate: empty chain");
  if (targets.size() != chain.phases.size())
    throw ShapeError("chain_generate: one target per phase required");
  if (initial_seed.empty())
    throw InvariantError("chain_generate: empty initial seed");
  std::string label = vocab.special_name(initial_seed.front());

  std::vector<pcap::PacketRecord> all;
  codec::TokenSequence seed = initial_seed;
  for (std::size_t i = 0; i < chain.phases.size(); ++i) {
    const auto& phase = chain.phases[i];
    if (!phase.model) throw InvariantError("chain_generate: phase without a model");
    // later phases regenerate their 1-packet seed and do not re-emit it
    std::size_t phase_target = i == 0 ? targets[0] : targets[i] + 1;
    SynthesisReport phase_report;
    std::vector<pcap::PacketRecord> packets;
    try {
      packets = generate_packets(*phase.model, seed, phase_target, gp, profile, vocab,
                                 &phase_report);
    } catch (const ChainError&) {
      throw;
    } catch (const Error& e) {
      throw ChainError("chain_generate: phase '" + phase.name + "' failed: " + e.what(),
                       phase.name);
    }
    if (report) {
      report->dropped_frames += phase_report.dropped_frames;
      report->sampler_fallbacks += phase_report.sampler_fallbacks;
      report->generated_tokens += phase_report.generated_tokens;
    }
    std::size_t skip = i == 0 ? 0 : 1;
    all.insert(all.end(), packets.begin() + std::ptrdiff_t(skip), packets.end());

    if (i + 1 < chain.phases.size()) {
      SeedSpec next;
      next.label = label;
      next.source_trace.records = {packets.back()};
      next.n_packets = 1;
      seed = make_seed(next, profile, vocab);
    }
  }
  return with_timestamps(std::move(all), iat_source, rng_seed);
}

PhaseSplit split_phases(const pcap::Trace& flow) {
  std::vector<pcap::ParsedPacket> pkts;
  for (std::size_t i = 0; i < flow.records.size(); ++i) {
    auto p = pcap::parse_packet(flow.records[i]);
    if (!p || !p->is_tcp)
      throw InputError("split_phases: non-TCP packet at index " + std::to_string(i));
    pkts.push_back(std::move(*p));
  }
  auto dir_of = [](const pcap::ParsedPacket& p) {
    return p.tuple.src_ip + ':' + std::to_string(p.tuple.src_port);
  };

  // handshake = through the ACK completing the three-way handshake
  std::size_t handshake_end = 0;  // exclusive
  bool syn = false, synack = false;
  std::string client;
  uint32_t syn_seq = 0, synack_seq = 0;
  for (std::size_t i = 0; i < pkts.size(); ++i) {
    const auto& p = pkts[i];
    if (p.payload_len > 0) break;
    uint8_t f = p.flags;
    if (!syn) {
      if ((f & pcap::kTcpSyn) && !(f & pcap::kTcpAck)) {
        syn = true;
        client = dir_of(p);
        syn_seq = p.seq;
      }
    } else if (!synack) {
      if ((f & pcap::kTcpSyn) && (f & pcap::kTcpAck) && dir_of(p) != client &&
          p.ack == syn_seq + 1) {
        synack = true;
        synack_seq = p.seq;
      }
    } else if (!(f & pcap::kTcpSyn) && (f & pcap::kTcpAck) && dir_of(p) == client &&
               p.ack == synack_seq + 1) {
      handshake_end = i + 1;
      break;
    }
  }

  std::size_t teardown_start = pkts.size();
  for (std::size_t i = handshake_end; i < pkts.size(); ++i) {
    if (pkts[i].flags & (pcap::kTcpFin | pcap::kTcpRst)) {
      teardown_start = i;
      break;
    }
  }

  PhaseSplit out;
  out.handshake.link_type = out.data.link_type = out.teardown.link_type = flow.link_type;
  for (std::size_t i = 0; i < flow.records.size(); ++i) {
    if (i < handshake_end)
      out.handshake.records.push_back(flow.records[i]);
    else if (i < teardown_start)
      out.data.records.push_back(flow.records[i]);
    else
      out.teardown.records.push_back(flow.records[i]);
  }
  return out;
}

}  // namespace netssm::pipeline
