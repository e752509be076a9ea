#pragma once

#include <string>
#include <vector>

#include "netssm/codec.hpp"
#include "netssm/pcap.hpp"
#include "netssm/ssm/sampler.hpp"

namespace netssm::pipeline {

struct SeedSpec {
  std::string label;
  pcap::Trace source_trace;
  std::size_t n_packets = 1;
};

codec::TokenSequence make_seed(const SeedSpec& spec, const codec::FrameProfile& profile,
                               const codec::Vocabulary& vocab);

struct SynthesisReport {
  std::size_t dropped_frames = 0;
  std::size_t sampler_fallbacks = 0;
  std::size_t generated_tokens = 0;
};

// Generate until target_packets valid frames exist (seed frames count),
// lenient-dropping malformed ones, then assign timestamps sampled from
// the IAT distribution of iat_source. The retry budget is twice the
// token count a clean run would need; exhausting it raises
// PartialOutputError carrying the shortfall.
pcap::Trace synthesize(const ssm::ParametersF& model, const codec::TokenSequence& seed,
                       std::size_t target_packets, const ssm::GenerationParams& gp,
                       const pcap::Trace& iat_source, uint64_t rng_seed,
                       const codec::FrameProfile& profile, const codec::Vocabulary& vocab,
                       SynthesisReport* report = nullptr);

struct Phase {
  std::string name;
  const ssm::ParametersF* model = nullptr;
};

struct PhaseChain {
  std::vector<Phase> phases;
};

// Phase 1 runs from initial_seed toward targets[0] total packets; each
// later phase is seeded with the label token plus the final packet of
// the previous phase, generates 1 + targets[i] packets, and contributes
// targets[i] of them (the carried seed packet is not re-emitted). The
// result holds exactly the sum of the per-phase targets.
pcap::Trace chain_generate(const PhaseChain& chain, const codec::TokenSequence& initial_seed,
                           const std::vector<std::size_t>& targets,
                           const ssm::GenerationParams& gp, const pcap::Trace& iat_source,
                           uint64_t rng_seed, const codec::FrameProfile& profile,
                           const codec::Vocabulary& vocab,
                           SynthesisReport* report = nullptr);

// Flag-based phase cut for building per-phase training sets: handshake
// runs through the ACK completing the three-way handshake, teardown
// starts at the first FIN or RST, data is everything between.
struct PhaseSplit {
  pcap::Trace handshake;
  pcap::Trace data;
  pcap::Trace teardown;
};

PhaseSplit split_phases(const pcap::Trace& flow);

}  // namespace netssm::pipeline
