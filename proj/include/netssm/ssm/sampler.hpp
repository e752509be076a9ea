#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "netssm/ssm/model.hpp"

namespace netssm::ssm {

struct GenerationParams {
  double repetition_penalty = 1.0;
  double temperature = 0.0;  // 0 means pure greedy
  double min_p = 0.0;
  int top_k = 0;  // 0 = off
  double top_p = 1.0;
  uint64_t rng_seed = 0;

  void validate() const {
    if (repetition_penalty < 1.0)
      throw InvariantError("GenerationParams: repetition_penalty must be >= 1");
    if (temperature < 0.0) throw InvariantError("GenerationParams: temperature must be >= 0");
    if (min_p < 0.0 || min_p > 1.0) throw InvariantError("GenerationParams: min_p in [0,1]");
    if (top_k < 0) throw InvariantError("GenerationParams: top_k must be >= 0");
    if (top_p <= 0.0 || top_p > 1.0) throw InvariantError("GenerationParams: top_p in (0,1]");
  }
};

// Stateful sampler: owns the rng and counts argmax fallbacks taken when
// the filters remove every candidate.
template <class Scalar>
class Sampler {
 public:
  explicit Sampler(const GenerationParams& gp) : gp_(gp), rng_(gp.rng_seed) {
    gp_.validate();
  }

  std::size_t fallback_count() const { return fallbacks_; }

  // history_mask[id] != 0 marks tokens already emitted.
  codec::TokenId sample_next(const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& logits,
                             const std::vector<uint8_t>& history_mask) {
    const Eigen::Index V = logits.size();
    std::vector<double> l(static_cast<std::size_t>(V));
    for (Eigen::Index i = 0; i < V; ++i) l[static_cast<std::size_t>(i)] = double(logits(i));

    // 1. repetition penalty on tokens already in the history
    if (gp_.repetition_penalty > 1.0) {
      for (Eigen::Index i = 0; i < V; ++i) {
        if (static_cast<std::size_t>(i) < history_mask.size() &&
            history_mask[static_cast<std::size_t>(i)]) {
          double& x = l[static_cast<std::size_t>(i)];
          x = x >= 0 ? x / gp_.repetition_penalty : x * gp_.repetition_penalty;
        }
      }
    }

    // 2. temperature; 0 short-circuits to greedy
    if (gp_.temperature == 0.0)
      return static_cast<codec::TokenId>(
          std::max_element(l.begin(), l.end()) - l.begin());
    for (double& x : l) x /= gp_.temperature;

    double mx = *std::max_element(l.begin(), l.end());
    std::vector<double> p(l.size());
    double z = 0.0;
    for (std::size_t i = 0; i < l.size(); ++i) {
      p[i] = std::exp(l[i] - mx);
      z += p[i];
    }
    for (double& x : p) x /= z;

    std::vector<std::size_t> idx(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return p[a] > p[b]; });

    // 3. min-p floor relative to the best candidate
    std::size_t keep = idx.size();
    if (gp_.min_p > 0.0) {
      double floor = gp_.min_p * p[idx[0]];
      while (keep > 1 && p[idx[keep - 1]] < floor) --keep;
      if (p[idx[keep - 1]] < floor) keep = 0;
    }
    // 4. top-k
    if (gp_.top_k > 0) keep = std::min(keep, static_cast<std::size_t>(gp_.top_k));
    // 5. nucleus
    if (gp_.top_p < 1.0) {
      double cum = 0.0;
      std::size_t k = 0;
      while (k < keep) {
        cum += p[idx[k]];
        ++k;
        if (cum >= gp_.top_p) break;
      }
      keep = k;
    }

    if (keep == 0) {
      ++fallbacks_;
      return static_cast<codec::TokenId>(idx[0]);
    }

    double mass = 0.0;
    for (std::size_t i = 0; i < keep; ++i) mass += p[idx[i]];
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    double r = unit(rng_) * mass;
    for (std::size_t i = 0; i < keep; ++i) {
      r -= p[idx[i]];
      if (r <= 0.0) return static_cast<codec::TokenId>(idx[i]);
    }
    return static_cast<codec::TokenId>(idx[keep - 1]);
  }

 private:
  GenerationParams gp_;
  std::mt19937_64 rng_;
  std::size_t fallbacks_ = 0;
};

struct GenerationTarget {
  enum class Kind { packets, tokens };
  Kind kind = Kind::tokens;
  std::size_t count = 0;

  static GenerationTarget packets(std::size_t n) { return {Kind::packets, n}; }
  static GenerationTarget tokens(std::size_t n) { return {Kind::tokens, n}; }
};

// Autoregressive generation with incrementally carried state; the seed
// is encoded once and never re-processed.
template <class Scalar>
codec::TokenSequence generate(const Parameters<Scalar>& params, const codec::TokenSequence& seed,
                              GenerationTarget target, const GenerationParams& gp,
                              const codec::Vocabulary& vocab,
                              std::size_t* fallbacks = nullptr) {
  if (seed.empty() || seed.front() < 258 || seed.front() >= vocab.size())
    throw InvariantError("generate: seed must begin with a label token");
  if (seed.size() > params.config.context_len)
    throw ContextError("generate: seed exceeds context length");

  Sampler<Scalar> sampler(gp);
  auto state = StreamState<Scalar>::init(params.config);
  std::vector<uint8_t> history_mask(params.config.vocab_size, 0);

  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> logits;
  std::size_t pkt_count = 0;
  for (auto t : seed) {
    logits = step<Scalar>(params, state, t);
    history_mask[t] = 1;
    if (t == vocab.pkt_token) ++pkt_count;
  }
  std::size_t target_pkts = target.kind == GenerationTarget::Kind::packets
                                ? pkt_count + target.count
                                : 0;

  codec::TokenSequence out = seed;
  std::size_t generated = 0;
  while (true) {
    if (target.kind == GenerationTarget::Kind::tokens && generated >= target.count) break;
    if (target.kind == GenerationTarget::Kind::packets && pkt_count >= target_pkts) break;
    codec::TokenId next = sampler.sample_next(logits, history_mask);
    out.push_back(next);
    history_mask[next] = 1;
    if (next == vocab.pkt_token) ++pkt_count;
    ++generated;
    bool done = (target.kind == GenerationTarget::Kind::tokens && generated >= target.count) ||
                (target.kind == GenerationTarget::Kind::packets && pkt_count >= target_pkts);
    if (!done) logits = step<Scalar>(params, state, next);
  }
  if (fallbacks) *fallbacks = sampler.fallback_count();
  return out;
}

}  // namespace netssm::ssm
