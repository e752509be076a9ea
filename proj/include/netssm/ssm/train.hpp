#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "netssm/ssm/model.hpp"

namespace netssm::ssm {

struct TrainConfig {
  double learning_rate = 5e-4;
  double grad_clip = 1.0;
  uint32_t epochs = 30;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double weight_decay = 0.01;
  uint64_t rng_seed = 0;

  void validate() const {
    if (learning_rate <= 0) throw InvariantError("TrainConfig: learning_rate must be > 0");
    if (grad_clip <= 0) throw InvariantError("TrainConfig: grad_clip must be > 0");
  }
};

// Scales grads in place so their global L2 norm is at most max_norm.
// Returns the pre-clip norm.
template <class Scalar>
double clip_global_norm(Parameters<Scalar>& grads, double max_norm) {
  double sq = 0.0;
  grads.for_each_tensor(
      [&](const std::string&, auto& t) { sq += double(t.squaredNorm()); });
  double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    Scalar scale = Scalar(max_norm / norm);
    grads.for_each_tensor([&](const std::string&, auto& t) { t *= scale; });
  }
  return norm;
}

template <class Scalar>
struct AdamW {
  TrainConfig cfg;
  Parameters<Scalar> m, v;
  uint64_t t = 0;

  explicit AdamW(const Parameters<Scalar>& params, const TrainConfig& cfg)
      : cfg(cfg), m(params.zeros_like()), v(params.zeros_like()) {}

  void update(Parameters<Scalar>& params, Parameters<Scalar>& grads) {
    ++t;
    const Scalar b1 = Scalar(cfg.beta1), b2 = Scalar(cfg.beta2);
    const Scalar bc1 = Scalar(1.0 - std::pow(cfg.beta1, double(t)));
    const Scalar bc2 = Scalar(1.0 - std::pow(cfg.beta2, double(t)));
    const Scalar lr = Scalar(cfg.learning_rate), eps = Scalar(cfg.adam_eps);
    const Scalar wd = Scalar(cfg.weight_decay);

    auto* mm = &m;
    auto* vv = &v;
    // walk the parameter, moment and gradient trees in lockstep
    auto step_tensor = [&](auto& p, auto& mt, auto& vt, auto& g) {
      mt = b1 * mt + (Scalar(1) - b1) * g;
      vt = (b2 * vt.array() + (Scalar(1) - b2) * g.array().square()).matrix();
      auto mhat = mt.array() / bc1;
      auto vhat = vt.array() / bc2;
      p = (p.array() - lr * (mhat / (vhat.sqrt() + eps) + wd * p.array())).matrix();
    };
    step_tensor(params.embedding, mm->embedding, vv->embedding, grads.embedding);
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
      step_tensor(params.layers[l].gain, mm->layers[l].gain, vv->layers[l].gain,
                  grads.layers[l].gain);
      step_tensor(params.layers[l].w_dt, mm->layers[l].w_dt, vv->layers[l].w_dt,
                  grads.layers[l].w_dt);
      step_tensor(params.layers[l].b_dt, mm->layers[l].b_dt, vv->layers[l].b_dt,
                  grads.layers[l].b_dt);
      step_tensor(params.layers[l].w_b, mm->layers[l].w_b, vv->layers[l].w_b,
                  grads.layers[l].w_b);
      step_tensor(params.layers[l].w_c, mm->layers[l].w_c, vv->layers[l].w_c,
                  grads.layers[l].w_c);
      step_tensor(params.layers[l].a_log, mm->layers[l].a_log, vv->layers[l].a_log,
                  grads.layers[l].a_log);
      step_tensor(params.layers[l].skip, mm->layers[l].skip, vv->layers[l].skip,
                  grads.layers[l].skip);
      step_tensor(params.layers[l].w_out, mm->layers[l].w_out, vv->layers[l].w_out,
                  grads.layers[l].w_out);
    }
    step_tensor(params.final_gain, mm->final_gain, vv->final_gain, grads.final_gain);
    step_tensor(params.head, mm->head, vv->head, grads.head);
    step_tensor(params.head_bias, mm->head_bias, vv->head_bias, grads.head_bias);
  }
};

struct EpochLoss {
  uint32_t epoch;
  double mean_loss_nats;
};

// Batch-size-one training over the whole dataset. Sample order is
// shuffled per epoch from cfg.rng_seed; identical seeds give identical
// loss logs.
template <class Scalar>
std::vector<EpochLoss> train(Parameters<Scalar>& params,
                             const std::vector<codec::TokenSequence>& dataset,
                             const TrainConfig& cfg,
                             const std::function<void(const EpochLoss&)>& on_epoch = {}) {
  cfg.validate();
  if (dataset.empty()) throw InsufficientDataError("train: empty dataset");
  for (const auto& s : dataset) {
    if (s.size() < 2) throw InsufficientDataError("train: sample with fewer than 2 tokens");
    if (s.size() > params.config.context_len)
      throw ContextError("train: sample exceeds context length");
  }

  AdamW<Scalar> opt(params, cfg);
  std::mt19937_64 rng(cfg.rng_seed);
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);

  std::vector<EpochLoss> log;
  for (uint32_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    std::size_t step_no = 0;
    for (std::size_t idx : order) {
      const auto& sample = dataset[idx];
      codec::TokenSequence targets(sample.begin() + 1, sample.end());
      ForwardCache<Scalar> cache;
      forward<Scalar>(params, sample, &cache);
      auto grads = params.zeros_like();
      double l = backward<Scalar>(params, sample, targets, cache, grads);
      if (!std::isfinite(l))
        throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch) +
                           " step " + std::to_string(step_no));
      clip_global_norm(grads, cfg.grad_clip);
      opt.update(params, grads);
      total += l;
      ++step_no;
    }
    EpochLoss e{epoch, total / double(dataset.size())};
    log.push_back(e);
    if (on_epoch) on_epoch(e);
  }
  return log;
}

}  // namespace netssm::ssm
