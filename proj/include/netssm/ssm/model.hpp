#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "netssm/codec.hpp"
#include "netssm/errors.hpp"

namespace netssm::ssm {

struct ModelConfig {
  uint32_t vocab_size = 258;
  uint32_t model_dim = 64;
  uint32_t state_dim = 16;
  uint32_t n_layers = 4;
  uint32_t context_len = 8192;

  void validate() const {
    if (!vocab_size || !model_dim || !state_dim || !n_layers || !context_len)
      throw InvariantError("ModelConfig: all fields must be positive");
    if (vocab_size < 258)
      throw InvariantError("ModelConfig: vocab must cover bytes plus specials");
  }
};

namespace detail {
template <class S>
S softplus(S x) {
  // overflow-safe: softplus(x) = max(x,0) + log1p(exp(-|x|))
  return std::max<S>(x, 0) + std::log1p(std::exp(-std::abs(x)));
}
template <class S>
S sigmoid(S x) {
  return S(1) / (S(1) + std::exp(-x));
}
}  // namespace detail

// Selective-scan recurrence, one step over all channels:
//   h[d,n] = decay[d] * h[d,n] + delta[d] * x[d] * B[n]
//   y[d]   = sum_n C[n] * h[d,n]
// With decay == 0 the output depends on x alone.
template <class Scalar>
void scan_step(Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& state,
               const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& x,
               const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& delta,
               const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& B,
               const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& C,
               const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& decay,
               Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& y) {
  if (!x.allFinite() || !delta.allFinite() || !B.allFinite() || !C.allFinite() ||
      !decay.allFinite())
    throw NumericError("scan_step: non-finite input");
  state = (state.array().colwise() * decay.array()).matrix() +
          (delta.array() * x.array()).matrix() * B.transpose();
  y = state * C;
}

template <class Scalar>
struct LayerParams {
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  Vec gain;    // D   rmsnorm gain
  Mat w_dt;    // D×D step-size projection
  Vec b_dt;    // D
  Mat w_b;     // N×D input matrix projection
  Mat w_c;     // N×D output matrix projection
  Vec a_log;   // D   state-decay parameter; rate = softplus(a_log) > 0
  Vec skip;    // D   direct input->output path
  Mat w_out;   // D×D
};

template <class Scalar>
struct Parameters {
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  ModelConfig config;
  Mat embedding;  // V×D
  std::vector<LayerParams<Scalar>> layers;
  Vec final_gain;  // D
  Mat head;        // V×D
  Vec head_bias;   // V

  static Parameters init(const ModelConfig& cfg, uint64_t seed) {
    cfg.validate();
    Parameters p;
    p.config = cfg;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const auto D = cfg.model_dim, N = cfg.state_dim, V = cfg.vocab_size;
    auto randm = [&](Eigen::Index r, Eigen::Index c, double scale) {
      Mat m(r, c);
      for (Eigen::Index i = 0; i < r; ++i)
        for (Eigen::Index j = 0; j < c; ++j) m(i, j) = Scalar(gauss(rng) * scale);
      return m;
    };
    p.embedding = randm(V, D, 0.02);
    p.head = randm(V, D, 0.02);
    p.head_bias = Vec::Zero(V);
    p.final_gain = Vec::Ones(D);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (uint32_t l = 0; l < cfg.n_layers; ++l) {
      LayerParams<Scalar> lp;
      lp.gain = Vec::Ones(D);
      lp.w_dt = randm(D, D, 1.0 / std::sqrt(double(D)));
      lp.w_b = randm(N, D, 1.0 / std::sqrt(double(D)));
      lp.w_c = randm(N, D, 1.0 / std::sqrt(double(D)));
      lp.w_out = randm(D, D, 0.5 / std::sqrt(double(D)));
      lp.skip = Vec::Ones(D);
      lp.b_dt = Vec(D);
      lp.a_log = Vec(D);
      for (uint32_t d = 0; d < D; ++d) {
        // dt log-uniform in [1e-3, 1e-1]; decay rate log-uniform in [0.5, 8]
        double dt = std::exp(std::log(1e-3) + unit(rng) * std::log(100.0));
        lp.b_dt(d) = Scalar(std::log(std::expm1(dt)));
        double rate = std::exp(std::log(0.5) + unit(rng) * std::log(16.0));
        lp.a_log(d) = Scalar(std::log(std::expm1(rate)));
      }
      p.layers.push_back(std::move(lp));
    }
    return p;
  }

  // Visits every tensor; shared by the optimizer, clipping, checkpointing
  // and the finite-difference oracle.
  template <class Fn>
  void for_each_tensor(Fn&& fn) {
    fn("embedding", embedding);
    for (std::size_t l = 0; l < layers.size(); ++l) {
      std::string p = "layer" + std::to_string(l) + ".";
      fn(p + "gain", layers[l].gain);
      fn(p + "w_dt", layers[l].w_dt);
      fn(p + "b_dt", layers[l].b_dt);
      fn(p + "w_b", layers[l].w_b);
      fn(p + "w_c", layers[l].w_c);
      fn(p + "a_log", layers[l].a_log);
      fn(p + "skip", layers[l].skip);
      fn(p + "w_out", layers[l].w_out);
    }
    fn("final_gain", final_gain);
    fn("head", head);
    fn("head_bias", head_bias);
  }

  Parameters zeros_like() const {
    Parameters z = *this;
    z.for_each_tensor([](const std::string&, auto& t) { t.setZero(); });
    return z;
  }

};

// Full-sequence forward with everything the backward pass needs.
template <class Scalar>
struct ForwardCache {
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  struct Layer {
    Mat x_in;      // T×D input to the layer
    Vec inv_rms;   // T
    Mat u;         // T×D normalized activations
    Mat p_dt;      // T×D pre-softplus step sizes
    Mat delta;     // T×D
    Mat decay;     // T×D
    Mat bm, cm;    // T×N
    std::vector<Mat> h;  // T states of D×N
  };
  std::vector<Layer> layers;
  Mat x_final;    // T×D before final norm
  Vec inv_rms_f;  // T
  Mat f;          // T×D normalized
  Mat logits;     // T×V
};

struct ForwardOptions {
  bool chunked_scan = false;
};

namespace detail {

// Prefix composition of the affine scan maps (h -> decay⊙h + inp) by
// divide and conquer. An alternative to the step-by-step recurrence;
// the sequential scan is the reference it is tested against.
template <class Scalar>
void chunked_scan_prefixes(const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& decay,
                           std::vector<Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>>& h,
                           Eigen::Index lo, Eigen::Index hi,
                           Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& total_decay) {
  using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  if (hi - lo == 1) {
    total_decay = decay.row(lo).transpose();
    return;
  }
  Eigen::Index mid = lo + (hi - lo) / 2;
  Vec left_total, right_total;
  chunked_scan_prefixes(decay, h, lo, mid, left_total);
  chunked_scan_prefixes(decay, h, mid, hi, right_total);
  // fold the left half's final state into every prefix of the right half
  Vec run = decay.row(mid).transpose();
  for (Eigen::Index t = mid; t < hi; ++t) {
    h[static_cast<std::size_t>(t)] +=
        (h[static_cast<std::size_t>(mid - 1)].array().colwise() * run.array()).matrix();
    if (t + 1 < hi) run = (run.array() * decay.row(t + 1).transpose().array()).matrix();
  }
  total_decay = (left_total.array() * right_total.array()).matrix();
}

}  // namespace detail

template <class Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> forward(
    const Parameters<Scalar>& params, const codec::TokenSequence& tokens,
    ForwardCache<Scalar>* cache = nullptr, ForwardOptions opts = {}) {
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  const auto& cfg = params.config;
  const Eigen::Index T = static_cast<Eigen::Index>(tokens.size());
  const Eigen::Index D = cfg.model_dim, N = cfg.state_dim;
  const Scalar eps = Scalar(1e-6);
  if (tokens.empty()) throw InvariantError("forward: empty token sequence");
  if (tokens.size() > cfg.context_len) throw ContextError("forward: sequence exceeds context");
  for (auto t : tokens)
    if (t >= cfg.vocab_size)
      throw VocabularyError("forward: token " + std::to_string(t) + " outside vocabulary");

  if (cache) cache->layers.resize(params.layers.size());

  Mat x(T, D);
  for (Eigen::Index t = 0; t < T; ++t) x.row(t) = params.embedding.row(tokens[t]);

  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const auto& lp = params.layers[l];
    Vec inv_rms = (x.array().square().rowwise().sum() / Scalar(D) + eps).sqrt().inverse();
    Mat u = (x.array().colwise() * inv_rms.array()).rowwise() *
            lp.gain.transpose().array();
    Mat p_dt = (u * lp.w_dt.transpose()).rowwise() + lp.b_dt.transpose();
    Mat delta = p_dt.array().unaryExpr([](Scalar v) { return detail::softplus(v); });
    Vec rate = lp.a_log.array().unaryExpr([](Scalar v) { return detail::softplus(v); });
    Mat decay = (-(delta.array().rowwise() * rate.transpose().array())).exp();
    Mat bm = u * lp.w_b.transpose();  // T×N
    Mat cm = u * lp.w_c.transpose();  // T×N

    std::vector<Mat> h(static_cast<std::size_t>(T));
    Mat y(T, D);
    if (opts.chunked_scan) {
      for (Eigen::Index t = 0; t < T; ++t)
        h[static_cast<std::size_t>(t)] =
            (delta.row(t).transpose().array() * u.row(t).transpose().array()).matrix() *
            bm.row(t);
      Vec total;
      detail::chunked_scan_prefixes<Scalar>(decay, h, 0, T, total);
      for (Eigen::Index t = 0; t < T; ++t)
        y.row(t) = (h[static_cast<std::size_t>(t)] * cm.row(t).transpose()).transpose();
    } else {
      Mat state = Mat::Zero(D, N);
      Vec yt(D);
      for (Eigen::Index t = 0; t < T; ++t) {
        Vec xt = u.row(t).transpose();
        Vec dt = delta.row(t).transpose();
        Vec bt = bm.row(t).transpose();
        Vec ct = cm.row(t).transpose();
        Vec dc = decay.row(t).transpose();
        scan_step<Scalar>(state, xt, dt, bt, ct, dc, yt);
        y.row(t) = yt.transpose();
        h[static_cast<std::size_t>(t)] = state;
      }
    }
    y.array() += u.array().rowwise() * lp.skip.transpose().array();

    Mat x_next = x + y * lp.w_out.transpose();
    if (cache) {
      auto& cl = cache->layers[l];
      cl.x_in = std::move(x);
      cl.inv_rms = std::move(inv_rms);
      cl.u = std::move(u);
      cl.p_dt = std::move(p_dt);
      cl.delta = std::move(delta);
      cl.decay = std::move(decay);
      cl.bm = std::move(bm);
      cl.cm = std::move(cm);
      cl.h = std::move(h);
    }
    x = std::move(x_next);
  }

  Vec inv_rms_f = (x.array().square().rowwise().sum() / Scalar(D) + eps).sqrt().inverse();
  Mat f = (x.array().colwise() * inv_rms_f.array()).rowwise() *
          params.final_gain.transpose().array();
  Mat logits = (f * params.head.transpose()).rowwise() + params.head_bias.transpose();
  if (!logits.allFinite()) throw NumericError("forward: non-finite logits");
  if (cache) {
    cache->x_final = std::move(x);
    cache->inv_rms_f = std::move(inv_rms_f);
    cache->f = std::move(f);
    cache->logits = logits;
  }
  return logits;
}

// Mean next-token cross-entropy in nats. logits row i is scored against
// targets[i].
template <class Scalar>
double loss(const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& logits,
            const codec::TokenSequence& targets) {
  if (static_cast<std::size_t>(logits.rows()) != targets.size())
    throw ShapeError("loss: logits rows and target count differ");
  if (targets.empty()) throw InsufficientDataError("loss: no targets");
  double total = 0.0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    if (targets[static_cast<std::size_t>(i)] >= logits.cols())
      throw VocabularyError("loss: target outside vocabulary");
    double mx = double(logits.row(i).maxCoeff());
    double z = 0.0;
    for (Eigen::Index j = 0; j < logits.cols(); ++j) z += std::exp(double(logits(i, j)) - mx);
    total += std::log(z) + mx - double(logits(i, targets[static_cast<std::size_t>(i)]));
  }
  return total / double(targets.size());
}

// Backward pass for mean cross-entropy over the first targets.size()
// positions. Returns the loss; gradients are accumulated into `grads`
// (caller zeroes them).
template <class Scalar>
double backward(const Parameters<Scalar>& params, const codec::TokenSequence& tokens,
                const codec::TokenSequence& targets, const ForwardCache<Scalar>& cache,
                Parameters<Scalar>& grads) {
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  const auto& cfg = params.config;
  const Eigen::Index T = static_cast<Eigen::Index>(tokens.size());
  const Eigen::Index D = cfg.model_dim, N = cfg.state_dim;
  const Eigen::Index M = static_cast<Eigen::Index>(targets.size());
  if (M > T) throw ShapeError("backward: more targets than positions");

  const double loss_val = loss<Scalar>(cache.logits.topRows(M), targets);

  // d(mean CE)/dlogits = (softmax - onehot) / M on scored rows
  Mat dlogits = Mat::Zero(T, cfg.vocab_size);
  for (Eigen::Index i = 0; i < M; ++i) {
    Scalar mx = cache.logits.row(i).maxCoeff();
    Vec ex = (cache.logits.row(i).transpose().array() - mx).exp();
    dlogits.row(i) = (ex / ex.sum()).transpose() / Scalar(M);
    dlogits(i, targets[static_cast<std::size_t>(i)]) -= Scalar(1) / Scalar(M);
  }

  grads.head += dlogits.transpose() * cache.f;
  grads.head_bias += dlogits.colwise().sum().transpose();
  Mat df = dlogits * params.head;

  // final rmsnorm backward
  auto rmsnorm_backward = [&](const Mat& x_in, const Vec& inv_rms, const Mat& du,
                              const Vec& gain, Vec& dgain) {
    Mat gdu = du.array().rowwise() * gain.transpose().array();
    dgain += (du.array() * (x_in.array().colwise() * inv_rms.array())).colwise().sum()
                 .transpose()
                 .matrix();
    Vec dot = (gdu.array() * x_in.array()).rowwise().sum();
    Mat dx = (gdu.array().colwise() * inv_rms.array()) -
             (x_in.array().colwise() *
              (dot.array() * inv_rms.array().cube() / Scalar(D)));
    return Mat(dx);
  };

  Mat dx = rmsnorm_backward(cache.x_final, cache.inv_rms_f, df, params.final_gain,
                            grads.final_gain);

  for (std::size_t l = params.layers.size(); l-- > 0;) {
    const auto& lp = params.layers[l];
    const auto& cl = cache.layers[l];
    auto& gl = grads.layers[l];

    // x_next = x_in + y * w_out^T
    Mat dy = dx * lp.w_out;
    // w_out grad needs y; rebuild it from the cache
    Mat y(T, D);
    for (Eigen::Index t = 0; t < T; ++t)
      y.row(t) = (cl.h[static_cast<std::size_t>(t)] * cl.cm.row(t).transpose()).transpose();
    y.array() += cl.u.array().rowwise() * lp.skip.transpose().array();
    gl.w_out += dx.transpose() * y;

    Mat du = dy.array().rowwise() * lp.skip.transpose().array();
    gl.skip += (dy.array() * cl.u.array()).colwise().sum().transpose().matrix();

    // BPTT through the scan
    Vec rate = lp.a_log.array().unaryExpr([](Scalar v) { return detail::softplus(v); });
    Mat ddelta = Mat::Zero(T, D);
    Mat dbm = Mat::Zero(T, N);
    Mat dcm = Mat::Zero(T, N);
    Vec drate = Vec::Zero(D);
    Mat G = Mat::Zero(D, N);
    for (Eigen::Index t = T - 1; t >= 0; --t) {
      const Mat& ht = cl.h[static_cast<std::size_t>(t)];
      Vec dyt = dy.row(t).transpose();
      dcm.row(t) += (ht.transpose() * dyt).transpose();
      G += dyt * cl.cm.row(t);
      const Mat h_prev =
          t > 0 ? cl.h[static_cast<std::size_t>(t - 1)] : Mat::Zero(D, N);
      Vec ddecay = (G.array() * h_prev.array()).rowwise().sum();
      Vec din = G * cl.bm.row(t).transpose();  // d/d(delta⊙u)
      dbm.row(t) += (G.transpose() *
                     (cl.delta.row(t).transpose().array() * cl.u.row(t).transpose().array())
                         .matrix())
                        .transpose();
      ddelta.row(t) += (din.array() * cl.u.row(t).transpose().array()).transpose().matrix();
      du.row(t) += (din.array() * cl.delta.row(t).transpose().array()).transpose().matrix();
      // decay = exp(-delta*rate)
      Vec dec = cl.decay.row(t).transpose();
      ddelta.row(t) +=
          (ddecay.array() * (-rate.array()) * dec.array()).transpose().matrix();
      drate += (ddecay.array() * (-cl.delta.row(t).transpose().array()) * dec.array()).matrix();
      G = (G.array().colwise() * dec.array()).matrix();
    }
    gl.a_log += (drate.array() *
                 lp.a_log.array().unaryExpr([](Scalar v) { return detail::sigmoid(v); }))
                    .matrix();

    du += dbm * lp.w_b;
    gl.w_b += dbm.transpose() * cl.u;
    du += dcm * lp.w_c;
    gl.w_c += dcm.transpose() * cl.u;

    Mat dp_dt = ddelta.array() *
                cl.p_dt.array().unaryExpr([](Scalar v) { return detail::sigmoid(v); });
    du += dp_dt * lp.w_dt;
    gl.w_dt += dp_dt.transpose() * cl.u;
    gl.b_dt += dp_dt.colwise().sum().transpose();

    Mat dx_norm = rmsnorm_backward(cl.x_in, cl.inv_rms, du, lp.gain, gl.gain);
    dx += dx_norm;  // residual path carries dx through unchanged
  }

  for (Eigen::Index t = 0; t < T; ++t)
    grads.embedding.row(tokens[static_cast<std::size_t>(t)]) += dx.row(t);

  return loss_val;
}

// Incremental decoding state: one scan state per layer.
template <class Scalar>
struct StreamState {
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  std::vector<Mat> h;

  static StreamState init(const ModelConfig& cfg) {
    StreamState s;
    s.h.assign(cfg.n_layers, Mat::Zero(cfg.model_dim, cfg.state_dim));
    return s;
  }
};

// Processes one token, updating the state, and returns the logits row.
template <class Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> step(const Parameters<Scalar>& params,
                                              StreamState<Scalar>& state,
                                              codec::TokenId token) {
  using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  const auto& cfg = params.config;
  const Eigen::Index D = cfg.model_dim;
  const Scalar eps = Scalar(1e-6);
  if (token >= cfg.vocab_size)
    throw VocabularyError("step: token " + std::to_string(token) + " outside vocabulary");

  Vec x = params.embedding.row(token).transpose();
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const auto& lp = params.layers[l];
    Scalar inv_rms = Scalar(1) / std::sqrt(x.squaredNorm() / Scalar(D) + eps);
    Vec u = (x.array() * inv_rms * lp.gain.array()).matrix();
    Vec delta = ((lp.w_dt * u + lp.b_dt).array().unaryExpr([](Scalar v) {
                  return detail::softplus(v);
                })).matrix();
    Vec rate = lp.a_log.array().unaryExpr([](Scalar v) { return detail::softplus(v); });
    Vec decay = (-(delta.array() * rate.array())).exp();
    Vec b = lp.w_b * u;
    Vec c = lp.w_c * u;
    Vec y(D);
    scan_step<Scalar>(state.h[l], u, delta, b, c, decay, y);
    y.array() += lp.skip.array() * u.array();
    x += lp.w_out * y;
  }
  Scalar inv_rms = Scalar(1) / std::sqrt(x.squaredNorm() / Scalar(D) + eps);
  Vec f = (x.array() * inv_rms * params.final_gain.array()).matrix();
  Vec logits = params.head * f + params.head_bias;
  if (!logits.allFinite()) throw NumericError("step: non-finite logits");
  return logits;
}

using ParametersF = Parameters<float>;
using ParametersD = Parameters<double>;

}  // namespace netssm::ssm
