#include "hybridscope/retriever.hpp"

#include <cmath>
#include <string>

#include "hybridscope/config.hpp"
#include "hybridscope/error.hpp"

namespace hybridscope {
namespace {

constexpr double kOffsetPenalty = 1e4;

}  // namespace

HybridModel build_induction_retriever(int vocab_size, const RetrieverOptions& o) {
  const int v = vocab_size;
  if (v < 4) throw InvalidInput("induction retriever needs at least 4 tokens, got " + std::to_string(v));
  if (o.n_heads < 3) throw InvalidInput("induction retriever needs at least 3 heads");
  if (o.bos_token < 0 || o.bos_token >= v) throw InvalidInput("bos token out of range");
  if (o.answer_start_token >= v) throw InvalidInput("answer start token out of range");
  if (!(o.memory_decay > 0.0 && o.memory_decay < 1.0)) throw InvalidInput("memory_decay must lie in (0, 1)");
  for (int c : o.cue_tokens) {
    if (c < 0 || c >= v) throw InvalidInput("cue token out of range");
  }

  const int hd = 2 * v + 2;
  ModelConfig cfg = make_config(v, o.n_heads, hd, std::nullopt, "(1S,1A)x2", true, o.max_seq_len);
  const int d = cfg.d_model;
  const int kE = 0, kS = v, kK1 = 2 * v, kK2 = 3 * v, kO = 4 * v;

  ModelWeights w;
  w.embed = Eigen::MatrixXd::Zero(v, d);
  w.unembed = Eigen::MatrixXd::Zero(v, d);
  for (int i = 0; i < v; ++i) {
    w.embed(i, kE + i) = 1.0;
    w.unembed(i, kO + i) = o.logit_scale;
  }

  auto zero_attn = [&] {
    AttentionWeights a;
    a.w_q = a.w_k = a.w_v = a.w_o = Eigen::MatrixXd::Zero(d, d);
    a.rel_bias = Eigen::MatrixXd::Zero(o.n_heads, o.max_seq_len);
    return a;
  };
  auto zero_ssm = [&] {
    SsmWeights s;
    s.decay = Eigen::VectorXd::Zero(d);
    s.w_in = s.w_out = Eigen::MatrixXd::Zero(d, d);
    return s;
  };

  // Layer 0: S = (1 - a) E_t + a (1 - a) E_{t-1} + ...
  LayerWeights mem{LayerKind::kSsm, zero_ssm(), {}};
  for (int i = 0; i < v; ++i) {
    mem.ssm.decay[kS + i] = o.memory_decay;
    mem.ssm.w_in(kS + i, kE + i) = 1.0;
    mem.ssm.w_out(kS + i, kS + i) = 1.0;
  }

  // Layer 1: head 0 looks one back, head 1 two back.
  LayerWeights shift{LayerKind::kAttention, {}, zero_attn()};
  for (int h = 0; h < 2; ++h) {
    const int offset = h + 1;
    for (int delta = 0; delta < o.max_seq_len; ++delta) {
      shift.attn.rel_bias(h, delta) = -kOffsetPenalty * std::abs(delta - offset);
    }
    const int dst = h == 0 ? kK1 : kK2;
    for (int i = 0; i < v; ++i) {
      shift.attn.w_v(h * hd + i, kE + i) = 1.0;
      shift.attn.w_o(dst + i, h * hd + i) = 1.0;
    }
  }

  LayerWeights idle{LayerKind::kSsm, zero_ssm(), {}};

  // Layer 3, head 0. Key: [previous token | token two back | start flag | sink flag].
  LayerWeights copy{LayerKind::kAttention, {}, zero_attn()};
  AttentionWeights& a = copy.attn;
  const double root = std::sqrt(static_cast<double>(hd));
  const double b = o.match_scale;
  const double mem_gain = 1.0 / o.memory_decay;
  for (int i = 0; i < v; ++i) {
    a.w_k(i, kK1 + i) = 1.0;
    a.w_k(v + i, kK2 + i) = 1.0;
    a.w_q(i, kE + i) = 2.0 * b * root;
    // Previous token recovered from the SSM memory: (S - (1 - a) E) / a.
    a.w_q(v + i, kS + i) = b * root * mem_gain;
    a.w_q(v + i, kE + i) = -b * root * mem_gain * (1.0 - o.memory_decay);
    if (i != o.bos_token) {
      a.w_v(i, kE + i) = 1.0;
      a.w_o(kO + i, i) = 1.0;
    }
  }
  if (o.answer_start_token >= 0) {
    a.w_k(2 * v, kE + o.answer_start_token) = 1.0;
    for (int c : o.cue_tokens) a.w_q(2 * v, kE + c) = 4.0 * b * root;
  }
  a.w_k(2 * v + 1, kE + o.bos_token) = 1.0;
  for (int i = 0; i < v; ++i) a.w_q(2 * v + 1, kE + i) = 1.5 * b * root;
  for (int delta = 0; delta < o.max_seq_len; ++delta) a.rel_bias(0, delta) = o.recency_step * delta;

  w.layers = {mem, shift, idle, copy};
  return HybridModel(std::move(cfg), w);
}

}  // namespace hybridscope
