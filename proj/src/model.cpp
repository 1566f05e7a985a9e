#include "hybridscope/model.hpp"

#include <random>
#include <string>

#include "hybridscope/error.hpp"

namespace hybridscope {
namespace {

void expect_shape(const Eigen::MatrixXd& m, Eigen::Index rows, Eigen::Index cols, const std::string& name) {
  if (m.rows() != rows || m.cols() != cols) {
    throw InvalidInput(name + ": expected " + std::to_string(rows) + "x" + std::to_string(cols) + ", got " +
                       std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
  }
}

Eigen::MatrixXd gaussian(Eigen::Index rows, Eigen::Index cols, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = dist(rng);
  }
  return m;
}

}  // namespace

HybridModel::HybridModel(ModelConfig config, const ModelWeights& weights) : config_(std::move(config)) {
  config_.validate();
  const int d = config_.d_model;
  const int v = config_.vocab_size;
  const int hd = config_.head_dim;
  expect_shape(weights.embed, v, d, "embed");
  expect_shape(weights.unembed, v, d, "unembed");
  if (weights.layers.size() != config_.layer_pattern.size()) {
    throw InvalidInput("weights have " + std::to_string(weights.layers.size()) + " layers, pattern has " +
                       std::to_string(config_.layer_pattern.size()));
  }
  embed_ = weights.embed;
  unembed_ = Linear(weights.unembed);

  for (std::size_t i = 0; i < weights.layers.size(); ++i) {
    const LayerWeights& lw = weights.layers[i];
    const std::string prefix = "layers." + std::to_string(i);
    if (lw.kind != config_.layer_pattern.kinds[i]) throw InvalidInput(prefix + ": layer kind mismatch");
    Block block{lw.kind, {}, {}};
    if (lw.kind == LayerKind::kSsm) {
      if (lw.ssm.decay.size() != d) throw InvalidInput(prefix + ".ssm.decay: wrong length");
      for (Eigen::Index c = 0; c < d; ++c) {
        const double a = lw.ssm.decay[c];
        if (!(a >= 0.0 && a < 1.0)) throw InvalidInput(prefix + ".ssm.decay: entries must lie in [0, 1)");
      }
      expect_shape(lw.ssm.w_in, d, d, prefix + ".ssm.w_in");
      expect_shape(lw.ssm.w_out, d, d, prefix + ".ssm.w_out");
      block.ssm = SsmBlock{lw.ssm.decay, Linear(lw.ssm.w_in), Linear(lw.ssm.w_out)};
    } else {
      const AttentionWeights& aw = lw.attn;
      expect_shape(aw.w_q, d, d, prefix + ".attn.w_q");
      expect_shape(aw.w_k, d, d, prefix + ".attn.w_k");
      expect_shape(aw.w_v, d, d, prefix + ".attn.w_v");
      expect_shape(aw.w_o, d, d, prefix + ".attn.w_o");
      expect_shape(aw.rel_bias, config_.n_heads, config_.max_seq_len, prefix + ".attn.rel_bias");
      if (!aw.rel_bias.allFinite()) throw InvalidInput(prefix + ".attn.rel_bias: non-finite entry");
      AttentionBlock& ab = block.attn;
      ab.w_q = Linear(aw.w_q);
      ab.w_k = Linear(aw.w_k);
      ab.w_v = Linear(aw.w_v);
      ab.w_o = Linear(aw.w_o);
      ab.rel_bias = aw.rel_bias;
      for (int h = 0; h < config_.n_heads; ++h) {
        const bool q_zero = ab.w_q.zero_rows(h * hd, hd);
        const bool k_zero = ab.w_k.zero_rows(h * hd, hd);
        const bool v_zero = ab.w_v.zero_rows(h * hd, hd) || ab.w_o.zero_cols(h * hd, hd);
        ab.has_scores.push_back(!(q_zero || k_zero));
        ab.has_values.push_back(!v_zero);
      }
    }
    blocks_.push_back(std::move(block));
  }
}

HybridModel HybridModel::random(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  const int d = config.d_model;
  const double scale = 0.5 / std::sqrt(static_cast<double>(d));
  ModelWeights w;
  w.embed = gaussian(config.vocab_size, d, 1.0, rng);
  w.unembed = gaussian(config.vocab_size, d, scale, rng);
  std::uniform_real_distribution<double> decay(0.5, 0.95);
  for (LayerKind kind : config.layer_pattern.kinds) {
    LayerWeights lw;
    lw.kind = kind;
    if (kind == LayerKind::kSsm) {
      lw.ssm.decay.resize(d);
      for (int c = 0; c < d; ++c) lw.ssm.decay[c] = decay(rng);
      lw.ssm.w_in = gaussian(d, d, 1.0 / std::sqrt(static_cast<double>(d)), rng);
      lw.ssm.w_out = gaussian(d, d, scale, rng);
    } else {
      lw.attn.w_q = gaussian(d, d, 1.0 / std::sqrt(static_cast<double>(d)), rng);
      lw.attn.w_k = gaussian(d, d, 1.0 / std::sqrt(static_cast<double>(d)), rng);
      lw.attn.w_v = gaussian(d, d, 1.0 / std::sqrt(static_cast<double>(d)), rng);
      lw.attn.w_o = gaussian(d, d, scale, rng);
      lw.attn.rel_bias = gaussian(config.n_heads, config.max_seq_len, 0.1, rng);
    }
    w.layers.push_back(std::move(lw));
  }
  return HybridModel(config, w);
}

ModelWeights HybridModel::export_weights() const {
  ModelWeights w;
  w.embed = embed_;
  w.unembed = unembed_.weight();
  for (const Block& b : blocks_) {
    LayerWeights lw;
    lw.kind = b.kind;
    if (b.kind == LayerKind::kSsm) {
      lw.ssm = SsmWeights{b.ssm.decay, b.ssm.w_in.weight(), b.ssm.w_out.weight()};
    } else {
      lw.attn = AttentionWeights{b.attn.w_q.weight(), b.attn.w_k.weight(), b.attn.w_v.weight(),
                                 b.attn.w_o.weight(), b.attn.rel_bias};
    }
    w.layers.push_back(std::move(lw));
  }
  return w;
}

}  // namespace hybridscope
