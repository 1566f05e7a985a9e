#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "hybridscope/config.hpp"
#include "hybridscope/linear.hpp"

namespace hybridscope {

struct SsmWeights {
  Eigen::VectorXd decay;  // per channel, in (0, 1)
  Eigen::MatrixXd w_in;   // d_model x d_model
  Eigen::MatrixXd w_out;  // d_model x d_model
};

struct AttentionWeights {
  // Projections are d_model x d_model; head h owns rows
  // [h * head_dim, (h + 1) * head_dim) of q/k/v and the matching columns of o.
  Eigen::MatrixXd w_q, w_k, w_v, w_o;
  /// n_heads x max_seq_len additive score bias indexed by query - key distance.
  Eigen::MatrixXd rel_bias;
};

struct LayerWeights {
  LayerKind kind = LayerKind::kSsm;
  SsmWeights ssm;
  AttentionWeights attn;
};

/// Plain tensors for construction and persistence.
struct ModelWeights {
  Eigen::MatrixXd embed;    // vocab x d_model
  Eigen::MatrixXd unembed;  // vocab x d_model
  std::vector<LayerWeights> layers;
};

/// Immutable hybrid model: token embedding, a stack of SSM and attention
/// blocks on a residual stream (x += block(x)), and a linear unembedding.
/// Safe to share across sessions and threads.
class HybridModel {
 public:
  struct SsmBlock {
    Eigen::VectorXd decay;
    Linear w_in, w_out;
  };
  struct AttentionBlock {
    Linear w_q, w_k, w_v, w_o;
    RowMatrix rel_bias;
    // Structural zeros found at load time: heads without a query/key circuit
    // score by bias alone, heads without values always output zero.
    std::vector<char> has_scores;
    std::vector<char> has_values;
  };
  struct Block {
    LayerKind kind;
    SsmBlock ssm;
    AttentionBlock attn;
  };

  /// Validates every tensor shape against the config; throws InvalidInput.
  HybridModel(ModelConfig config, const ModelWeights& weights);

  /// Small Gaussian weights; deterministic for a given seed.
  static HybridModel random(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  const Eigen::MatrixXd& embedding() const { return embed_; }
  const Linear& unembedding() const { return unembed_; }
  const std::vector<Block>& blocks() const { return blocks_; }

  ModelWeights export_weights() const;

 private:
  ModelConfig config_;
  Eigen::MatrixXd embed_;
  Linear unembed_;
  std::vector<Block> blocks_;
};

}  // namespace hybridscope
