#pragma once

#include <set>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "hybridscope/hooks.hpp"
#include "hybridscope/model.hpp"
#include "hybridscope/trace.hpp"

namespace hybridscope {

/// Hidden vectors of every SSM layer (empty for attention layers).
struct RecurrentState {
  std::vector<Eigen::VectorXd> hidden;
};

/// Append-only per-layer key/value storage, indexed by absolute position.
/// Entries written under a manipulated residual stream stay as written.
class KVCache {
 public:
  struct Layer {
    std::vector<double> keys;    // length x d_model, row-major
    std::vector<double> values;  // length x d_model, row-major
    int length = 0;
  };

  KVCache() = default;
  KVCache(std::size_t n_layers, int d_model) : layers_(n_layers), d_model_(d_model) {}

  int length(std::size_t layer) const { return layers_.at(layer).length; }
  const Layer& layer(std::size_t i) const { return layers_.at(i); }
  void append(std::size_t layer, const RowMatrix& keys, const RowMatrix& values);
  int d_model() const { return d_model_; }

 private:
  std::vector<Layer> layers_;
  int d_model_ = 0;
};

/// Logits for the positions [first_position, first_position + rows).
struct ForwardOutput {
  int first_position = 0;
  RowMatrix logits;

  std::vector<double> last() const;
  std::vector<double> at(int position) const;
};

/// One SSM step: h' = a * h + (1 - a) * (W_in x), y = W_out h'.
std::pair<Eigen::VectorXd, Eigen::VectorXd> recurrent_forward(const HybridModel::SsmBlock& block,
                                                              const Eigen::VectorXd& hidden,
                                                              const Eigen::VectorXd& x);

/// Multi-head causal attention for the rows of `x` at absolute positions
/// first_pos, first_pos + 1, ... . Keys/values of the new rows are appended
/// to `cache` first; a query at t sees keys max(0, t - window + 1) .. t.
/// Returns the layer output (before the residual add).
RowMatrix attention_forward(const HybridModel& model, int layer, const RowMatrix& x, int first_pos,
                            KVCache& cache, AttentionHook* hook, AttentionTrace* trace, int call);

/// Inference state for one sequence. Not thread-safe; copyable, which forks
/// the sequence.
class Session {
 public:
  explicit Session(const HybridModel& model);

  /// Processes `tokens` after everything already in the session and returns
  /// logits from absolute position `logits_from` (default: last new token).
  /// Without a KV cache the whole sequence is recomputed and the hook sees
  /// every row again.
  ForwardOutput extend(std::span<const int> tokens, AttentionHook* hook = nullptr,
                       AttentionTrace* trace = nullptr, int logits_from = -1);
  /// extend() on an empty session.
  ForwardOutput prefill(std::span<const int> tokens, AttentionHook* hook = nullptr,
                        AttentionTrace* trace = nullptr, int logits_from = -1);
  ForwardOutput step(int token, AttentionHook* hook = nullptr, AttentionTrace* trace = nullptr);

  const HybridModel& model() const { return *model_; }
  int length() const { return static_cast<int>(tokens_.size()); }
  const std::vector<int>& tokens() const { return tokens_; }
  const KVCache& cache() const { return cache_; }
  const RecurrentState& recurrent_state() const { return state_; }
  int calls() const { return calls_; }

 private:
  RowMatrix run_blocks(RowMatrix x, int first_pos, RecurrentState& state, KVCache& cache,
                       AttentionHook* hook, AttentionTrace* trace);

  const HybridModel* model_;
  std::vector<int> tokens_;
  RecurrentState state_;
  KVCache cache_;
  int calls_ = 0;
};

/// Greedy choice; ties go to the lower token id.
int argmax_token(std::span<const double> logits);

/// Greedy decoding after prefill. The first token is the argmax of
/// `prefill_output`; each emitted token except the last is fed back through
/// `hook`. Stops after `budget` tokens or right after a stop token.
std::vector<int> generate(Session& session, const ForwardOutput& prefill_output, AttentionHook* hook,
                          int budget, const std::set<int>& stop_tokens = {},
                          AttentionTrace* trace = nullptr);

}  // namespace hybridscope
