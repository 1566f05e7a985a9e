#pragma once

#include <span>

namespace hybridscope {

/// Position of one attention weight row inside a forward call.
struct RowInfo {
  int layer = 0;      // index in the model's layer list
  int head = 0;
  int query_pos = 0;  // absolute position of the query token
  int key_begin = 0;  // absolute position of weights[0]
};

/// Instrumentation point inside every attention layer. For each layer of a
/// forward call the kernel calls begin_layer, then on_row for every
/// (head, query) softmax row, then head_mask once. Rows are rewritten in
/// place and then aggregate the values; heads whose retained flag is cleared
/// contribute a zero output for every row of the call.
class AttentionHook {
 public:
  virtual ~AttentionHook() = default;

  virtual void begin_layer(int layer, int n_heads, int first_query, int n_queries) {
    (void)layer, (void)n_heads, (void)first_query, (void)n_queries;
  }
  virtual void on_row(const RowInfo& row, std::span<double> weights) = 0;
  /// `retained` arrives all true.
  virtual void head_mask(int layer, std::span<char> retained) = 0;
};

}  // namespace hybridscope
