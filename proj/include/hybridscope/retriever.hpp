#pragma once

#include <vector>

#include "hybridscope/model.hpp"

namespace hybridscope {

struct RetrieverOptions {
  /// Heads per attention layer; head 0 and 1 do the work, the rest attend
  /// uniformly and write nothing. Must be at least 3.
  int n_heads = 4;
  /// Tokens after which the answer begins (the end of the prompt template).
  std::vector<int> cue_tokens;
  /// First token of the text to recall; -1 disables the cue circuit.
  int answer_start_token = -1;
  int bos_token = 1;
  int max_seq_len = 2048;
  double memory_decay = 1e-6;
  double match_scale = 1e8;
  double recency_step = 1e3;
  double logit_scale = 10.0;
};

/// Hand-built "(1S,1A)x2" induction model over a one-hot vocabulary.
///
/// Residual layout (V = vocab_size): [0,V) current token, [V,2V) SSM memory,
/// [2V,3V) previous token, [3V,4V) token two back, [4V,5V) copied token.
/// Layer 0 is a nearly memoryless SSM whose state still leaks the previous
/// token. Layer 1 writes the previous and second-previous tokens through
/// fixed-offset heads. Layer 3 head 0 matches the current (and previous)
/// token against those slots and copies the successor of the earliest
/// match; a cue token instead jumps to `answer_start_token`, and with no
/// match the head falls back to BOS, whose value is zero.
/// Throws InvalidInput when vocab_size < 4.
HybridModel build_induction_retriever(int vocab_size, const RetrieverOptions& options = {});

}  // namespace hybridscope
