#pragma once

#include <vector>

#include "hybridscope/numerics.hpp"

namespace hybridscope {

struct TraceRow {
  int call = 0;  // forward-call counter within the session
  int layer = 0;
  int head = 0;
  int query_pos = 0;
  int key_begin = 0;
  ProbVector raw;        // softmax output
  ProbVector effective;  // after the hook rewrote it
};

/// Captured attention rows. Rows cover only visible keys: weights[i] belongs
/// to key position key_begin + i, and anything outside the window is absent.
struct AttentionTrace {
  bool keep_raw = true;
  bool keep_effective = true;
  std::vector<TraceRow> rows;

  void clear() { rows.clear(); }
};

}  // namespace hybridscope
