#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace hybridscope {

enum class LayerKind { kSsm, kAttention };

struct LayerPattern {
  std::vector<LayerKind> kinds;

  std::size_t size() const { return kinds.size(); }
  std::vector<int> attention_indices() const;
  /// Flat form, e.g. "S,S,A,S".
  std::string to_string() const;

  bool operator==(const LayerPattern&) const = default;
};

/// Expands the layer-pattern DSL:
///
///   list  := item ("," item)*
///   item  := [count] ("S" | "A") | "(" list ")" "x" count
///
/// so "(2S,1A)x8,2S" is eight repetitions of two SSM layers and one
/// attention layer followed by two SSM layers. Throws ParseError with the
/// byte offset of the problem; a pattern without attention is rejected.
LayerPattern parse_layer_pattern(std::string_view spec);

}  // namespace hybridscope
