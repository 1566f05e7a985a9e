#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "hybridscope/layer_pattern.hpp"

namespace hybridscope {

struct ModelConfig {
  int vocab_size = 0;
  int d_model = 0;
  int n_heads = 0;
  int head_dim = 0;
  /// Sliding-window width in tokens; nullopt means global attention.
  std::optional<int> window;
  /// Source text of the pattern, kept so configs round-trip.
  std::string layer_pattern_spec;
  LayerPattern layer_pattern;
  bool use_kv_cache = true;
  int max_seq_len = 0;

  /// Throws InvalidInput when the fields are inconsistent.
  void validate() const;

  bool operator==(const ModelConfig&) const = default;
};

/// Parses the flat key/value config format:
///
///   # comment
///   vocab_size = 64
///   window = global        (or an integer)
///   layer_pattern = (2S,1A)x8,2S
///   use_kv_cache = true
///
/// Unknown keys, missing keys and bad values raise ParseError (position is
/// the 1-based line number).
ModelConfig parse_model_config(std::string_view text);
ModelConfig load_model_config(const std::string& path);
std::string format_model_config(const ModelConfig& config);

ModelConfig make_config(int vocab_size, int n_heads, int head_dim, std::optional<int> window,
                        std::string_view pattern, bool use_kv_cache, int max_seq_len);

// Scaled-down stand-ins that keep the reference architectures' layer
// patterns and head counts.
ModelConfig rg2b_toy_config();
ModelConfig jamba_toy_config();

}  // namespace hybridscope
