#pragma once

#include <string>

#include "hybridscope/model.hpp"

namespace hybridscope {

/// Binary weight file, little-endian:
///   "HYPM", u32 version, u32 tensor count, then per tensor
///   u32 name length, UTF-8 name, u32 rank, u64 dims[rank], f64 data (row-major).
///
/// Tensor names: embed, unembed, layers.<i>.ssm.{decay,w_in,w_out},
/// layers.<i>.attn.{w_q,w_k,w_v,w_o,rel_bias}, and the rank-0 scalars
/// meta.window (-1 for global attention) and meta.use_kv_cache.
inline constexpr std::uint32_t kWeightFileVersion = 1;

void save_weights(const HybridModel& model, const std::string& path);

/// Infers the config from the tensor table. Throws FormatError on any
/// structural problem and IoError when the file cannot be read.
HybridModel load_weights(const std::string& path);
/// Uses `config` and checks every tensor against it.
HybridModel load_weights(const std::string& path, const ModelConfig& config);

}  // namespace hybridscope
