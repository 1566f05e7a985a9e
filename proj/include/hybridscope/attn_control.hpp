#pragma once

#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hybridscope/hooks.hpp"
#include "hybridscope/session.hpp"
#include "hybridscope/trace.hpp"

namespace hybridscope {

enum class ManipulationMethod { kKeep, kOnly, kOmit, kBinary, kNull };

std::string_view to_string(ManipulationMethod method);
/// Case-insensitive: "keep", "Only", "OMIT", ...
ManipulationMethod parse_method(std::string_view text);

enum class Phase { kPrefill, kGeneration };

/// Half-open range of absolute prompt positions.
struct NeedleSpan {
  int start = 0;
  int end = 0;

  bool contains(int pos) const { return pos >= start && pos < end; }
  bool operator==(const NeedleSpan&) const = default;
};

/// Throws InvalidInput unless 0 <= start < end.
void validate_span(const NeedleSpan& span);

/// Per-phase manipulation method and top-k level. nullopt k means "all
/// heads". The needle may consist of several spans (a repeated context);
/// manipulations act on their union.
struct ManipulationPolicy {
  ManipulationMethod generation = ManipulationMethod::kKeep;
  ManipulationMethod prefill = ManipulationMethod::kKeep;
  std::optional<int> k_generation;
  std::optional<int> k_prefill;
  std::vector<NeedleSpan> needle;

  ManipulationMethod method(Phase phase) const { return phase == Phase::kPrefill ? prefill : generation; }
  std::optional<int> k(Phase phase) const { return phase == Phase::kPrefill ? k_prefill : k_generation; }
  bool needs_needle() const;
  /// Throws InvalidInput on k outside [0, n_heads], a missing needle, or a
  /// malformed span.
  void validate(int n_heads) const;

  bool operator==(const ManipulationPolicy&) const = default;
};

/// "GEN-PREFILL[,kG=<int>][,kP=<int>]", e.g. "Only-Null" or "Keep-Keep,kG=0".
/// The needle is not part of the text form. Throws ParseError.
ManipulationPolicy parse_policy(std::string_view text);
std::string format_policy(const ManipulationPolicy& policy);

/// Rewrites one weight row in place. weights[i] is key position
/// key_begin + i. No renormalization.
void manipulate_row(std::span<double> weights, int key_begin, std::span<const NeedleSpan> needle,
                    ManipulationMethod method);
ProbVector manipulate_row(const ProbVector& weights, int key_begin, std::span<const NeedleSpan> needle,
                          ManipulationMethod method);

/// layer index -> value per head
using LayerEntropies = std::map<int, std::vector<double>>;
/// layer index -> retained flag per head
using HeadMask = std::map<int, std::vector<char>>;

/// Mean entropy (bits) of each head's rows for `layer` in `trace`, using
/// effective rows when they were kept. Throws InvalidInput when a head has
/// no rows.
std::vector<double> head_entropies(const AttentionTrace& trace, int layer, int n_heads);

/// Keeps the k lowest-entropy heads; ties go to the lower index.
std::vector<char> select_topk_heads(std::span<const double> entropies, int k);
HeadMask select_topk_heads(const LayerEntropies& entropies, int k);
/// Pools every head of every layer and keeps the k * n_layers lowest;
/// ties go to the lower (layer, head).
HeadMask select_topk_global(const LayerEntropies& entropies, int k);

/// Zeroes the head_dim-wide column block of each non-retained head.
void apply_head_mask(RowMatrix& head_outputs, std::span<const char> retained, int head_dim);

/// Hook for one phase: manipulate every row, average row entropies per
/// head over the call, keep the top-k heads, mask the rest. A fixed mask,
/// when set, replaces the top-k selection.
class PolicyHook : public AttentionHook {
 public:
  PolicyHook(ManipulationPolicy policy, Phase phase, int n_heads);

  void begin_layer(int layer, int n_heads, int first_query, int n_queries) override;
  void on_row(const RowInfo& row, std::span<double> weights) override;
  void head_mask(int layer, std::span<char> retained) override;

  void set_fixed_mask(HeadMask mask) { fixed_mask_ = std::move(mask); }
  /// Computes entropies even when no selection needs them.
  void set_track_entropy(bool on) { track_entropy_ = on; }
  /// Tracks entropies and never masks.
  void set_record_only(bool on) { record_only_ = on; }

  /// Entropies and masks of the most recent call, per layer.
  const LayerEntropies& entropies() const { return entropies_; }
  const HeadMask& mask() const { return mask_; }

 private:
  bool tracks_entropy() const;

  ManipulationPolicy policy_;
  Phase phase_;
  ManipulationMethod method_;
  int n_heads_;
  int k_;
  std::optional<HeadMask> fixed_mask_;
  bool record_only_ = false;
  bool track_entropy_ = false;
  std::vector<double> sums_;
  std::vector<int> counts_;
  LayerEntropies entropies_;
  HeadMask mask_;
};

PolicyHook compose_hook(const ManipulationPolicy& policy, Phase phase, int n_heads);

enum class TopkScope { kPerLayer, kGlobal };

struct ControlOptions {
  TopkScope scope = TopkScope::kPerLayer;
  /// Generation reuses the prefill head mask instead of re-selecting.
  bool freeze_after_prefill = false;
};

/// Runs a session under a policy: prefill-phase hook for the prompt,
/// generation-phase hook for every decoded token.
class PolicyController {
 public:
  PolicyController(ManipulationPolicy policy, int n_heads, ControlOptions options = {});

  ForwardOutput prefill(Session& session, std::span<const int> tokens, AttentionTrace* trace = nullptr,
                        int logits_from = -1);
  ForwardOutput step(Session& session, int token, AttentionTrace* trace = nullptr);
  /// Greedy decoding; the first token comes from `prefill_output`.
  std::vector<int> generate(Session& session, const ForwardOutput& prefill_output, int budget,
                            const std::set<int>& stop_tokens = {}, AttentionTrace* trace = nullptr);

  /// Takes over another controller's prefill result (for a forked session).
  void adopt_prefill(const PolicyController& other);

  const ManipulationPolicy& policy() const { return policy_; }
  const HeadMask& prefill_mask() const { return prefill_mask_; }
  const LayerEntropies& prefill_entropies() const { return prefill_entropies_; }

 private:
  ForwardOutput run(Session& session, std::span<const int> tokens, Phase phase, AttentionTrace* trace,
                    int logits_from);

  ManipulationPolicy policy_;
  int n_heads_;
  ControlOptions options_;
  HeadMask prefill_mask_;
  LayerEntropies prefill_entropies_;
  bool prefilled_ = false;
};

}  // namespace hybridscope
