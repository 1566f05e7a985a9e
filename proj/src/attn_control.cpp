#include "hybridscope/attn_control.hpp"

#include <algorithm>
#include <cctype>
#include <numeric>
#include <sstream>

#include "hybridscope/error.hpp"
#include "hybridscope/numerics.hpp"

namespace hybridscope {
namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

bool in_needle(std::span<const NeedleSpan> needle, int pos) {
  for (const NeedleSpan& s : needle) {
    if (s.contains(pos)) return true;
  }
  return false;
}

int parse_int(std::string_view text, std::size_t offset) {
  if (text.empty()) throw ParseError("missing integer", offset);
  int value = 0;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (!std::isdigit(static_cast<unsigned char>(text[i]))) throw ParseError("expected a non-negative integer", offset + i);
    value = value * 10 + (text[i] - '0');
    if (value > 1000000) throw ParseError("integer too large", offset);
  }
  return value;
}

}  // namespace

std::string_view to_string(ManipulationMethod method) {
  switch (method) {
    case ManipulationMethod::kKeep: return "Keep";
    case ManipulationMethod::kOnly: return "Only";
    case ManipulationMethod::kOmit: return "Omit";
    case ManipulationMethod::kBinary: return "Binary";
    case ManipulationMethod::kNull: return "Null";
  }
  return "?";
}

ManipulationMethod parse_method(std::string_view text) {
  const std::string t = lower(text);
  if (t == "keep") return ManipulationMethod::kKeep;
  if (t == "only") return ManipulationMethod::kOnly;
  if (t == "omit") return ManipulationMethod::kOmit;
  if (t == "binary") return ManipulationMethod::kBinary;
  if (t == "null") return ManipulationMethod::kNull;
  throw ParseError("unknown manipulation method '" + std::string(text) + "'", 0);
}

void validate_span(const NeedleSpan& span) {
  if (span.start < 0 || span.start >= span.end) {
    throw InvalidInput("invalid needle span [" + std::to_string(span.start) + ", " + std::to_string(span.end) + ")");
  }
}

bool ManipulationPolicy::needs_needle() const {
  auto spanned = [](ManipulationMethod m) {
    return m == ManipulationMethod::kOnly || m == ManipulationMethod::kOmit || m == ManipulationMethod::kBinary;
  };
  return spanned(generation) || spanned(prefill);
}

void ManipulationPolicy::validate(int n_heads) const {
  for (const auto& k : {k_generation, k_prefill}) {
    if (k && (*k < 0 || *k > n_heads)) {
      throw InvalidInput("k = " + std::to_string(*k) + " outside [0, " + std::to_string(n_heads) + "]");
    }
  }
  if (needs_needle() && needle.empty()) throw InvalidInput("policy " + format_policy(*this) + " needs a needle span");
  for (const NeedleSpan& s : needle) validate_span(s);
}

ManipulationPolicy parse_policy(std::string_view text) {
  ManipulationPolicy p;
  std::size_t pos = 0;
  std::vector<std::pair<std::string_view, std::size_t>> parts;
  while (true) {
    const std::size_t comma = text.find(',', pos);
    parts.emplace_back(text.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos), pos);
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  const auto [head, head_at] = parts.front();
  const std::size_t dash = head.find('-');
  if (dash == std::string_view::npos) throw ParseError("policy must look like GEN-PREFILL", head_at);
  try {
    p.generation = parse_method(head.substr(0, dash));
  } catch (const ParseError& e) {
    throw ParseError("unknown generation method '" + std::string(head.substr(0, dash)) + "'", head_at);
  }
  try {
    p.prefill = parse_method(head.substr(dash + 1));
  } catch (const ParseError& e) {
    throw ParseError("unknown prefill method '" + std::string(head.substr(dash + 1)) + "'", head_at + dash + 1);
  }
  for (std::size_t i = 1; i < parts.size(); ++i) {
    const auto [part, at] = parts[i];
    const std::size_t eq = part.find('=');
    if (eq == std::string_view::npos) throw ParseError("expected kG=<int> or kP=<int>", at);
    const std::string key = lower(part.substr(0, eq));
    const int value = parse_int(part.substr(eq + 1), at + eq + 1);
    std::optional<int>* slot = nullptr;
    if (key == "kg") slot = &p.k_generation;
    else if (key == "kp") slot = &p.k_prefill;
    else throw ParseError("unknown policy option '" + std::string(part.substr(0, eq)) + "'", at);
    if (slot->has_value()) throw ParseError("duplicate policy option", at);
    *slot = value;
  }
  return p;
}

std::string format_policy(const ManipulationPolicy& p) {
  std::ostringstream s;
  s << to_string(p.generation) << '-' << to_string(p.prefill);
  if (p.k_generation) s << ",kG=" << *p.k_generation;
  if (p.k_prefill) s << ",kP=" << *p.k_prefill;
  return s.str();
}

void manipulate_row(std::span<double> w, int key_begin, std::span<const NeedleSpan> needle,
                    ManipulationMethod method) {
  for (const NeedleSpan& s : needle) validate_span(s);
  const int n = static_cast<int>(w.size());
  switch (method) {
    case ManipulationMethod::kKeep:
      return;
    case ManipulationMethod::kNull:
      std::fill(w.begin(), w.end(), 0.0);
      return;
    case ManipulationMethod::kOnly:
      for (int i = 0; i < n; ++i) {
        if (!in_needle(needle, key_begin + i)) w[static_cast<std::size_t>(i)] = 0.0;
      }
      return;
    case ManipulationMethod::kOmit:
      for (int i = 0; i < n; ++i) {
        if (in_needle(needle, key_begin + i)) w[static_cast<std::size_t>(i)] = 0.0;
      }
      return;
    case ManipulationMethod::kBinary: {
      double sum = 0.0;
      int count = 0;
      for (int i = 0; i < n; ++i) {
        if (in_needle(needle, key_begin + i)) {
          sum += w[static_cast<std::size_t>(i)];
          ++count;
        }
      }
      const double mean = count ? sum / count : 0.0;
      for (int i = 0; i < n; ++i) w[static_cast<std::size_t>(i)] = in_needle(needle, key_begin + i) ? mean : 0.0;
      return;
    }
  }
}

ProbVector manipulate_row(const ProbVector& weights, int key_begin, std::span<const NeedleSpan> needle,
                          ManipulationMethod method) {
  ProbVector out = weights;
  manipulate_row(std::span<double>(out), key_begin, needle, method);
  return out;
}

std::vector<double> head_entropies(const AttentionTrace& trace, int layer, int n_heads) {
  if (n_heads < 1) throw InvalidInput("n_heads must be positive");
  std::vector<double> sums(static_cast<std::size_t>(n_heads), 0.0);
  std::vector<int> counts(static_cast<std::size_t>(n_heads), 0);
  for (const TraceRow& r : trace.rows) {
    if (r.layer != layer) continue;
    if (r.head < 0 || r.head >= n_heads) throw InvalidInput("trace row head index out of range");
    const ProbVector& w = trace.keep_effective ? r.effective : r.raw;
    sums[static_cast<std::size_t>(r.head)] += entropy_bits(w);
    ++counts[static_cast<std::size_t>(r.head)];
  }
  for (int h = 0; h < n_heads; ++h) {
    if (counts[static_cast<std::size_t>(h)] == 0) {
      throw InvalidInput("no trace rows for layer " + std::to_string(layer) + " head " + std::to_string(h));
    }
    sums[static_cast<std::size_t>(h)] /= counts[static_cast<std::size_t>(h)];
  }
  return sums;
}

std::vector<char> select_topk_heads(std::span<const double> entropies, int k) {
  const int n = static_cast<int>(entropies.size());
  if (k < 0 || k > n) throw InvalidInput("k = " + std::to_string(k) + " outside [0, " + std::to_string(n) + "]");
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return entropies[static_cast<std::size_t>(a)] < entropies[static_cast<std::size_t>(b)];
  });
  std::vector<char> keep(static_cast<std::size_t>(n), 0);
  for (int i = 0; i < k; ++i) keep[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] = 1;
  return keep;
}

HeadMask select_topk_heads(const LayerEntropies& entropies, int k) {
  HeadMask mask;
  for (const auto& [layer, e] : entropies) mask[layer] = select_topk_heads(e, k);
  return mask;
}

HeadMask select_topk_global(const LayerEntropies& entropies, int k) {
  struct Entry {
    double h;
    int layer, head;
  };
  std::vector<Entry> pool;
  HeadMask mask;
  for (const auto& [layer, e] : entropies) {
    if (k < 0 || k > static_cast<int>(e.size())) throw InvalidInput("k outside [0, n_heads]");
    mask[layer].assign(e.size(), 0);
    for (std::size_t h = 0; h < e.size(); ++h) pool.push_back({e[h], layer, static_cast<int>(h)});
  }
  std::stable_sort(pool.begin(), pool.end(), [](const Entry& a, const Entry& b) { return a.h < b.h; });
  const std::size_t budget = static_cast<std::size_t>(k) * entropies.size();
  for (std::size_t i = 0; i < budget && i < pool.size(); ++i) {
    mask[pool[i].layer][static_cast<std::size_t>(pool[i].head)] = 1;
  }
  return mask;
}

void apply_head_mask(RowMatrix& head_outputs, std::span<const char> retained, int head_dim) {
  for (std::size_t h = 0; h < retained.size(); ++h) {
    if (!retained[h]) head_outputs.middleCols(static_cast<Eigen::Index>(h) * head_dim, head_dim).setZero();
  }
}

PolicyHook::PolicyHook(ManipulationPolicy policy, Phase phase, int n_heads)
    : policy_(std::move(policy)), phase_(phase), method_(policy_.method(phase)), n_heads_(n_heads),
      k_(policy_.k(phase).value_or(n_heads)) {
  policy_.validate(n_heads);
}

bool PolicyHook::tracks_entropy() const {
  return record_only_ || track_entropy_ || (!fixed_mask_ && k_ < n_heads_);
}

void PolicyHook::begin_layer(int layer, int n_heads, int, int) {
  if (n_heads != n_heads_) throw InternalError("policy hook bound to a different head count");
  (void)layer;
  if (tracks_entropy()) {
    sums_.assign(static_cast<std::size_t>(n_heads_), 0.0);
    counts_.assign(static_cast<std::size_t>(n_heads_), 0);
  }
}

void PolicyHook::on_row(const RowInfo& row, std::span<double> weights) {
  manipulate_row(weights, row.key_begin, policy_.needle, method_);
  if (tracks_entropy()) {
    sums_[static_cast<std::size_t>(row.head)] += entropy_bits(weights);
    ++counts_[static_cast<std::size_t>(row.head)];
  }
}

void PolicyHook::head_mask(int layer, std::span<char> retained) {
  if (tracks_entropy()) {
    std::vector<double> e(static_cast<std::size_t>(n_heads_));
    for (int h = 0; h < n_heads_; ++h) {
      const int c = counts_[static_cast<std::size_t>(h)];
      if (c == 0) throw InternalError("attention layer produced no rows for a head");
      e[static_cast<std::size_t>(h)] = sums_[static_cast<std::size_t>(h)] / c;
    }
    entropies_[layer] = std::move(e);
  }
  if (record_only_) return;
  std::vector<char> keep;
  if (fixed_mask_) {
    auto it = fixed_mask_->find(layer);
    if (it == fixed_mask_->end()) return;
    keep = it->second;
  } else if (k_ < n_heads_) {
    keep = select_topk_heads(entropies_.at(layer), k_);
  } else {
    return;
  }
  std::copy(keep.begin(), keep.end(), retained.begin());
  mask_[layer] = std::move(keep);
}

PolicyHook compose_hook(const ManipulationPolicy& policy, Phase phase, int n_heads) {
  return PolicyHook(policy, phase, n_heads);
}

PolicyController::PolicyController(ManipulationPolicy policy, int n_heads, ControlOptions options)
    : policy_(std::move(policy)), n_heads_(n_heads), options_(options) {
  policy_.validate(n_heads_);
}

ForwardOutput PolicyController::run(Session& session, std::span<const int> tokens, Phase phase,
                                    AttentionTrace* trace, int logits_from) {
  PolicyHook hook(policy_, phase, n_heads_);
  const int k = policy_.k(phase).value_or(n_heads_);
  auto select = [&](const LayerEntropies& e) {
    return options_.scope == TopkScope::kGlobal ? select_topk_global(e, k) : select_topk_heads(e, k);
  };
  if (phase == Phase::kGeneration && options_.freeze_after_prefill) {
    if (!prefilled_) throw InvalidInput("generation before prefill");
    if (k < n_heads_) hook.set_fixed_mask(select(prefill_entropies_));
  } else if (options_.scope == TopkScope::kGlobal && k < n_heads_) {
    // Pass one on a fork collects every layer's entropies unmasked.
    Session probe(session);
    PolicyHook recorder(policy_, phase, n_heads_);
    recorder.set_record_only(true);
    probe.extend(tokens, &recorder);
    hook.set_fixed_mask(select(recorder.entropies()));
  }
  if (phase == Phase::kPrefill && options_.freeze_after_prefill) hook.set_track_entropy(true);

  ForwardOutput out = session.extend(tokens, &hook, trace, logits_from);
  if (phase == Phase::kPrefill) {
    prefill_mask_ = hook.mask();
    prefill_entropies_ = hook.entropies();
    prefilled_ = true;
  }
  return out;
}

ForwardOutput PolicyController::prefill(Session& session, std::span<const int> tokens, AttentionTrace* trace,
                                        int logits_from) {
  const int end = session.length() + static_cast<int>(tokens.size());
  for (const NeedleSpan& s : policy_.needle) {
    if (s.end > end) throw InvalidInput("needle span extends past the prompt");
  }
  return run(session, tokens, Phase::kPrefill, trace, logits_from);
}

void PolicyController::adopt_prefill(const PolicyController& other) {
  prefill_mask_ = other.prefill_mask_;
  prefill_entropies_ = other.prefill_entropies_;
  prefilled_ = other.prefilled_;
}

ForwardOutput PolicyController::step(Session& session, int token, AttentionTrace* trace) {
  const int one[1] = {token};
  return run(session, one, Phase::kGeneration, trace, -1);
}

std::vector<int> PolicyController::generate(Session& session, const ForwardOutput& prefill_output, int budget,
                                            const std::set<int>& stop_tokens, AttentionTrace* trace) {
  if (budget < 1) throw InvalidInput("generation budget must be at least 1");
  std::vector<int> out;
  int tok = argmax_token(prefill_output.last());
  out.push_back(tok);
  while (static_cast<int>(out.size()) < budget && !stop_tokens.count(tok)) {
    tok = argmax_token(step(session, tok, trace).last());
    out.push_back(tok);
  }
  return out;
}

}  // namespace hybridscope
