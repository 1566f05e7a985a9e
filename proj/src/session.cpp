#include "hybridscope/session.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "hybridscope/error.hpp"
#include "hybridscope/numerics.hpp"

namespace hybridscope {

void KVCache::append(std::size_t layer, const RowMatrix& keys, const RowMatrix& values) {
  Layer& l = layers_.at(layer);
  if (keys.rows() != values.rows() || keys.cols() != d_model_ || values.cols() != d_model_) {
    throw InternalError("kv cache append with mismatched shapes");
  }
  l.keys.insert(l.keys.end(), keys.data(), keys.data() + keys.size());
  l.values.insert(l.values.end(), values.data(), values.data() + values.size());
  l.length += static_cast<int>(keys.rows());
}

std::vector<double> ForwardOutput::last() const {
  if (logits.rows() == 0) throw InternalError("forward output without logits");
  return at(first_position + static_cast<int>(logits.rows()) - 1);
}

std::vector<double> ForwardOutput::at(int position) const {
  const int r = position - first_position;
  if (r < 0 || r >= logits.rows()) throw InvalidInput("no logits for position " + std::to_string(position));
  return std::vector<double>(logits.row(r).data(), logits.row(r).data() + logits.cols());
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> recurrent_forward(const HybridModel::SsmBlock& block,
                                                              const Eigen::VectorXd& hidden,
                                                              const Eigen::VectorXd& x) {
  const Eigen::Index d = block.decay.size();
  if (hidden.size() != d || x.size() != block.w_in.cols()) {
    throw InvalidInput("recurrent_forward: dimension mismatch");
  }
  const Eigen::VectorXd u = block.w_in.apply(x);
  Eigen::VectorXd next = block.decay.cwiseProduct(hidden) + (1.0 - block.decay.array()).matrix().cwiseProduct(u);
  Eigen::VectorXd y = block.w_out.apply(next);
  return {std::move(next), std::move(y)};
}

RowMatrix attention_forward(const HybridModel& model, int layer, const RowMatrix& x, int first_pos,
                            KVCache& cache, AttentionHook* hook, AttentionTrace* trace, int call) {
  const ModelConfig& cfg = model.config();
  const auto& blk = model.blocks().at(static_cast<std::size_t>(layer)).attn;
  const int n = static_cast<int>(x.rows());
  const int d = cfg.d_model;
  const int n_heads = cfg.n_heads;
  const int hd = cfg.head_dim;
  if (cache.length(static_cast<std::size_t>(layer)) != first_pos) {
    throw InternalError("kv cache length " + std::to_string(cache.length(static_cast<std::size_t>(layer))) +
                        " does not match query position " + std::to_string(first_pos));
  }

  const RowMatrix q = blk.w_q.apply_rows(x);
  cache.append(static_cast<std::size_t>(layer), blk.w_k.apply_rows(x), blk.w_v.apply_rows(x));
  const KVCache::Layer& kv = cache.layer(static_cast<std::size_t>(layer));

  RowMatrix heads_out = RowMatrix::Zero(n, d);
  if (hook) hook->begin_layer(layer, n_heads, first_pos, n);
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(hd));
  std::vector<double> w;

  for (int h = 0; h < n_heads; ++h) {
    const bool scored = blk.has_scores[static_cast<std::size_t>(h)];
    const bool valued = blk.has_values[static_cast<std::size_t>(h)];
    for (int r = 0; r < n; ++r) {
      const int t = first_pos + r;
      const int lo = cfg.window ? std::max(0, t - *cfg.window + 1) : 0;
      const int len = t - lo + 1;
      w.assign(static_cast<std::size_t>(len), 0.0);
      const double* bias = blk.rel_bias.row(h).data();
      if (scored) {
        const double* qv = q.row(r).data() + h * hd;
        for (int j = lo; j <= t; ++j) {
          const double* kp = kv.keys.data() + static_cast<std::size_t>(j) * d + h * hd;
          double s = 0.0;
          for (int i = 0; i < hd; ++i) s += qv[i] * kp[i];
          w[static_cast<std::size_t>(j - lo)] = s * inv_sqrt + bias[t - j];
        }
      } else {
        for (int j = lo; j <= t; ++j) w[static_cast<std::size_t>(j - lo)] = bias[t - j];
      }
      softmax_inplace(w);

      TraceRow* rec = nullptr;
      if (trace) {
        trace->rows.push_back(TraceRow{call, layer, h, t, lo, {}, {}});
        rec = &trace->rows.back();
        if (trace->keep_raw) rec->raw = w;
      }
      if (hook) hook->on_row(RowInfo{layer, h, t, lo}, w);
      if (rec && trace->keep_effective) rec->effective = w;

      if (valued) {
        double* o = heads_out.row(r).data() + h * hd;
        for (int j = lo; j <= t; ++j) {
          const double wj = w[static_cast<std::size_t>(j - lo)];
          if (wj == 0.0) continue;
          const double* vp = kv.values.data() + static_cast<std::size_t>(j) * d + h * hd;
          for (int i = 0; i < hd; ++i) o[i] += wj * vp[i];
        }
      }
    }
  }

  if (hook) {
    std::vector<char> retained(static_cast<std::size_t>(n_heads), 1);
    hook->head_mask(layer, retained);
    for (int h = 0; h < n_heads; ++h) {
      if (!retained[static_cast<std::size_t>(h)]) heads_out.middleCols(h * hd, hd).setZero();
    }
  }
  return blk.w_o.apply_rows(heads_out);
}

Session::Session(const HybridModel& model)
    : model_(&model), cache_(model.blocks().size(), model.config().d_model) {
  state_.hidden.resize(model.blocks().size());
  for (std::size_t i = 0; i < model.blocks().size(); ++i) {
    if (model.blocks()[i].kind == LayerKind::kSsm) {
      state_.hidden[i] = Eigen::VectorXd::Zero(model.config().d_model);
    }
  }
}

RowMatrix Session::run_blocks(RowMatrix x, int first_pos, RecurrentState& state, KVCache& cache,
                              AttentionHook* hook, AttentionTrace* trace) {
  const auto& blocks = model_->blocks();
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const HybridModel::Block& b = blocks[i];
    if (b.kind == LayerKind::kSsm) {
      const RowMatrix u = b.ssm.w_in.apply_rows(x);
      RowMatrix hidden(x.rows(), x.cols());
      Eigen::VectorXd& h = state.hidden[i];
      const Eigen::ArrayXd keep = b.ssm.decay.array();
      const Eigen::ArrayXd take = 1.0 - keep;
      for (Eigen::Index r = 0; r < x.rows(); ++r) {
        h = (keep * h.array() + take * u.row(r).transpose().array()).matrix();
        hidden.row(r) = h.transpose();
      }
      x += b.ssm.w_out.apply_rows(hidden);
    } else {
      x += attention_forward(*model_, static_cast<int>(i), x, first_pos, cache, hook, trace, calls_);
    }
  }
  return x;
}

ForwardOutput Session::extend(std::span<const int> tokens, AttentionHook* hook, AttentionTrace* trace,
                              int logits_from) {
  const ModelConfig& cfg = model_->config();
  if (tokens.empty()) throw InvalidInput("extend with no tokens");
  for (int tok : tokens) {
    if (tok < 0 || tok >= cfg.vocab_size) throw InvalidInput("unknown token id " + std::to_string(tok));
  }
  const int old_len = length();
  const int new_len = old_len + static_cast<int>(tokens.size());
  if (new_len > cfg.max_seq_len) {
    throw InvalidInput("sequence of " + std::to_string(new_len) + " tokens exceeds max_seq_len " +
                       std::to_string(cfg.max_seq_len));
  }
  if (logits_from < 0) logits_from = new_len - 1;
  if (logits_from >= new_len || (cfg.use_kv_cache && logits_from < old_len)) {
    throw InvalidInput("logits requested for position " + std::to_string(logits_from) + " outside the new rows");
  }
  tokens_.insert(tokens_.end(), tokens.begin(), tokens.end());

  int first_pos = old_len;
  std::span<const int> run = tokens;
  RecurrentState fresh_state;
  KVCache fresh_cache;
  RecurrentState* state = &state_;
  KVCache* cache = &cache_;
  if (!cfg.use_kv_cache) {
    // Recompute from scratch: the hook rewrites history rows as well.
    first_pos = 0;
    run = tokens_;
    fresh_state = Session(*model_).state_;
    fresh_cache = KVCache(model_->blocks().size(), cfg.d_model);
    state = &fresh_state;
    cache = &fresh_cache;
  }

  RowMatrix x(static_cast<Eigen::Index>(run.size()), cfg.d_model);
  for (std::size_t r = 0; r < run.size(); ++r) x.row(static_cast<Eigen::Index>(r)) = model_->embedding().row(run[r]);
  x = run_blocks(std::move(x), first_pos, *state, *cache, hook, trace);
  ++calls_;
  if (!cfg.use_kv_cache) state_ = std::move(fresh_state);

  ForwardOutput out;
  out.first_position = logits_from;
  out.logits = model_->unembedding().apply_rows(x.bottomRows(new_len - logits_from));
  return out;
}

ForwardOutput Session::prefill(std::span<const int> tokens, AttentionHook* hook, AttentionTrace* trace,
                               int logits_from) {
  if (length() != 0) throw InvalidInput("prefill on a non-empty session");
  return extend(tokens, hook, trace, logits_from);
}

ForwardOutput Session::step(int token, AttentionHook* hook, AttentionTrace* trace) {
  const int one[1] = {token};
  return extend(one, hook, trace);
}

int argmax_token(std::span<const double> logits) {
  if (logits.empty()) throw InvalidInput("argmax of empty logits");
  int best = 0;
  for (std::size_t i = 1; i < logits.size(); ++i) {
    if (logits[i] > logits[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
  }
  return best;
}

std::vector<int> generate(Session& session, const ForwardOutput& prefill_output, AttentionHook* hook, int budget,
                          const std::set<int>& stop_tokens, AttentionTrace* trace) {
  if (budget < 1) throw InvalidInput("generation budget must be at least 1");
  std::vector<int> out;
  int tok = argmax_token(prefill_output.last());
  out.push_back(tok);
  while (static_cast<int>(out.size()) < budget && !stop_tokens.count(tok)) {
    const ForwardOutput next = session.step(tok, hook, trace);
    tok = argmax_token(next.last());
    out.push_back(tok);
  }
  return out;
}

}  // namespace hybridscope
