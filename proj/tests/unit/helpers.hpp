#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "hybridscope/config.hpp"
#include "hybridscope/model.hpp"
#include "hybridscope/session.hpp"

namespace testing {

inline std::vector<int> random_tokens(std::mt19937_64& rng, int n, int vocab, int lo = 2) {
  std::vector<int> t(static_cast<std::size_t>(n));
  for (int& x : t) x = lo + static_cast<int>(rng() % static_cast<std::uint64_t>(vocab - lo));
  return t;
}

inline hybridscope::ModelConfig small_config(std::optional<int> window = 4, bool kv = true,
                                             const char* pattern = "1S,1A,1S,1A") {
  return hybridscope::make_config(16, 3, 4, window, pattern, kv, 64);
}

// Plain recomputation of the whole forward pass, written independently of
// the engine's kernel: dense matrices, one query at a time, no cache.
// head_keep[layer][head] == 0 drops that head's output.
inline std::vector<Eigen::VectorXd> reference_forward(const hybridscope::HybridModel& m, const std::vector<int>& tokens,
                                                      const std::vector<std::vector<char>>& head_keep = {}) {
  using namespace hybridscope;
  const ModelConfig& c = m.config();
  const ModelWeights w = m.export_weights();
  const int n = static_cast<int>(tokens.size());
  std::vector<Eigen::VectorXd> x(static_cast<std::size_t>(n));
  for (int t = 0; t < n; ++t) x[static_cast<std::size_t>(t)] = w.embed.row(tokens[static_cast<std::size_t>(t)]).transpose();
  for (std::size_t li = 0; li < w.layers.size(); ++li) {
    const LayerWeights& lw = w.layers[li];
    std::vector<Eigen::VectorXd> y(static_cast<std::size_t>(n));
    if (lw.kind == LayerKind::kSsm) {
      Eigen::VectorXd h = Eigen::VectorXd::Zero(c.d_model);
      for (int t = 0; t < n; ++t) {
        const Eigen::VectorXd u = lw.ssm.w_in * x[static_cast<std::size_t>(t)];
        for (int i = 0; i < c.d_model; ++i) h[i] = lw.ssm.decay[i] * h[i] + (1 - lw.ssm.decay[i]) * u[i];
        y[static_cast<std::size_t>(t)] = lw.ssm.w_out * h;
      }
    } else {
      std::vector<Eigen::VectorXd> q(static_cast<std::size_t>(n)), k(static_cast<std::size_t>(n)), v(static_cast<std::size_t>(n));
      for (int t = 0; t < n; ++t) {
        q[static_cast<std::size_t>(t)] = lw.attn.w_q * x[static_cast<std::size_t>(t)];
        k[static_cast<std::size_t>(t)] = lw.attn.w_k * x[static_cast<std::size_t>(t)];
        v[static_cast<std::size_t>(t)] = lw.attn.w_v * x[static_cast<std::size_t>(t)];
      }
      for (int t = 0; t < n; ++t) {
        Eigen::VectorXd cat = Eigen::VectorXd::Zero(c.d_model);
        const int lo = c.window ? std::max(0, t - *c.window + 1) : 0;
        for (int h = 0; h < c.n_heads; ++h) {
          if (!head_keep.empty() && !head_keep[li].empty() && !head_keep[li][static_cast<std::size_t>(h)]) continue;
          std::vector<double> s;
          for (int j = lo; j <= t; ++j) {
            const double dot = q[static_cast<std::size_t>(t)].segment(h * c.head_dim, c.head_dim)
                                   .dot(k[static_cast<std::size_t>(j)].segment(h * c.head_dim, c.head_dim));
            s.push_back(dot / std::sqrt(static_cast<double>(c.head_dim)) + lw.attn.rel_bias(h, t - j));
          }
          double mx = s[0];
          for (double e : s) mx = std::max(mx, e);
          double z = 0;
          for (double& e : s) z += (e = std::exp(e - mx));
          for (int j = lo; j <= t; ++j) {
            cat.segment(h * c.head_dim, c.head_dim) +=
                (s[static_cast<std::size_t>(j - lo)] / z) * v[static_cast<std::size_t>(j)].segment(h * c.head_dim, c.head_dim);
          }
        }
        y[static_cast<std::size_t>(t)] = lw.attn.w_o * cat;
      }
    }
    for (int t = 0; t < n; ++t) x[static_cast<std::size_t>(t)] += y[static_cast<std::size_t>(t)];
  }
  std::vector<Eigen::VectorXd> logits;
  for (int t = 0; t < n; ++t) logits.push_back(w.unembed * x[static_cast<std::size_t>(t)]);
  return logits;
}

}  // namespace testing
