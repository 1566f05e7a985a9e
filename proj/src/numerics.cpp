#include "hybridscope/numerics.hpp"

#include <algorithm>
#include <cmath>

#include "hybridscope/error.hpp"

namespace hybridscope {
namespace {

double checked_max(std::span<const double> scores) {
  if (scores.empty()) throw InvalidInput("softmax of an empty sequence");
  double m = scores[0];
  for (double s : scores) {
    if (!std::isfinite(s)) throw InvalidInput("softmax input contains a non-finite score");
    m = std::max(m, s);
  }
  return m;
}

}  // namespace

void softmax_inplace(std::span<double> scores) {
  const double m = checked_max(scores);
  double total = 0.0;
  for (double& s : scores) {
    s = std::exp(s - m);
    total += s;
  }
  for (double& s : scores) s /= total;
}

ProbVector softmax(std::span<const double> scores) {
  ProbVector out(scores.begin(), scores.end());
  softmax_inplace(out);
  return out;
}

double logsumexp(std::span<const double> scores) {
  const double m = checked_max(scores);
  double total = 0.0;
  for (double s : scores) total += std::exp(s - m);
  return m + std::log(total);
}

std::vector<double> log_softmax(std::span<const double> scores) {
  const double lse = logsumexp(scores);
  std::vector<double> out(scores.begin(), scores.end());
  for (double& s : out) s -= lse;
  return out;
}

double entropy_bits(std::span<const double> weights) {
  // Neumaier-compensated sum of -p log2 p.
  double h = 0.0;
  double c = 0.0;
  for (double w : weights) {
    if (w < 0.0 || std::isnan(w)) throw InvalidInput("entropy of a vector with a negative entry");
    if (w <= 0.0) continue;
    const double term = -w * std::log2(w);
    const double t = h + term;
    c += std::abs(h) >= std::abs(term) ? (h - t) + term : (term - t) + h;
    h = t;
  }
  h += c;
  // -0.0 for one-hot rows
  return h == 0.0 ? 0.0 : h;
}

}  // namespace hybridscope
