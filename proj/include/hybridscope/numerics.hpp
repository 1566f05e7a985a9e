#pragma once

#include <span>
#include <vector>

namespace hybridscope {

/// Non-negative weights over key positions. Softmax output sums to one;
/// manipulated rows may not.
using ProbVector = std::vector<double>;

/// Numerically stable softmax. Throws InvalidInput on empty or non-finite input.
ProbVector softmax(std::span<const double> scores);

/// In-place variant used by the attention kernel; same preconditions.
void softmax_inplace(std::span<double> scores);

/// scores - logsumexp(scores).
std::vector<double> log_softmax(std::span<const double> scores);

double logsumexp(std::span<const double> scores);

/// Shannon entropy in bits, -sum p log2 p, with 0 log 0 = 0. The input is
/// not required to be normalized. Throws InvalidInput on a negative entry.
double entropy_bits(std::span<const double> weights);

}  // namespace hybridscope
