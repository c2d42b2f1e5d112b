#pragma once

#include "strata/types.hpp"

namespace strata {

/// Distance under the given metric; lower is closer for all three.
/// SquaredL2 keeps the squared form (no sqrt), Cosine is 1 - cos(a, b) with
/// zero-norm inputs pinned to 1.0, NegInnerProduct is -dot(a, b).
/// Accumulation order is fixed, so results are bit-stable for a given build.
float distance(std::span<const float> a, std::span<const float> b, Metric metric);

/// Fraction of the true top-k found. Ties in ground-truth distance are
/// honored: any returned id whose true distance equals the k-th true
/// distance counts as a hit. truth must be sorted ascending and hold at
/// least k entries; result may be shorter than k.
double recall_at_k(std::span<const Candidate> result,
                   std::span<const Candidate> truth,
                   std::uint32_t k);

/// Id-only variant: plain set intersection of the two k-prefixes.
double recall_at_k(std::span<const VectorId> result_ids,
                   std::span<const VectorId> truth_ids,
                   std::uint32_t k);

} // namespace strata
