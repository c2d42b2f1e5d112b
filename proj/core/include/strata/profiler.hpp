#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

#include "strata/dataset.hpp"
#include "strata/types.hpp"

namespace strata {

// One point on the cost-versus-density curve. Recorded only when the target
// recall was actually reached.
struct DensityProbe {
    double density = 0.0;
    std::uint64_t probe_count = 0;  // minimal partitions fetched per query
    double accessed_vectors = 0.0;  // mean distance computations per query
    double recall = 0.0;            // mean recall@5 achieved at probe_count
};

struct DensityProfile {
    std::vector<DensityProbe> probes; // sorted by density descending
    double baseline_cost = 0.0;       // accessed_vectors at density 1.0
    double chosen = 0.0;
};

inline constexpr double kDensityFloor = 0.001;
inline constexpr double kDensityResolution = 1.25; // stop when hi/lo <= this
inline constexpr std::uint32_t kProfileRecallK = 5;

// Cost of reaching target_recall at one density: partition the sample, build
// a proximity graph over the centroids, then find the minimal probe count p*
// (doubling, then binary search) whose scanned partitions give mean
// recall@5 >= target_recall. accessed_vectors counts centroid-graph distance
// computations plus every member of the p* scanned partitions. density 1.0
// skips partitioning entirely and degenerates to pure graph search, where p
// plays the role of the result count and the beam is max(p, 32).
// Throws UnreachableTargetError when even scanning everything falls short.
DensityProbe measure_cost_at_density(const Dataset& sample, double density,
                                     const VectorArray& queries,
                                     const GroundTruth& truth,
                                     double target_recall, std::uint64_t seed);

// Measurement source for the selection rule: returns the probe, or nullopt
// when the target is unreachable at that density.
using DensityMeasure = std::function<std::optional<DensityProbe>(double)>;

// Selection rule, decoupled from measurement so synthetic curves can drive
// it: evaluate the density-1.0 baseline, probe the floor, then bisect
// log-density until the bracket ratio is <= kDensityResolution. chosen is
// the coarsest (smallest) probed density whose cost stays within
// cost_ratio * baseline; with fewer than three feasible probes the choice
// falls back to 0.1. Throws UnreachableTargetError if the baseline itself
// is infeasible.
DensityProfile select_balanced_density(const DensityMeasure& measure,
                                       double cost_ratio);

DensityProfile select_balanced_density(const Dataset& sample,
                                       const VectorArray& queries,
                                       const GroundTruth& truth,
                                       double target_recall, double cost_ratio,
                                       std::uint64_t seed);

// CSV rows density,probe_count,accessed_vectors,recall (density descending)
// followed by one line "chosen,<density>".
void write_profile_csv(const DensityProfile& profile,
                       const std::filesystem::path& path);
DensityProfile load_profile_csv(const std::filesystem::path& path);

} // namespace strata
