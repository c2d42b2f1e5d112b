#pragma once

#include <cstdint>
#include <filesystem>
#include <unordered_map>
#include <utility>
#include <vector>

#include "strata/clustering.hpp"
#include "strata/dataset.hpp"
#include "strata/graph.hpp"
#include "strata/types.hpp"

namespace strata {

struct BuildParams {
    std::uint64_t budget = 10000; // max root vector count
    double density = 0.0;         // per-level partition density; 0 = auto
    std::uint64_t seed = 1;
    std::uint32_t max_degree = 32;  // root and profile graph degree
    std::uint32_t build_beam = 128;
    double epsilon = 0.1;           // boundary replication width
    std::uint32_t max_copies = 8;   // total copies per vector, home included
    // Auto-density profiling (used only when density == 0).
    std::size_t profile_sample = 20000;
    std::size_t profile_queries = 64;
    double target_recall = 0.9;
    double cost_ratio = 2.0;
};

// Multi-level index. levels[i] holds the partitions of level i: level 0
// partitions base vectors, level i partitions the centroids of level i-1.
// The root graph spans the centroids of the last clustered level (or the
// base vectors when no clustering was needed). Root node ids are level
// (L-1) pids; every level-i pid is a vector id at level i+1.
struct HierarchicalIndex {
    Metric metric = Metric::SquaredL2;
    std::uint32_t dim = 0;
    std::uint64_t budget = 0;
    std::uint64_t seed = 0;
    std::vector<double> densities;               // one per clustered level
    std::vector<std::vector<Partition>> levels;  // ascending pid within a level
    ProximityGraph root;

    // Derived: pid -> index into levels[i]; rebuilt on load.
    std::vector<std::unordered_map<VectorId, std::uint32_t>> pid_maps;

    std::size_t clustered_levels() const { return levels.size(); }
    void rebuild_pid_maps();
};

// Per-level search accounting. wire_bytes estimates the traffic a networked
// deployment would see: 8 bytes per requested pid plus the query vector on
// the way out, 12 bytes per kept candidate on the way back.
struct LevelTrace {
    std::vector<VectorId> pids; // partitions fetched at this level
    std::uint64_t vectors_scanned = 0;
    std::uint64_t wire_bytes = 0;
};

struct SearchTrace {
    std::uint64_t root_distance_computations = 0;
    std::vector<LevelTrace> levels; // indexed like HierarchicalIndex::levels
    std::uint64_t fetch_rounds = 0; // == clustered_levels()
    std::uint64_t total_vectors_scanned = 0; // root computations + all scans
};

// Recursive build: partition at the (chosen or given) density, replicate
// boundary vectors, recurse on the centroids until they fit the budget,
// then cap with a proximity graph. The level count follows the product law:
// splitting continues while n * (product of densities so far) remains above
// budget within 1e-9 relative tolerance, or while the actual centroid count
// still exceeds the budget.
HierarchicalIndex build_levels(const Dataset& data, const BuildParams& params);

// Clustered-level count the product law yields for a uniform density;
// equals ceil(log_{1/density}(n / budget)) away from rounding knife edges.
std::uint64_t planned_clustered_levels(std::uint64_t n, double density,
                                       std::uint64_t budget);

// Top-down search: root beam search yields m level-(L-1) pids; each level
// scans its fetched partitions, de-duplicates by id keeping the minimum
// distance, and forwards the top m (top k at level 0). Exactly one fetch
// round per clustered level. Throws CorruptIndexError if a forwarded pid
// has no partition.
std::pair<std::vector<Candidate>, SearchTrace>
search(const HierarchicalIndex& index, std::span<const float> query,
       const SearchParams& params);

struct EvalRow {
    std::uint32_t m = 0;
    double recall = 0.0;              // mean recall@k
    double mean_vectors_scanned = 0.0; // root computations + partition scans
    std::uint64_t fetch_rounds = 0;
    // per_level_recall[i]: fraction of queries whose fetched pid set at
    // level i covers, for every true top-k id, at least one partition
    // holding that id's chain. Non-increasing from the top level down by
    // construction of the chains.
    std::vector<double> per_level_recall;
};

// Sweeps m over the given values at fixed k. truth must cover k.
std::vector<EvalRow> evaluate(const HierarchicalIndex& index,
                              const VectorArray& queries,
                              const GroundTruth& truth,
                              const std::vector<std::uint32_t>& m_values,
                              std::uint32_t k);

// Index directory: index.meta (key=value), root.graph, level<i>.part.
void save_index(const HierarchicalIndex& index,
                const std::filesystem::path& dir);
HierarchicalIndex load_index(const std::filesystem::path& dir);

} // namespace strata
