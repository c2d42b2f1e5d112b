#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

#include "strata/types.hpp"

namespace strata {

struct GraphBuildParams {
    std::uint32_t max_degree = 32;
    std::uint32_t build_beam = 128;
    std::uint64_t seed = 1;
};

struct TraversalStats {
    std::uint64_t distance_computations = 0;
    std::uint64_t expansions = 0;
    // Transitions between differently-labeled nodes along the expansion
    // order. Zero unless the search was given shard labels.
    std::uint64_t cross_node_steps = 0;
};

// Directed proximity graph in CSR form. Node order matches `points`;
// every node is reachable from `entry`.
struct ProximityGraph {
    Metric metric = Metric::SquaredL2;
    std::uint32_t max_degree = 0;
    std::uint32_t entry = 0;
    VectorArray points;
    std::vector<std::uint64_t> offsets;   // size() + 1 entries
    std::vector<std::uint32_t> adjacency; // offsets.back() entries

    std::size_t size() const { return points.size(); }
    std::span<const std::uint32_t> neighbors(std::uint32_t v) const {
        return {adjacency.data() + offsets[v],
                static_cast<std::size_t>(offsets[v + 1] - offsets[v])};
    }
};

// Deterministic incremental construction: nodes are inserted in id order in
// geometrically growing batches, batch searches run against a frozen
// snapshot, and commits (pruning plus reverse edges) are applied serially.
// The result is independent of thread count.
ProximityGraph build_graph(const VectorArray& points, Metric metric,
                           const GraphBuildParams& params = {});

// Best-first beam search. Returns up to k candidates sorted by
// (distance, id) ascending. beam is clamped up to at least k.
std::pair<std::vector<Candidate>, TraversalStats>
graph_search(const ProximityGraph& graph, std::span<const float> query,
             std::uint32_t k, std::uint32_t beam);

// Same search, additionally counting label transitions between consecutive
// expansions. shard_of holds one label per node.
std::pair<std::vector<Candidate>, TraversalStats>
graph_search(const ProximityGraph& graph, std::span<const float> query,
             std::uint32_t k, std::uint32_t beam,
             std::span<const std::uint32_t> shard_of);

struct ShardProbeSummary {
    std::uint32_t shard_count = 0;
    double mean_cross_fraction = 0.0; // cross-label steps / expansions
    double p99_cross_fraction = 0.0;
    double mean_shards_touched = 0.0; // distinct labels expanded per query
    double p99_shards_touched = 0.0;
};

// Labels graph nodes by k-means shard, then replays the query workload and
// reports how often walks hop between shards.
ShardProbeSummary shard_and_measure(const ProximityGraph& graph,
                                    std::uint32_t shard_count,
                                    const VectorArray& queries, std::uint32_t k,
                                    std::uint32_t beam, std::uint64_t seed);

void save_graph(const ProximityGraph& graph, const std::filesystem::path& path);
ProximityGraph load_graph(const std::filesystem::path& path);

} // namespace strata
