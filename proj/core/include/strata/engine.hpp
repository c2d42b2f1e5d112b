#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <utility>
#include <vector>

#include "strata/graph.hpp"
#include "strata/hierarchy.hpp"
#include "strata/types.hpp"
#include "strata/wire.hpp"

namespace strata {

// Query-side view of an index: the root graph plus the level count. The
// partition payloads live on the stores, so this is everything a stateless
// query node needs to hold in memory.
struct EngineIndex {
    Metric metric = Metric::SquaredL2;
    std::uint32_t dim = 0;
    std::uint32_t clustered_levels = 0;
    ProximityGraph root;

    static EngineIndex from_index(const HierarchicalIndex& index);
};

// Reads only index.meta and root.graph from an index directory. The
// partition files are never touched; they belong to the stores.
EngineIndex load_engine_index(const std::filesystem::path& dir);

struct EngineOptions {
    std::uint32_t timeout_ms = 5000; // per send/recv on each store socket
};

// Per-level accounting of real traffic, frame headers included. Levels are
// indexed like HierarchicalIndex::levels (0 = base).
struct EngineLevelTrace {
    std::uint32_t nodes_contacted = 0;
    std::uint64_t request_bytes = 0;
    std::uint64_t response_bytes = 0;
    std::uint64_t max_node_response_payload = 0;
};

struct EngineTrace {
    std::uint64_t root_distance_computations = 0;
    std::vector<EngineLevelTrace> levels;
    std::uint64_t fetch_rounds = 0; // == clustered level count
};

// Fans hierarchical searches out over a set of store nodes. Partitions map
// to stores by pid_hash(pid) % storeCount, so the store list must be in
// placement order and cover every node the shards were written for.
// Connections are opened eagerly and persist across queries; each failure
// surfaces as RpcError naming the store. Searches return exactly what the
// local in-memory search over the same index returns.
class QueryEngine {
  public:
    QueryEngine(EngineIndex index, const std::vector<SocketAddress>& stores,
                const EngineOptions& options = {});
    ~QueryEngine();

    QueryEngine(const QueryEngine&) = delete;
    QueryEngine& operator=(const QueryEngine&) = delete;

    std::pair<std::vector<Candidate>, EngineTrace>
    search(std::span<const float> query, const SearchParams& params) const;

    std::size_t store_count() const;

  private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

} // namespace strata
