#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

#include "strata/hierarchy.hpp"
#include "strata/types.hpp"

namespace strata {

// Per-node capacity profile of a homogeneous cluster. Latencies are in
// microseconds; rates are per second per node.
struct ClusterModel {
    std::uint32_t node_count = 1;
    double rtt_us = 200.0;
    double disk_read_latency_us = 100.0;
    double disk_iops = 16000.0;     // partition reads/s
    double disk_bandwidth = 5.0e8;  // bytes/s off disk
    double net_bandwidth = 1.5e9;   // bytes/s on the wire
    double cpu_rate = 2.0e7;        // distance computations/s
    double beta = 1.2;              // hottest node / mean node traffic

    void validate() const;
};

// key=value profile file, keys matching the field names above.
ClusterModel load_cluster_model(const std::filesystem::path& path);
void save_cluster_model(const ClusterModel& model,
                        const std::filesystem::path& path);

// Deterministic hash placement: node_of(pid) = pid_hash(pid) % node_count.
// Pinned; stores and engines must agree on it byte for byte.
struct Placement {
    std::uint32_t node_count = 1;

    std::uint32_t node_of(VectorId pid) const {
        return static_cast<std::uint32_t>(pid_hash(pid) % node_count);
    }
};

Placement place(const HierarchicalIndex& index, std::uint32_t node_count);

// Partitions owned per node across every level of the index.
std::vector<std::uint64_t> placement_histogram(const HierarchicalIndex& index,
                                               const Placement& placement);

struct NodeCounters {
    std::uint64_t partitions_read = 0;
    std::uint64_t disk_bytes = 0; // partition records pulled off disk
    std::uint64_t net_bytes = 0;  // request + response share of this node
    std::uint64_t distance_computations = 0;
};

// One simulated fetch round. The level waits for its slowest involved node;
// disk_us/compute_us break down that node's service time.
struct LevelCost {
    std::uint32_t nodes_involved = 0;
    double rtt_us = 0.0;
    double disk_us = 0.0;
    double compute_us = 0.0;
    double total_us = 0.0; // rtt_us + max over nodes (disk + compute)
};

struct QueryCostReport {
    std::vector<Candidate> results; // identical to hierarchy search
    SearchTrace trace;
    double root_compute_us = 0.0;
    std::vector<LevelCost> levels; // indexed like HierarchicalIndex::levels
    double total_us = 0.0;         // root_compute_us + sum of level totals
    std::vector<NodeCounters> per_node;
};

// Replays one query against the placement: runs the real search, then costs
// each fetch round as rtt + max over involved nodes of
// (reads/diskIops + diskReadLatency + scans/cpuRate), all queueing-free.
// Wire accounting matches LevelTrace: 8 bytes per pid plus the query vector
// out, 12 bytes per returned candidate (node-local top-m) back.
QueryCostReport simulate_query(const HierarchicalIndex& index,
                               const Placement& placement,
                               const ClusterModel& model,
                               std::span<const float> query,
                               const SearchParams& params);

// One report per workload query, in workload order. The parallel replay is
// deterministic: queries are independent and reduced in index order.
std::vector<QueryCostReport> simulate_workload(const HierarchicalIndex& index,
                                               const Placement& placement,
                                               const ClusterModel& model,
                                               const VectorArray& workload,
                                               const SearchParams& params);

enum class Resource : std::uint8_t {
    DiskIops = 0,
    DiskBandwidth = 1,
    NetBandwidth = 2,
    Cpu = 3,
};
inline constexpr std::size_t kResourceCount = 4;
std::string_view resource_name(Resource r);

// Mean per-query demand summed over nodes.
struct ResourceDemand {
    double iops = 0.0;
    double disk_bytes = 0.0;
    double net_bytes = 0.0;
    double cpu_ops = 0.0;

    double of(Resource r) const;
};

struct ThroughputEstimate {
    double qps = 0.0;
    Resource binding = Resource::DiskIops;
    double utilization[kResourceCount] = {0, 0, 0, 0}; // at peak; binding == 1
    ResourceDemand demand;
    double beta = 1.0; // the model beta the estimate used
};

// Analytic peak: QPS = min over resources of
// node_count * capacity_r / (beta * demand_r). Storage-node work only; root
// traversal runs on stateless engines that scale out independently.
ThroughputEstimate estimate_throughput(const HierarchicalIndex& index,
                                       const Placement& placement,
                                       const ClusterModel& model,
                                       const VectorArray& workload,
                                       const SearchParams& params);

// Load imbalance over a set of simulated traces: hottest node's fetched
// partitions over the mean. Requires at least one trace; 1.0 when uniform.
double measure_beta(std::span<const QueryCostReport> traces);

struct SimulatedThroughput {
    double qps = 0.0;
    std::uint64_t completed = 0;
    double sim_time_us = 0.0;
};

// Closed-loop discrete-event check of the analytic law: a fixed worker
// population replays the workload through FIFO per-node resource servers
// (iops, disk bandwidth, cpu, net) until `target` queries finish. At
// saturation the completion rate pins the binding resource.
SimulatedThroughput simulate_closed_loop(const HierarchicalIndex& index,
                                         const Placement& placement,
                                         const ClusterModel& model,
                                         const VectorArray& workload,
                                         const SearchParams& params,
                                         std::uint32_t workers_per_node = 8,
                                         std::uint64_t target = 2000);

} // namespace strata
