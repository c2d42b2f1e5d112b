#pragma once

#include <filesystem>

#include "strata/types.hpp"

namespace strata {

/// One partition: pid plus packed member vectors. Member order is the
/// deterministic construction order (original members first, replicated
/// copies appended).
struct Partition {
    VectorId pid = 0;
    std::vector<VectorId> member_ids;
    std::vector<float> member_data;

    std::size_t size() const { return member_ids.size(); }
    std::span<const float> member(std::size_t i, std::uint32_t dim) const {
        return {member_data.data() + i * dim, dim};
    }
};

struct ClusteringResult {
    std::uint32_t dim = 0;
    VectorArray centroids;             // ids are the fresh pids
    std::vector<Partition> partitions; // ascending pid, parallel to centroids
    double replication_factor = 1.0;   // mean copies per vector

    std::size_t member_total() const {
        std::size_t t = 0;
        for (const auto& p : partitions) t += p.size();
        return t;
    }
};

struct KMeansResult {
    VectorArray centroids; // ids 0..k-1
    std::vector<std::uint32_t> assignment;
    std::uint32_t iterations = 0;
};

/// Lloyd iterations from k-means++ seeding. Stops at max_iters or when no
/// assignment changes. Empty clusters are re-seeded to the point farthest
/// from its current centroid, so exactly k non-empty clusters come back.
/// k == n degenerates to singletons. Requires 1 <= k <= n.
KMeansResult kmeans(const VectorArray& points, Metric metric, std::uint32_t k,
                    std::uint64_t seed, std::uint32_t max_iters = 20);

/// Density-controlled partitioning: k = max(1, round(density * n)) exactly.
/// Large inputs are split recursively and clustered per shard, mirroring the
/// distributed build stages, so the cost stays near n * (1/density) * dim
/// instead of n^2 * density * dim. Fresh pids start at pid_base.
ClusteringResult partition_at_density(const VectorArray& points, Metric metric,
                                      double density, std::uint64_t seed,
                                      VectorId pid_base = 0);

/// Copies each vector into every partition whose centroid is within
/// (1 + epsilon) of its nearest-centroid distance, capped at max_copies
/// total copies chosen by ascending centroid distance. Exact for small
/// partition counts; at scale candidates come from a centroid proximity
/// search, which can only under-replicate, never misplace.
ClusteringResult replicate_boundary(ClusteringResult result, Metric metric,
                                    double epsilon = 0.1,
                                    std::uint32_t max_copies = 8);

/// Merges partitions sharing a pid (de-duplicating members by id, first
/// occurrence wins) and assigns each pid to pid_hash(pid) % node_count.
struct ShuffleResult {
    std::vector<std::vector<Partition>> by_node; // each ascending pid
    double max_over_mean_partitions = 1.0;
};
ShuffleResult shuffle_partitions(std::vector<Partition> partitions,
                                 std::uint32_t node_count);

/// Partition file: records of (u64 pid, u32 count, count * (u64 id,
/// dim * f32)), all little-endian, ascending pid.
void write_partitions(const std::vector<Partition>& partitions, std::uint32_t dim,
                      const std::filesystem::path& path);
std::vector<Partition> read_partitions(const std::filesystem::path& path,
                                       std::uint32_t dim);

/// Byte ranges of each partition record, for stores that serve straight
/// from the file: (pid, file offset, byte length, member count).
struct PartitionExtent {
    VectorId pid;
    std::uint64_t offset;
    std::uint64_t bytes;
    std::uint32_t count;
};
std::vector<PartitionExtent> scan_partition_extents(const std::filesystem::path& path,
                                                    std::uint32_t dim);

} // namespace strata
