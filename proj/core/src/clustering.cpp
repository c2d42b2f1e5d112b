#include "strata/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <memory>
#include <numeric>
#include <unordered_map>
#include <unordered_set>

#include "strata/distance.hpp"
#include "strata/errors.hpp"
#include "strata/graph.hpp"
#include "strata/io.hpp"
#include "strata/rng.hpp"

namespace strata {

namespace {

using IndexList = std::vector<std::uint32_t>;

// Recursion thresholds: leaves are solved by one exact Lloyd run, anything
// bigger is sharded first. Sized so a leaf solve stays well under a second.
constexpr std::uint64_t kLeafWorkBound = 20ull * 1000 * 1000;
constexpr std::uint64_t kLeafPoints = 1536;
constexpr std::uint64_t kShardTarget = 1024;
constexpr std::uint32_t kShardBranchMax = 16;
constexpr std::uint32_t kShardSplitIters = 6;

struct SubsetView {
    const VectorArray* points;
    std::span<const std::uint32_t> rows;

    std::size_t size() const { return rows.size(); }
    std::span<const float> row(std::size_t i) const {
        return points->row(rows[i]);
    }
};

struct SubsetKMeans {
    std::vector<float> centroids; // k * dim, no ids
    std::vector<std::uint32_t> assignment;
    std::uint32_t iterations = 0;
};

std::span<const float> centroid_row(const std::vector<float>& c, std::uint32_t dim,
                                    std::size_t i) {
    return {c.data() + i * dim, dim};
}

void seed_plus_plus(const SubsetView& pts, Metric metric, std::uint32_t k,
                    Rng& rng, std::uint32_t dim, std::vector<float>& centroids,
                    std::vector<float>& best_dist) {
    const std::size_t n = pts.size();
    centroids.assign(static_cast<std::size_t>(k) * dim, 0.f);
    best_dist.assign(n, 0.f);

    std::size_t first = static_cast<std::size_t>(rng.bounded(n));
    auto first_row = pts.row(first);
    std::copy(first_row.begin(), first_row.end(), centroids.begin());

#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(n); ++i)
        best_dist[i] = distance(pts.row(i), centroid_row(centroids, dim, 0), metric);

    for (std::uint32_t c = 1; c < k; ++c) {
        // Weights must be nonnegative; inner-product distances get shifted.
        float shift = 0.f;
        for (std::size_t i = 0; i < n; ++i) shift = std::min(shift, best_dist[i]);
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            total += static_cast<double>(best_dist[i]) - shift;

        std::size_t pick;
        if (total > 0.0) {
            double r = rng.uniform() * total;
            double acc = 0.0;
            pick = n - 1;
            for (std::size_t i = 0; i < n; ++i) {
                acc += static_cast<double>(best_dist[i]) - shift;
                if (acc >= r) {
                    pick = i;
                    break;
                }
            }
        } else {
            // Remaining points coincide with chosen centers.
            pick = static_cast<std::size_t>(rng.bounded(n));
        }
        auto row = pts.row(pick);
        std::copy(row.begin(), row.end(),
                  centroids.begin() + static_cast<std::size_t>(c) * dim);
#pragma omp parallel for schedule(static)
        for (std::int64_t i = 0; i < static_cast<std::int64_t>(n); ++i) {
            float d = distance(pts.row(i), centroid_row(centroids, dim, c), metric);
            if (d < best_dist[i]) best_dist[i] = d;
        }
    }
}

void assign_all(const SubsetView& pts, Metric metric, std::uint32_t dim,
                const std::vector<float>& centroids, std::uint32_t k,
                std::vector<std::uint32_t>& assign, std::vector<float>& dist) {
    const std::size_t n = pts.size();
#pragma omp parallel for schedule(static)
    for (std::int64_t ii = 0; ii < static_cast<std::int64_t>(n); ++ii) {
        std::size_t i = static_cast<std::size_t>(ii);
        auto p = pts.row(i);
        std::uint32_t best = 0;
        float bd = distance(p, centroid_row(centroids, dim, 0), metric);
        for (std::uint32_t c = 1; c < k; ++c) {
            float d = distance(p, centroid_row(centroids, dim, c), metric);
            if (d < bd) {
                bd = d;
                best = c;
            }
        }
        assign[i] = best;
        dist[i] = bd;
    }
}

// Empty clusters steal the point sitting farthest from its own centroid.
// Donors keep at least one member so the fix cannot cascade.
void fix_empty_clusters(const SubsetView& pts, std::uint32_t k,
                        std::vector<std::uint32_t>& assign, std::vector<float>& dist,
                        std::vector<std::uint32_t>& counts) {
    const std::size_t n = pts.size();
    counts.assign(k, 0);
    for (std::size_t i = 0; i < n; ++i) ++counts[assign[i]];

    std::vector<char> taken;
    for (std::uint32_t c = 0; c < k; ++c) {
        if (counts[c] != 0) continue;
        if (taken.empty()) taken.assign(n, 0);
        std::size_t pick = n;
        float best = -std::numeric_limits<float>::infinity();
        for (std::size_t i = 0; i < n; ++i) {
            if (taken[i] || counts[assign[i]] <= 1) continue;
            if (dist[i] > best) {
                best = dist[i];
                pick = i;
            }
        }
        if (pick == n) break; // nothing left to donate (mass duplicates)
        taken[pick] = 1;
        --counts[assign[pick]];
        assign[pick] = c;
        counts[c] = 1;
        dist[pick] = 0.f;
    }
}

void update_means(const SubsetView& pts, std::uint32_t dim, std::uint32_t k,
                  const std::vector<std::uint32_t>& assign,
                  const std::vector<std::uint32_t>& counts,
                  std::vector<float>& centroids) {
    std::vector<double> sums(static_cast<std::size_t>(k) * dim, 0.0);
    const std::size_t n = pts.size();
    for (std::size_t i = 0; i < n; ++i) {
        auto p = pts.row(i);
        double* s = sums.data() + static_cast<std::size_t>(assign[i]) * dim;
        for (std::uint32_t d = 0; d < dim; ++d) s[d] += p[d];
    }
    for (std::uint32_t c = 0; c < k; ++c) {
        if (counts[c] == 0) continue; // stale centroid, re-seeded next round
        const double inv = 1.0 / counts[c];
        float* out = centroids.data() + static_cast<std::size_t>(c) * dim;
        const double* s = sums.data() + static_cast<std::size_t>(c) * dim;
        for (std::uint32_t d = 0; d < dim; ++d)
            out[d] = static_cast<float>(s[d] * inv);
    }
}

SubsetKMeans kmeans_subset(const SubsetView& pts, Metric metric, std::uint32_t k,
                           std::uint64_t seed, std::uint32_t max_iters,
                           std::uint32_t dim) {
    const std::size_t n = pts.size();
    SubsetKMeans out;

    if (k == n) {
        // Singletons: each point is its own centroid.
        out.centroids.resize(n * static_cast<std::size_t>(dim));
        out.assignment.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            auto p = pts.row(i);
            std::copy(p.begin(), p.end(), out.centroids.begin() + i * dim);
            out.assignment[i] = static_cast<std::uint32_t>(i);
        }
        return out;
    }
    if (max_iters == 0) max_iters = 1;

    Rng rng(mix_seed(seed, 0x6b6d));
    std::vector<float> dist;
    seed_plus_plus(pts, metric, k, rng, dim, out.centroids, dist);

    std::vector<std::uint32_t> assign(n), prev, counts;
    dist.assign(n, 0.f);
    for (std::uint32_t iter = 1; iter <= max_iters; ++iter) {
        assign_all(pts, metric, dim, out.centroids, k, assign, dist);
        fix_empty_clusters(pts, k, assign, dist, counts);
        update_means(pts, dim, k, assign, counts, out.centroids);
        out.iterations = iter;
        if (assign == prev) break;
        prev = assign;
    }
    out.assignment = std::move(prev);
    return out;
}

} // namespace

KMeansResult kmeans(const VectorArray& points, Metric metric, std::uint32_t k,
                    std::uint64_t seed, std::uint32_t max_iters) {
    const std::size_t n = points.size();
    if (k == 0 || k > n)
        throw std::invalid_argument("kmeans: require 1 <= k <= point count");

    IndexList rows(n);
    std::iota(rows.begin(), rows.end(), 0u);
    SubsetKMeans s =
        kmeans_subset({&points, rows}, metric, k, seed, max_iters, points.dim);

    KMeansResult out;
    out.centroids.dim = points.dim;
    out.centroids.data = std::move(s.centroids);
    out.centroids.ids.resize(k);
    for (std::uint32_t c = 0; c < k; ++c) out.centroids.ids[c] = c;
    out.assignment = std::move(s.assignment);
    out.iterations = s.iterations;
    return out;
}

namespace {

// Largest-remainder split of k across children, each getting at least one
// and at most its own size.
std::vector<std::uint64_t> allocate_k(const std::vector<std::uint64_t>& child_sizes,
                                      std::uint64_t k) {
    const std::size_t b = child_sizes.size();
    std::uint64_t n = 0;
    for (auto s : child_sizes) n += s;

    std::vector<std::uint64_t> alloc(b);
    std::vector<double> frac(b);
    std::uint64_t assigned = 0;
    for (std::size_t i = 0; i < b; ++i) {
        double exact = static_cast<double>(k) * static_cast<double>(child_sizes[i]) /
                       static_cast<double>(n);
        std::uint64_t base = std::max<std::uint64_t>(1, static_cast<std::uint64_t>(exact));
        base = std::min(base, child_sizes[i]);
        alloc[i] = base;
        frac[i] = exact - static_cast<double>(base);
        assigned += base;
    }
    std::vector<std::size_t> order(b);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
        if (frac[x] != frac[y]) return frac[x] > frac[y];
        return x < y;
    });
    while (assigned < k) {
        bool moved = false;
        for (std::size_t i : order) {
            if (assigned == k) break;
            if (alloc[i] < child_sizes[i]) {
                ++alloc[i];
                ++assigned;
                moved = true;
            }
        }
        if (!moved) throw std::logic_error("allocate_k: k exceeds point count");
    }
    while (assigned > k) {
        bool moved = false;
        for (auto it = order.rbegin(); it != order.rend(); ++it) {
            if (assigned == k) break;
            if (alloc[*it] > 1) {
                --alloc[*it];
                --assigned;
                moved = true;
            }
        }
        if (!moved) throw std::logic_error("allocate_k: cannot trim below one per child");
    }
    return alloc;
}

void partition_recurse(const VectorArray& points, Metric metric,
                       std::span<const std::uint32_t> rows, std::uint64_t k,
                       std::uint64_t seed, std::uint32_t max_iters,
                       std::vector<IndexList>& out_groups,
                       std::vector<float>& out_centroids) {
    const std::uint32_t dim = points.dim;
    const std::uint64_t n = rows.size();

    const std::uint64_t work = n * k * dim;
    if (k <= 2 || n <= kLeafPoints || work <= kLeafWorkBound) {
        SubsetKMeans s = kmeans_subset({&points, rows}, metric,
                                       static_cast<std::uint32_t>(k), seed,
                                       max_iters, dim);
        std::vector<IndexList> groups(k);
        for (std::size_t i = 0; i < rows.size(); ++i)
            groups[s.assignment[i]].push_back(rows[i]);
        for (std::uint64_t c = 0; c < k; ++c) {
            out_groups.push_back(std::move(groups[c]));
            out_centroids.insert(out_centroids.end(),
                                 s.centroids.begin() + c * dim,
                                 s.centroids.begin() + (c + 1) * dim);
        }
        return;
    }

    // Shard with a cheap coarse k-means, then solve each shard with a
    // proportional slice of k. This mirrors the distributed build stages
    // and keeps the cost near-linear in n.
    std::uint64_t branch64 = std::min<std::uint64_t>(
        kShardBranchMax, std::min((n + kShardTarget - 1) / kShardTarget, k));
    std::uint32_t branch = static_cast<std::uint32_t>(std::max<std::uint64_t>(2, branch64));

    SubsetKMeans split = kmeans_subset({&points, rows}, metric, branch,
                                       mix_seed(seed, 0x59117), kShardSplitIters,
                                       dim);
    std::vector<IndexList> shards(branch);
    for (std::size_t i = 0; i < rows.size(); ++i)
        shards[split.assignment[i]].push_back(rows[i]);

    // Drop empty shards (possible only on degenerate duplicate-heavy data).
    std::vector<IndexList> live;
    live.reserve(branch);
    for (auto& s : shards)
        if (!s.empty()) live.push_back(std::move(s));

    std::vector<std::uint64_t> sizes(live.size());
    for (std::size_t c = 0; c < live.size(); ++c) sizes[c] = live[c].size();
    std::vector<std::uint64_t> alloc = allocate_k(sizes, k);

    for (std::size_t c = 0; c < live.size(); ++c) {
        partition_recurse(points, metric, live[c], alloc[c],
                          mix_seed(seed, 0x700 + c), max_iters, out_groups,
                          out_centroids);
    }
}

} // namespace

ClusteringResult partition_at_density(const VectorArray& points, Metric metric,
                                      double density, std::uint64_t seed,
                                      VectorId pid_base) {
    const std::size_t n = points.size();
    if (n == 0)
        throw std::invalid_argument("partition_at_density: empty input");
    if (!(density > 0.0) || density > 1.0)
        throw std::invalid_argument("partition_at_density: density must be in (0, 1]");

    const std::uint64_t k = std::max<std::uint64_t>(
        1, static_cast<std::uint64_t>(std::llround(density * static_cast<double>(n))));

    IndexList rows(n);
    std::iota(rows.begin(), rows.end(), 0u);

    std::vector<IndexList> groups;
    std::vector<float> centroids;
    groups.reserve(k);
    centroids.reserve(k * points.dim);
    partition_recurse(points, metric, rows, k, seed, 20, groups, centroids);

    if (groups.size() != k)
        throw std::logic_error("partition_at_density: partition count drifted");

    ClusteringResult out;
    out.dim = points.dim;
    out.centroids.dim = points.dim;
    out.centroids.ids.resize(groups.size());
    out.centroids.data = std::move(centroids);
    out.partitions.resize(groups.size());
    for (std::size_t g = 0; g < groups.size(); ++g) {
        VectorId pid = pid_base + g;
        out.centroids.ids[g] = pid;
        Partition& p = out.partitions[g];
        p.pid = pid;
        p.member_ids.reserve(groups[g].size());
        p.member_data.reserve(groups[g].size() * points.dim);
        for (std::uint32_t row : groups[g]) {
            p.member_ids.push_back(points.ids[row]);
            auto v = points.row(row);
            p.member_data.insert(p.member_data.end(), v.begin(), v.end());
        }
    }
    return out;
}

ClusteringResult replicate_boundary(ClusteringResult result, Metric metric,
                                    double epsilon, std::uint32_t max_copies) {
    if (epsilon < 0.0)
        throw std::invalid_argument("replicate_boundary: epsilon must be >= 0");
    if (max_copies == 0)
        throw std::invalid_argument("replicate_boundary: max_copies must be >= 1");

    const std::uint32_t dim = result.dim;
    const std::size_t k = result.partitions.size();
    const std::size_t n = result.member_total();
    if (k <= 1 || max_copies == 1 || n == 0) {
        result.replication_factor = 1.0;
        return result;
    }

    // Candidate centroids per vector: all of them when the exact scan is
    // affordable, otherwise neighbors from a centroid proximity graph.
    const std::uint64_t exact_work = static_cast<std::uint64_t>(n) * k * dim;
    const bool exact = exact_work <= 1600ull * 1000 * 1000;

    std::unique_ptr<ProximityGraph> cgraph;
    if (!exact) {
        GraphBuildParams gp;
        gp.max_degree = 16;
        gp.build_beam = 48;
        gp.seed = 0x9e9e;
        cgraph = std::make_unique<ProximityGraph>(
            build_graph(result.centroids, metric, gp));
    }

    std::unordered_map<VectorId, std::uint32_t> pid_index;
    pid_index.reserve(k);
    for (std::size_t i = 0; i < k; ++i)
        pid_index[result.partitions[i].pid] = static_cast<std::uint32_t>(i);

    // Pending copies are recorded as (home partition, member index) so the
    // apply phase never chases pointers into reallocated member storage.
    struct Copy {
        std::uint32_t home;
        std::uint32_t member;
    };
    std::vector<std::vector<Copy>> appends(k);

    double copies_total = 0.0;
    const std::uint32_t probe = std::max<std::uint32_t>(max_copies * 2, 16);

    for (std::size_t home = 0; home < k; ++home) {
        const Partition& hp = result.partitions[home];
        for (std::size_t mi = 0; mi < hp.member_ids.size(); ++mi) {
            auto v = hp.member(mi, dim);
            std::vector<std::pair<float, std::uint32_t>> cand;
            if (exact) {
                cand.reserve(k);
                for (std::size_t c = 0; c < k; ++c)
                    cand.emplace_back(distance(v, result.centroids.row(c), metric),
                                      static_cast<std::uint32_t>(c));
            } else {
                auto [res, stats] =
                    graph_search(*cgraph, v, probe, std::max(probe, 32u));
                (void)stats;
                cand.reserve(res.size() + 1);
                bool saw_home = false;
                for (const Candidate& c : res) {
                    std::uint32_t idx = pid_index.at(c.id);
                    if (idx == home) saw_home = true;
                    cand.emplace_back(c.distance, idx);
                }
                if (!saw_home)
                    cand.emplace_back(
                        distance(v, result.centroids.row(home), metric),
                        static_cast<std::uint32_t>(home));
            }
            std::sort(cand.begin(), cand.end(), [](const auto& a, const auto& b) {
                if (a.first != b.first) return a.first < b.first;
                return a.second < b.second;
            });
            const float near = cand.front().first;
            const float limit = (1.0f + static_cast<float>(epsilon)) * near;

            std::uint32_t copies = 1;
            for (const auto& [d, idx] : cand) {
                if (copies >= max_copies) break;
                if (idx == home) continue;
                if (d > limit) break;
                appends[idx].push_back({static_cast<std::uint32_t>(home),
                                        static_cast<std::uint32_t>(mi)});
                ++copies;
            }
            copies_total += copies;
        }
    }

    for (std::size_t c = 0; c < k; ++c) {
        Partition& p = result.partitions[c];
        for (const Copy& cp : appends[c]) {
            const Partition& src = result.partitions[cp.home];
            p.member_ids.push_back(src.member_ids[cp.member]);
            auto v = src.member(cp.member, dim);
            p.member_data.insert(p.member_data.end(), v.begin(), v.end());
        }
    }
    result.replication_factor = copies_total / static_cast<double>(n);
    return result;
}

ShuffleResult shuffle_partitions(std::vector<Partition> partitions,
                                 std::uint32_t node_count) {
    if (node_count == 0)
        throw std::invalid_argument("shuffle_partitions: node_count must be >= 1");

    std::sort(partitions.begin(), partitions.end(),
              [](const Partition& a, const Partition& b) { return a.pid < b.pid; });

    ShuffleResult out;
    out.by_node.resize(node_count);
    std::size_t i = 0;
    while (i < partitions.size()) {
        std::size_t j = i + 1;
        Partition merged = std::move(partitions[i]);
        while (j < partitions.size() && partitions[j].pid == merged.pid) {
            // Same pid from different shards: merge, dropping duplicate ids.
            const Partition& extra = partitions[j];
            std::size_t dim = 0;
            if (!extra.member_ids.empty())
                dim = extra.member_data.size() / extra.member_ids.size();
            std::unordered_set<VectorId> seen(merged.member_ids.begin(),
                                              merged.member_ids.end());
            for (std::size_t mi = 0; mi < extra.member_ids.size(); ++mi) {
                if (!seen.insert(extra.member_ids[mi]).second) continue;
                merged.member_ids.push_back(extra.member_ids[mi]);
                merged.member_data.insert(merged.member_data.end(),
                                          extra.member_data.begin() + mi * dim,
                                          extra.member_data.begin() + (mi + 1) * dim);
            }
            ++j;
        }
        auto node = static_cast<std::uint32_t>(pid_hash(merged.pid) % node_count);
        out.by_node[node].push_back(std::move(merged));
        i = j;
    }

    double mean = 0.0, maxv = 0.0;
    for (const auto& list : out.by_node) {
        mean += static_cast<double>(list.size());
        maxv = std::max(maxv, static_cast<double>(list.size()));
    }
    mean /= node_count;
    out.max_over_mean_partitions = mean > 0 ? maxv / mean : 1.0;
    return out;
}

void write_partitions(const std::vector<Partition>& partitions, std::uint32_t dim,
                      const std::filesystem::path& path) {
    std::FILE* f = std::fopen(path.string().c_str(), "wb");
    if (!f) throw FormatError(path.string() + ": cannot open for writing");
    std::vector<unsigned char> buf;
    for (const Partition& p : partitions) {
        buf.resize(12 + p.size() * (8 + static_cast<std::size_t>(dim) * 4));
        store_u64le(buf.data(), p.pid);
        store_u32le(buf.data() + 8, static_cast<std::uint32_t>(p.size()));
        unsigned char* w = buf.data() + 12;
        for (std::size_t mi = 0; mi < p.size(); ++mi) {
            store_u64le(w, p.member_ids[mi]);
            w += 8;
            auto v = p.member(mi, dim);
            for (std::uint32_t d = 0; d < dim; ++d, w += 4) store_f32le(w, v[d]);
        }
        if (std::fwrite(buf.data(), 1, buf.size(), f) != buf.size()) {
            std::fclose(f);
            throw FormatError(path.string() + ": short write");
        }
    }
    if (std::fclose(f) != 0) throw FormatError(path.string() + ": close failed");
}

std::vector<Partition> read_partitions(const std::filesystem::path& path,
                                       std::uint32_t dim) {
    std::FILE* f = std::fopen(path.string().c_str(), "rb");
    if (!f) throw FormatError(path.string() + ": cannot open for reading");
    std::vector<Partition> out;
    std::uint64_t offset = 0;
    unsigned char hdr[12];
    std::vector<unsigned char> buf;
    for (;;) {
        std::size_t got = std::fread(hdr, 1, 12, f);
        if (got == 0 && std::feof(f)) break;
        if (got != 12) {
            std::fclose(f);
            throw FormatError(path.string() +
                              ": truncated partition header at byte offset " +
                              std::to_string(offset));
        }
        Partition p;
        p.pid = load_u64le(hdr);
        std::uint32_t count = load_u32le(hdr + 8);
        offset += 12;
        buf.resize(static_cast<std::size_t>(count) *
                   (8 + static_cast<std::size_t>(dim) * 4));
        got = std::fread(buf.data(), 1, buf.size(), f);
        if (got != buf.size()) {
            std::fclose(f);
            throw FormatError(path.string() +
                              ": truncated partition body at byte offset " +
                              std::to_string(offset));
        }
        p.member_ids.resize(count);
        p.member_data.resize(static_cast<std::size_t>(count) * dim);
        const unsigned char* r = buf.data();
        for (std::uint32_t mi = 0; mi < count; ++mi) {
            p.member_ids[mi] = load_u64le(r);
            r += 8;
            for (std::uint32_t d = 0; d < dim; ++d, r += 4)
                p.member_data[static_cast<std::size_t>(mi) * dim + d] = load_f32le(r);
        }
        offset += buf.size();
        out.push_back(std::move(p));
    }
    std::fclose(f);
    return out;
}

std::vector<PartitionExtent> scan_partition_extents(const std::filesystem::path& path,
                                                    std::uint32_t dim) {
    std::FILE* f = std::fopen(path.string().c_str(), "rb");
    if (!f) throw FormatError(path.string() + ": cannot open for reading");
    std::fseek(f, 0, SEEK_END);
    const std::uint64_t size = static_cast<std::uint64_t>(std::ftell(f));
    std::fseek(f, 0, SEEK_SET);

    std::vector<PartitionExtent> out;
    std::uint64_t offset = 0;
    unsigned char hdr[12];
    while (offset < size) {
        if (std::fread(hdr, 1, 12, f) != 12) {
            std::fclose(f);
            throw FormatError(path.string() +
                              ": truncated partition header at byte offset " +
                              std::to_string(offset));
        }
        PartitionExtent e;
        e.pid = load_u64le(hdr);
        e.count = load_u32le(hdr + 8);
        e.offset = offset;
        e.bytes = 12ull + static_cast<std::uint64_t>(e.count) *
                              (8 + static_cast<std::uint64_t>(dim) * 4);
        if (offset + e.bytes > size) {
            std::fclose(f);
            throw FormatError(path.string() +
                              ": truncated partition body at byte offset " +
                              std::to_string(offset + 12));
        }
        std::fseek(f, static_cast<long>(e.bytes - 12), SEEK_CUR);
        offset += e.bytes;
        out.push_back(e);
    }
    std::fclose(f);
    return out;
}

} // namespace strata
