#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "doctest.h"
#include "strata/clustering.hpp"
#include "strata/dataset.hpp"
#include "strata/distance.hpp"
#include "strata/rng.hpp"
#include "test_util.hpp"

using namespace strata;
using namespace testutil;

namespace {

double wcss(const VectorArray& pts, const KMeansResult& r, Metric metric) {
    double total = 0;
    for (std::size_t i = 0; i < pts.size(); ++i)
        total += distance(pts.row(i), r.centroids.row(r.assignment[i]), metric);
    return total;
}

// Reference Lloyd implementation, deliberately plain: random restarts,
// double precision, nearest-centroid assignment with lowest-index ties.
double reference_best_wcss(const VectorArray& pts, std::uint32_t k,
                           int restarts) {
    const std::size_t n = pts.size();
    const std::uint32_t dim = pts.dim;
    double best = std::numeric_limits<double>::infinity();
    Rng rng(424242);
    for (int r = 0; r < restarts; ++r) {
        std::vector<std::size_t> perm(n);
        std::iota(perm.begin(), perm.end(), std::size_t{0});
        for (std::size_t i = 0; i < n; ++i)
            std::swap(perm[i], perm[i + rng.bounded(n - i)]);
        std::vector<double> cent(k * static_cast<std::size_t>(dim));
        for (std::uint32_t c = 0; c < k; ++c) {
            auto row = pts.row(perm[c]);
            for (std::uint32_t d = 0; d < dim; ++d)
                cent[c * static_cast<std::size_t>(dim) + d] = row[d];
        }
        std::vector<std::uint32_t> assign(n, 0);
        for (int iter = 0; iter < 60; ++iter) {
            bool changed = false;
            for (std::size_t i = 0; i < n; ++i) {
                auto p = pts.row(i);
                double bd = std::numeric_limits<double>::infinity();
                std::uint32_t bc = 0;
                for (std::uint32_t c = 0; c < k; ++c) {
                    double d = 0;
                    for (std::uint32_t x = 0; x < dim; ++x) {
                        double t = p[x] - cent[c * static_cast<std::size_t>(dim) + x];
                        d += t * t;
                    }
                    if (d < bd) {
                        bd = d;
                        bc = c;
                    }
                }
                if (assign[i] != bc) {
                    assign[i] = bc;
                    changed = true;
                }
            }
            std::vector<double> sums(k * static_cast<std::size_t>(dim), 0.0);
            std::vector<std::size_t> counts(k, 0);
            for (std::size_t i = 0; i < n; ++i) {
                auto p = pts.row(i);
                for (std::uint32_t x = 0; x < dim; ++x)
                    sums[assign[i] * static_cast<std::size_t>(dim) + x] += p[x];
                ++counts[assign[i]];
            }
            for (std::uint32_t c = 0; c < k; ++c)
                if (counts[c])
                    for (std::uint32_t x = 0; x < dim; ++x)
                        cent[c * static_cast<std::size_t>(dim) + x] =
                            sums[c * static_cast<std::size_t>(dim) + x] / counts[c];
            if (!changed) break;
        }
        double total = 0;
        for (std::size_t i = 0; i < n; ++i) {
            auto p = pts.row(i);
            double d = 0;
            for (std::uint32_t x = 0; x < dim; ++x) {
                double t = p[x] - cent[assign[i] * static_cast<std::size_t>(dim) + x];
                d += t * t;
            }
            total += d;
        }
        best = std::min(best, total);
    }
    return best;
}

VectorArray blob_points(std::uint32_t dim, std::size_t per_blob,
                        const std::vector<std::vector<float>>& centers,
                        float spread, std::uint64_t seed) {
    VectorArray pts;
    pts.dim = dim;
    Rng rng(seed);
    VectorId id = 0;
    std::vector<float> row(dim);
    for (const auto& c : centers) {
        for (std::size_t i = 0; i < per_blob; ++i) {
            for (std::uint32_t d = 0; d < dim; ++d)
                row[d] = c[d] + spread * static_cast<float>(rng.gaussian());
            pts.push_back(id++, row);
        }
    }
    return pts;
}

} // namespace

TEST_CASE("kmeans matches a multi-restart reference on small data") {
    Synthetic syn = generate_synthetic_full(600, 8, 5, 0.05f, 31);
    KMeansResult r = kmeans(syn.data.vectors, Metric::SquaredL2, 5, 7);
    double ours = wcss(syn.data.vectors, r, Metric::SquaredL2);
    double ref = reference_best_wcss(syn.data.vectors, 5, 8);
    CHECK(ours <= ref * 1.10 + 1e-9);
    CHECK(r.centroids.size() == 5);
    CHECK(r.assignment.size() == 600);
}

TEST_CASE("kmeans recovers well-separated blob centers") {
    std::vector<std::vector<float>> centers = {
        {0.f, 0.f, 0.f, 0.f}, {10.f, 0.f, 0.f, 0.f},
        {0.f, 10.f, 0.f, 0.f}, {0.f, 0.f, 10.f, 0.f}};
    VectorArray pts = blob_points(4, 120, centers, 0.2f, 99);
    KMeansResult r = kmeans(pts, Metric::SquaredL2, 4, 5);

    // Each true center must be within 0.1 RMS of some learned centroid.
    for (const auto& c : centers) {
        double best = std::numeric_limits<double>::infinity();
        for (std::uint32_t m = 0; m < 4; ++m) {
            auto row = r.centroids.row(m);
            double d = 0;
            for (std::uint32_t x = 0; x < 4; ++x) {
                double t = row[x] - c[x];
                d += t * t;
            }
            best = std::min(best, d);
        }
        CHECK(std::sqrt(best / 4.0) < 0.1);
    }
}

TEST_CASE("kmeans centroids equal member means at convergence") {
    Synthetic syn = generate_synthetic_full(400, 6, 4, 0.1f, 17);
    KMeansResult r = kmeans(syn.data.vectors, Metric::SquaredL2, 4, 3);
    std::vector<double> sums(4 * 6, 0.0);
    std::vector<std::size_t> counts(4, 0);
    for (std::size_t i = 0; i < 400; ++i) {
        auto p = syn.data.vectors.row(i);
        for (std::uint32_t d = 0; d < 6; ++d) sums[r.assignment[i] * 6 + d] += p[d];
        ++counts[r.assignment[i]];
    }
    for (std::uint32_t c = 0; c < 4; ++c) {
        REQUIRE(counts[c] > 0);
        auto row = r.centroids.row(c);
        for (std::uint32_t d = 0; d < 6; ++d) {
            float mean = static_cast<float>(sums[c * 6 + d] / counts[c]);
            CHECK(row[d] == doctest::Approx(mean).epsilon(1e-5));
        }
    }
}

TEST_CASE("kmeans handles k equal to n and rejects k above n") {
    Synthetic syn = generate_synthetic_full(12, 3, 2, 0.2f, 5);
    KMeansResult r = kmeans(syn.data.vectors, Metric::SquaredL2, 12, 9);
    std::set<std::uint32_t> used(r.assignment.begin(), r.assignment.end());
    CHECK(used.size() == 12);
    for (std::size_t i = 0; i < 12; ++i) {
        auto p = syn.data.vectors.row(i);
        auto c = r.centroids.row(r.assignment[i]);
        CHECK(std::equal(p.begin(), p.end(), c.begin()));
    }
    CHECK_THROWS_AS(kmeans(syn.data.vectors, Metric::SquaredL2, 13, 1),
                    std::invalid_argument);
    CHECK_THROWS_AS(kmeans(syn.data.vectors, Metric::SquaredL2, 0, 1),
                    std::invalid_argument);
}

TEST_CASE("kmeans never returns an empty cluster") {
    // Adversarial: one far outlier plus a tight clump, k larger than the
    // number of natural modes.
    VectorArray pts;
    pts.dim = 2;
    Rng rng(3);
    std::vector<float> row(2);
    for (VectorId i = 0; i < 50; ++i) {
        row[0] = 0.01f * static_cast<float>(rng.gaussian());
        row[1] = 0.01f * static_cast<float>(rng.gaussian());
        pts.push_back(i, row);
    }
    row[0] = 100.f;
    row[1] = 100.f;
    pts.push_back(50, row);

    KMeansResult r = kmeans(pts, Metric::SquaredL2, 8, 11);
    std::vector<int> counts(8, 0);
    for (auto a : r.assignment) ++counts[a];
    for (int c : counts) CHECK(c > 0);
}

TEST_CASE("partition_at_density produces exactly round(density * n) partitions") {
    Synthetic syn = generate_synthetic_full(2000, 4, 8, 0.05f, 21);
    for (double density : {0.01, 0.033, 0.1, 0.25, 1.0}) {
        ClusteringResult r =
            partition_at_density(syn.data.vectors, Metric::SquaredL2, density, 77);
        auto expect = static_cast<std::uint64_t>(std::llround(density * 2000));
        CHECK(r.partitions.size() == expect);
        CHECK(r.centroids.size() == expect);
        CHECK(r.member_total() == 2000);

        // Every input id appears exactly once before replication.
        std::unordered_set<VectorId> seen;
        for (const auto& p : r.partitions)
            for (VectorId id : p.member_ids) CHECK(seen.insert(id).second);
        CHECK(seen.size() == 2000);
    }
    CHECK_THROWS_AS(partition_at_density(syn.data.vectors, Metric::SquaredL2, 0.0, 1),
                    std::invalid_argument);
    CHECK_THROWS_AS(partition_at_density(syn.data.vectors, Metric::SquaredL2, 1.5, 1),
                    std::invalid_argument);
}

TEST_CASE("partition sizes stay near the density target at scale") {
    // Large enough to take the sharded recursion path.
    Synthetic syn = generate_synthetic_full(20000, 24, 32, 0.08f, 13);
    ClusteringResult r = partition_at_density(syn.data.vectors, Metric::SquaredL2, 0.05, 5);
    REQUIRE(r.partitions.size() == 1000);

    double mean = 0;
    for (const auto& p : r.partitions) mean += static_cast<double>(p.size());
    mean /= static_cast<double>(r.partitions.size());
    // Mean size must equal 1/density up to rounding; sanity-check the law.
    CHECK(mean * 0.05 == doctest::Approx(1.0).epsilon(0.01));

    std::size_t empty = 0;
    for (const auto& p : r.partitions) empty += p.size() == 0;
    CHECK(empty == 0);
}

TEST_CASE("partitioning is deterministic across runs") {
    Synthetic syn = generate_synthetic_full(5000, 8, 16, 0.1f, 41);
    ClusteringResult a = partition_at_density(syn.data.vectors, Metric::SquaredL2, 0.02, 9);
    ClusteringResult b = partition_at_density(syn.data.vectors, Metric::SquaredL2, 0.02, 9);

    TempDir tmp("det");
    write_partitions(a.partitions, a.dim, tmp.path / "a.part");
    write_partitions(b.partitions, b.dim, tmp.path / "b.part");
    CHECK(slurp(tmp.path / "a.part") == slurp(tmp.path / "b.part"));

    ClusteringResult c = partition_at_density(syn.data.vectors, Metric::SquaredL2, 0.02, 10);
    write_partitions(c.partitions, c.dim, tmp.path / "c.part");
    CHECK(slurp(tmp.path / "a.part") != slurp(tmp.path / "c.part"));
}

TEST_CASE("pid_base offsets partition ids") {
    Synthetic syn = generate_synthetic_full(100, 4, 2, 0.1f, 8);
    ClusteringResult r =
        partition_at_density(syn.data.vectors, Metric::SquaredL2, 0.1, 3, 500);
    REQUIRE(r.partitions.size() == 10);
    for (std::size_t i = 0; i < 10; ++i) {
        CHECK(r.partitions[i].pid == 500 + i);
        CHECK(r.centroids.ids[i] == 500 + i);
    }
}

TEST_CASE("replicate_boundary copies equidistant points both ways") {
    // Hand-built result: centroids pinned at x=0 and x=4 so the member at
    // x=2 is exactly equidistant and must replicate even at epsilon zero.
    ClusteringResult r;
    r.dim = 1;
    r.centroids.dim = 1;
    r.centroids.ids = {0, 1};
    r.centroids.data = {0.f, 4.f};
    r.partitions.resize(2);
    r.partitions[0].pid = 0;
    r.partitions[0].member_ids = {0, 1, 40};
    r.partitions[0].member_data = {0.0f, 0.1f, 2.0f};
    r.partitions[1].pid = 1;
    r.partitions[1].member_ids = {2, 3};
    r.partitions[1].member_data = {4.0f, 3.9f};

    ClusteringResult rep = replicate_boundary(std::move(r), Metric::SquaredL2,
                                              0.0, 4);
    std::size_t mid_copies = 0;
    for (const auto& p : rep.partitions)
        mid_copies += std::count(p.member_ids.begin(), p.member_ids.end(),
                                 VectorId{40});
    CHECK(mid_copies == 2);
    CHECK(rep.replication_factor > 1.0);
    CHECK(rep.replication_factor <= 4.0);
    CHECK(rep.member_total() == 6); // five originals plus one midpoint copy
}

TEST_CASE("replicate_boundary respects the copy cap and epsilon") {
    Synthetic syn = generate_synthetic_full(3000, 8, 12, 0.15f, 55);
    ClusteringResult base =
        partition_at_density(syn.data.vectors, Metric::SquaredL2, 0.01, 6);
    ClusteringResult rep = replicate_boundary(base, Metric::SquaredL2, 0.25, 3);

    CHECK(rep.replication_factor >= 1.0);
    CHECK(rep.replication_factor <= 3.0);

    std::unordered_map<VectorId, int> copies;
    for (const auto& p : rep.partitions)
        for (VectorId id : p.member_ids) ++copies[id];
    for (const auto& [id, c] : copies) {
        CHECK(c >= 1);
        CHECK(c <= 3);
    }
    CHECK(copies.size() == 3000);

    // Epsilon zero with max_copies one must change nothing.
    ClusteringResult same = replicate_boundary(base, Metric::SquaredL2, 0.5, 1);
    CHECK(same.member_total() == base.member_total());
    CHECK(same.replication_factor == 1.0);
}

TEST_CASE("replicated copies satisfy the distance rule") {
    Synthetic syn = generate_synthetic_full(800, 6, 8, 0.2f, 23);
    ClusteringResult base =
        partition_at_density(syn.data.vectors, Metric::SquaredL2, 0.02, 31);
    const double eps = 0.2;
    ClusteringResult rep = replicate_boundary(base, Metric::SquaredL2, eps, 8);

    // Map id -> nearest centroid distance.
    std::unordered_map<VectorId, float> nearest;
    for (const auto& p : base.partitions) {
        for (std::size_t mi = 0; mi < p.member_ids.size(); ++mi) {
            auto v = p.member(mi, base.dim);
            float best = std::numeric_limits<float>::infinity();
            for (std::size_t c = 0; c < base.centroids.size(); ++c)
                best = std::min(best,
                                distance(v, base.centroids.row(c), Metric::SquaredL2));
            nearest[p.member_ids[mi]] = best;
        }
    }
    for (std::size_t c = 0; c < rep.partitions.size(); ++c) {
        const auto& p = rep.partitions[c];
        for (std::size_t mi = 0; mi < p.member_ids.size(); ++mi) {
            float d = distance(p.member(mi, rep.dim), rep.centroids.row(c),
                               Metric::SquaredL2);
            float limit =
                (1.f + static_cast<float>(eps)) * nearest[p.member_ids[mi]];
            CHECK(d <= limit * (1.f + 1e-6f));
        }
    }
}

TEST_CASE("shuffle_partitions balances and merges duplicates") {
    std::vector<Partition> parts;
    for (VectorId pid = 0; pid < 10000; ++pid) {
        Partition p;
        p.pid = pid;
        p.member_ids = {pid * 10, pid * 10 + 1};
        p.member_data = {1.f, 2.f};
        parts.push_back(std::move(p));
    }
    ShuffleResult r = shuffle_partitions(parts, 5);
    std::size_t total = 0;
    for (const auto& list : r.by_node) total += list.size();
    CHECK(total == 10000);
    CHECK(r.max_over_mean_partitions <= 1.1);
    CHECK(r.max_over_mean_partitions >= 1.0);

    // Same pid must land on the same node each time.
    ShuffleResult r2 = shuffle_partitions(parts, 5);
    for (std::size_t nidx = 0; nidx < 5; ++nidx) {
        REQUIRE(r.by_node[nidx].size() == r2.by_node[nidx].size());
        for (std::size_t i = 0; i < r.by_node[nidx].size(); ++i)
            CHECK(r.by_node[nidx][i].pid == r2.by_node[nidx][i].pid);
    }
}

TEST_CASE("shuffle merges same-pid fragments and drops duplicate ids") {
    Partition a;
    a.pid = 7;
    a.member_ids = {1, 2};
    a.member_data = {1.f, 1.f, 2.f, 2.f};
    Partition b;
    b.pid = 7;
    b.member_ids = {2, 3};
    b.member_data = {9.f, 9.f, 3.f, 3.f};
    ShuffleResult r = shuffle_partitions({a, b}, 1);
    REQUIRE(r.by_node[0].size() == 1);
    const Partition& m = r.by_node[0][0];
    CHECK(m.pid == 7);
    REQUIRE(m.member_ids.size() == 3);
    CHECK(m.member_ids == std::vector<VectorId>{1, 2, 3});
    // First occurrence of id 2 wins.
    CHECK(m.member_data == std::vector<float>{1.f, 1.f, 2.f, 2.f, 3.f, 3.f});
}

TEST_CASE("partition files round-trip and expose extents") {
    Synthetic syn = generate_synthetic_full(500, 5, 4, 0.1f, 67);
    ClusteringResult r = partition_at_density(syn.data.vectors, Metric::SquaredL2, 0.04, 2);
    TempDir tmp("pfile");
    auto path = tmp.path / "parts.bin";
    write_partitions(r.partitions, r.dim, path);

    std::vector<Partition> rt = read_partitions(path, r.dim);
    REQUIRE(rt.size() == r.partitions.size());
    for (std::size_t i = 0; i < rt.size(); ++i) {
        CHECK(rt[i].pid == r.partitions[i].pid);
        CHECK(rt[i].member_ids == r.partitions[i].member_ids);
        CHECK(rt[i].member_data == r.partitions[i].member_data);
    }

    std::vector<PartitionExtent> ext = scan_partition_extents(path, r.dim);
    REQUIRE(ext.size() == rt.size());
    std::uint64_t offset = 0;
    for (std::size_t i = 0; i < ext.size(); ++i) {
        CHECK(ext[i].pid == rt[i].pid);
        CHECK(ext[i].count == rt[i].member_ids.size());
        CHECK(ext[i].offset == offset);
        CHECK(ext[i].bytes == 12 + ext[i].count * (8 + 5 * 4));
        offset += ext[i].bytes;
    }
    CHECK(offset == slurp(path).size());
}
