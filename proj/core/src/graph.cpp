#include "strata/graph.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>

#include "strata/clustering.hpp"
#include "strata/distance.hpp"
#include "strata/errors.hpp"
#include "strata/io.hpp"

namespace strata {

namespace {

constexpr float kPruneAlpha = 1.2f;
constexpr std::uint32_t kBatchCap = 1024;
constexpr std::uint32_t kRepairBruteLimit = 4096;
constexpr std::uint32_t kGraphMagic = 0x46524753; // "SGRF"
constexpr std::uint32_t kGraphVersion = 1;

struct Visit {
    float d;
    VectorId id;
    std::uint32_t idx;
};

struct PopsNearestFirst {
    bool operator()(const Visit& a, const Visit& b) const {
        if (a.d != b.d) return a.d > b.d;
        return a.id > b.id;
    }
};

struct PopsFarthestFirst {
    bool operator()(const Visit& a, const Visit& b) const {
        if (a.d != b.d) return a.d < b.d;
        return a.id < b.id;
    }
};

// Per-thread buffers reused across searches so the walk allocates nothing
// once warm. mark is an epoch-stamped visited set; the two heaps live in
// plain vectors driven by push_heap/pop_heap.
struct SearchScratch {
    std::vector<std::uint32_t> mark;
    std::uint32_t epoch = 0;
    std::vector<Visit> frontier;
    std::vector<Visit> pool;
    std::vector<std::uint32_t> expanded;
    std::vector<std::uint32_t> pool_idx;
};

thread_local SearchScratch tls_scratch;

// Neighbor access abstraction so the same walk serves the CSR graph and the
// in-progress build adjacency.
template <typename NeighborFn>
void search_core(const VectorArray& points, Metric metric, std::uint32_t entry,
                 NeighborFn&& neighbors_of, std::span<const float> query,
                 std::uint32_t beam, TraversalStats& stats,
                 std::span<const std::uint32_t> shard_of,
                 std::vector<char>* shard_touched,
                 std::vector<Visit>& pool_out,
                 std::vector<std::uint32_t>* expanded_out) {
    const std::size_t n = points.size();
    pool_out.clear();
    if (expanded_out) expanded_out->clear();
    if (n == 0) return;

    SearchScratch& ss = tls_scratch;
    if (ss.mark.size() != n) {
        ss.mark.assign(n, 0);
        ss.epoch = 0;
    }
    if (++ss.epoch == 0) { // stamp space wrapped; fine to restart it
        std::fill(ss.mark.begin(), ss.mark.end(), 0);
        ss.epoch = 1;
    }
    const std::uint32_t stamp = ss.epoch;
    std::vector<Visit>& frontier = ss.frontier;
    std::vector<Visit>& pool = ss.pool;
    frontier.clear();
    pool.clear();

    float d0 = distance(query, points.row(entry), metric);
    ++stats.distance_computations;
    Visit start{d0, points.ids[entry], entry};
    frontier.push_back(start);
    pool.push_back(start);
    ss.mark[entry] = stamp;

    bool have_last = false;
    std::uint32_t last_shard = 0;

    while (!frontier.empty()) {
        Visit cur = frontier.front();
        if (pool.size() >= beam && cur.d > pool.front().d) break;
        std::pop_heap(frontier.begin(), frontier.end(), PopsNearestFirst{});
        frontier.pop_back();
        ++stats.expansions;
        if (expanded_out) expanded_out->push_back(cur.idx);
        if (!shard_of.empty()) {
            std::uint32_t s = shard_of[cur.idx];
            if (have_last && s != last_shard) ++stats.cross_node_steps;
            last_shard = s;
            have_last = true;
            if (shard_touched) (*shard_touched)[s] = 1;
        }
        for (std::uint32_t nb : neighbors_of(cur.idx)) {
            if (ss.mark[nb] == stamp) continue;
            ss.mark[nb] = stamp;
            float d = distance(query, points.row(nb), metric);
            ++stats.distance_computations;
            Visit v{d, points.ids[nb], nb};
            if (pool.size() < beam || d < pool.front().d ||
                (d == pool.front().d && v.id < pool.front().id)) {
                frontier.push_back(v);
                std::push_heap(frontier.begin(), frontier.end(),
                               PopsNearestFirst{});
                pool.push_back(v);
                std::push_heap(pool.begin(), pool.end(), PopsFarthestFirst{});
                if (pool.size() > beam) {
                    std::pop_heap(pool.begin(), pool.end(), PopsFarthestFirst{});
                    pool.pop_back();
                }
            }
        }
    }

    // Node ids are unique within a graph, so (d, id) is a total order and the
    // sorted pool is independent of heap layout.
    pool_out.assign(pool.begin(), pool.end());
    std::sort(pool_out.begin(), pool_out.end(), [](const Visit& a, const Visit& b) {
        if (a.d != b.d) return a.d < b.d;
        return a.id < b.id;
    });
}

// Keep the closest candidates that are not dominated by an already kept
// neighbor, then backfill with the nearest rejects up to the degree cap.
void diverse_prune(const VectorArray& points, Metric metric, std::uint32_t self,
                   const std::vector<Visit>& cand, std::uint32_t max_degree,
                   std::vector<std::uint32_t>& out) {
    out.clear();
    std::vector<std::uint32_t> rejected;
    for (std::size_t i = 0; i < cand.size() && out.size() < max_degree; ++i) {
        const Visit& c = cand[i];
        if (c.idx == self) continue;
        bool dup = false;
        for (std::uint32_t s : out)
            if (s == c.idx) { dup = true; break; }
        if (dup) continue;
        bool keep = true;
        for (std::uint32_t s : out) {
            float ds = distance(points.row(s), points.row(c.idx), metric);
            if (kPruneAlpha * ds <= c.d) {
                keep = false;
                break;
            }
        }
        if (keep) {
            out.push_back(c.idx);
        } else {
            rejected.push_back(static_cast<std::uint32_t>(i));
        }
    }
    for (std::uint32_t ri : rejected) {
        if (out.size() >= max_degree) break;
        std::uint32_t idx = cand[ri].idx;
        bool dup = false;
        for (std::uint32_t s : out)
            if (s == idx) { dup = true; break; }
        if (!dup) out.push_back(idx);
    }
}

std::uint32_t pick_medoid(const VectorArray& points, Metric metric) {
    const std::size_t n = points.size();
    const std::uint32_t dim = points.dim;
    std::vector<double> mean(dim, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        auto row = points.row(i);
        for (std::uint32_t d = 0; d < dim; ++d) mean[d] += row[d];
    }
    std::vector<float> meanf(dim);
    for (std::uint32_t d = 0; d < dim; ++d)
        meanf[d] = static_cast<float>(mean[d] / static_cast<double>(n));

    std::uint32_t best = 0;
    float bd = distance(points.row(0), std::span<const float>(meanf), metric);
    for (std::size_t i = 1; i < n; ++i) {
        float d = distance(points.row(i), std::span<const float>(meanf), metric);
        if (d < bd) {
            bd = d;
            best = static_cast<std::uint32_t>(i);
        }
    }
    return best;
}

double percentile99(std::vector<double> values) {
    if (values.empty()) return 0.0;
    std::sort(values.begin(), values.end());
    std::size_t idx = static_cast<std::size_t>(
        std::ceil(0.99 * static_cast<double>(values.size())));
    if (idx > 0) --idx;
    return values[std::min(idx, values.size() - 1)];
}

} // namespace

ProximityGraph build_graph(const VectorArray& points, Metric metric,
                           const GraphBuildParams& params) {
    const std::size_t n = points.size();
    if (n == 0) throw std::invalid_argument("build_graph: empty input");
    if (params.max_degree == 0)
        throw std::invalid_argument("build_graph: max_degree must be >= 1");
    const std::uint32_t R = params.max_degree;
    const std::uint32_t beam =
        std::max<std::uint32_t>(params.build_beam, R + 1);

    std::vector<std::vector<std::uint32_t>> adj(n);
    for (auto& a : adj) a.reserve(R + 1);
    const std::uint32_t entry = pick_medoid(points, metric);

    // Insertion order: medoid first, then ascending index.
    std::vector<std::uint32_t> order;
    order.reserve(n);
    order.push_back(entry);
    for (std::uint32_t i = 0; i < n; ++i)
        if (i != entry) order.push_back(i);

    auto neighbors_of = [&adj](std::uint32_t v) -> std::span<const std::uint32_t> {
        return {adj[v].data(), adj[v].size()};
    };

    std::vector<std::vector<Visit>> batch_pools;
    std::vector<std::uint32_t> pruned, repruned;
    std::vector<Visit> cand, nb_cand;

    std::size_t next = 1; // order[0] joins with no edges
    std::size_t batch = 1;
    while (next < n) {
        const std::size_t take = std::min<std::size_t>(
            std::min<std::size_t>(batch, kBatchCap), n - next);
        batch_pools.assign(take, {});

#pragma omp parallel for schedule(dynamic, 1)
        for (std::int64_t bi = 0; bi < static_cast<std::int64_t>(take); ++bi) {
            std::uint32_t node = order[next + bi];
            TraversalStats stats;
            std::vector<std::uint32_t>& expanded = tls_scratch.expanded;
            std::vector<Visit> pool;
            search_core(points, metric, entry, neighbors_of, points.row(node),
                        beam, stats, {}, nullptr, pool, &expanded);
            // Candidate set: beam pool plus everything expanded. Popped nodes
            // are unique (the visited mark gates every push), so dedup only
            // has to test pool membership.
            std::vector<Visit>& merged = batch_pools[bi];
            merged = std::move(pool);
            std::sort(expanded.begin(), expanded.end());
            std::vector<std::uint32_t>& in_pool = tls_scratch.pool_idx;
            in_pool.clear();
            in_pool.reserve(merged.size());
            for (const Visit& v : merged) in_pool.push_back(v.idx);
            std::sort(in_pool.begin(), in_pool.end());
            merged.reserve(merged.size() + expanded.size());
            for (std::uint32_t e : expanded) {
                if (!std::binary_search(in_pool.begin(), in_pool.end(), e))
                    merged.push_back(Visit{
                        distance(points.row(node), points.row(e), metric),
                        points.ids[e], e});
            }
            std::sort(merged.begin(), merged.end(),
                      [](const Visit& a, const Visit& b) {
                          if (a.d != b.d) return a.d < b.d;
                          return a.id < b.id;
                      });
        }

        // Serial commit in insertion order keeps the result deterministic.
        for (std::size_t bi = 0; bi < take; ++bi) {
            std::uint32_t node = order[next + bi];
            cand = std::move(batch_pools[bi]);
            diverse_prune(points, metric, node, cand, R, pruned);
            adj[node] = pruned;
            for (std::uint32_t nb : pruned) {
                adj[nb].push_back(node);
                if (adj[nb].size() > R) {
                    std::vector<Visit> nb_cand;
                    nb_cand.reserve(adj[nb].size());
                    for (std::uint32_t x : adj[nb])
                        nb_cand.push_back(
                            Visit{distance(points.row(nb), points.row(x), metric),
                                  points.ids[x], x});
                    std::sort(nb_cand.begin(), nb_cand.end(),
                              [](const Visit& a, const Visit& b) {
                                  if (a.d != b.d) return a.d < b.d;
                                  return a.id < b.id;
                              });
                    diverse_prune(points, metric, nb, nb_cand, R, repruned);
                    adj[nb] = repruned;
                }
            }
        }

        next += take;
        batch *= 2;
    }

    // Directed reachability repair: wire every orphan in from its nearest
    // already-reachable node.
    std::vector<char> reached(n, 0);
    std::vector<std::uint32_t> stack{entry};
    reached[entry] = 1;
    auto bfs_from = [&](std::uint32_t src) {
        stack.assign(1, src);
        while (!stack.empty()) {
            std::uint32_t v = stack.back();
            stack.pop_back();
            for (std::uint32_t nb : adj[v]) {
                if (!reached[nb]) {
                    reached[nb] = 1;
                    stack.push_back(nb);
                }
            }
        }
    };
    bfs_from(entry);

    std::vector<std::uint32_t> orphans;
    for (std::uint32_t i = 0; i < n; ++i)
        if (!reached[i]) orphans.push_back(i);

    for (std::uint32_t u : orphans) {
        if (reached[u]) continue;
        std::uint32_t link = entry;
        if (orphans.size() <= kRepairBruteLimit) {
            float bd = std::numeric_limits<float>::infinity();
            for (std::uint32_t r = 0; r < n; ++r) {
                if (!reached[r]) continue;
                float d = distance(points.row(u), points.row(r), metric);
                if (d < bd) {
                    bd = d;
                    link = r;
                }
            }
        }
        adj[link].push_back(u); // may exceed R; connectivity wins here
        reached[u] = 1;
        bfs_from(u);
    }

    ProximityGraph g;
    g.metric = metric;
    g.max_degree = R;
    g.entry = entry;
    g.points = points;
    g.offsets.resize(n + 1);
    g.offsets[0] = 0;
    for (std::size_t i = 0; i < n; ++i)
        g.offsets[i + 1] = g.offsets[i] + adj[i].size();
    g.adjacency.reserve(g.offsets[n]);
    for (std::size_t i = 0; i < n; ++i)
        g.adjacency.insert(g.adjacency.end(), adj[i].begin(), adj[i].end());
    return g;
}

namespace {

std::pair<std::vector<Candidate>, TraversalStats>
run_search(const ProximityGraph& graph, std::span<const float> query,
           std::uint32_t k, std::uint32_t beam,
           std::span<const std::uint32_t> shard_of,
           std::vector<char>* shard_touched) {
    if (k == 0) throw std::invalid_argument("graph_search: k must be >= 1");
    TraversalStats stats;
    std::vector<Visit> pool;
    if (graph.size() != 0) {
        auto neighbors_of = [&graph](std::uint32_t v) {
            return graph.neighbors(v);
        };
        search_core(graph.points, graph.metric, graph.entry, neighbors_of,
                    query, std::max(beam, k), stats, shard_of, shard_touched,
                    pool, nullptr);
    }
    std::vector<Candidate> out;
    out.reserve(std::min<std::size_t>(k, pool.size()));
    for (const Visit& v : pool) {
        if (out.size() == k) break;
        out.push_back(Candidate{v.id, v.d});
    }
    return {std::move(out), stats};
}

} // namespace

std::pair<std::vector<Candidate>, TraversalStats>
graph_search(const ProximityGraph& graph, std::span<const float> query,
             std::uint32_t k, std::uint32_t beam) {
    return run_search(graph, query, k, beam, {}, nullptr);
}

std::pair<std::vector<Candidate>, TraversalStats>
graph_search(const ProximityGraph& graph, std::span<const float> query,
             std::uint32_t k, std::uint32_t beam,
             std::span<const std::uint32_t> shard_of) {
    if (!shard_of.empty() && shard_of.size() != graph.size())
        throw std::invalid_argument("graph_search: shard label count mismatch");
    return run_search(graph, query, k, beam, shard_of, nullptr);
}

ShardProbeSummary shard_and_measure(const ProximityGraph& graph,
                                    std::uint32_t shard_count,
                                    const VectorArray& queries, std::uint32_t k,
                                    std::uint32_t beam, std::uint64_t seed) {
    if (shard_count == 0)
        throw std::invalid_argument("shard_and_measure: shard_count must be >= 1");
    if (queries.size() == 0)
        throw std::invalid_argument("shard_and_measure: no queries");

    KMeansResult km = kmeans(graph.points, graph.metric,
                             std::min<std::uint32_t>(
                                 shard_count,
                                 static_cast<std::uint32_t>(graph.size())),
                             seed);
    ShardProbeSummary out;
    out.shard_count = static_cast<std::uint32_t>(km.centroids.size());

    std::vector<double> cross(queries.size()), touched(queries.size());
    std::vector<char> touch_flags;
    for (std::size_t q = 0; q < queries.size(); ++q) {
        touch_flags.assign(out.shard_count, 0);
        auto [res, stats] = run_search(graph, queries.row(q), k, beam,
                                       km.assignment, &touch_flags);
        (void)res;
        cross[q] = stats.expansions > 1
                       ? static_cast<double>(stats.cross_node_steps) /
                             static_cast<double>(stats.expansions - 1)
                       : 0.0;
        double t = 0;
        for (char f : touch_flags) t += f;
        touched[q] = t;
    }
    double cs = 0, ts = 0;
    for (std::size_t q = 0; q < queries.size(); ++q) {
        cs += cross[q];
        ts += touched[q];
    }
    out.mean_cross_fraction = cs / static_cast<double>(queries.size());
    out.mean_shards_touched = ts / static_cast<double>(queries.size());
    out.p99_cross_fraction = percentile99(cross);
    out.p99_shards_touched = percentile99(touched);
    return out;
}

void save_graph(const ProximityGraph& graph, const std::filesystem::path& path) {
    std::FILE* f = std::fopen(path.string().c_str(), "wb");
    if (!f) throw FormatError(path.string() + ": cannot open for writing");
    const std::size_t n = graph.size();

    std::vector<unsigned char> buf;
    append_u32le(buf, kGraphMagic);
    append_u32le(buf, kGraphVersion);
    append_u32le(buf, graph.points.dim);
    append_u32le(buf, static_cast<std::uint32_t>(graph.metric));
    append_u64le(buf, n);
    append_u32le(buf, graph.max_degree);
    append_u32le(buf, graph.entry);
    for (std::size_t i = 0; i < n; ++i) append_u64le(buf, graph.points.ids[i]);

    auto flush = [&] {
        if (std::fwrite(buf.data(), 1, buf.size(), f) != buf.size()) {
            std::fclose(f);
            throw FormatError(path.string() + ": short write");
        }
        buf.clear();
    };
    flush();

    for (std::size_t i = 0; i < n; ++i) {
        auto row = graph.points.row(i);
        for (float x : row) append_f32le(buf, x);
        if (buf.size() >= (1u << 20)) flush();
    }
    flush();
    for (std::size_t i = 0; i <= n; ++i) {
        append_u64le(buf, graph.offsets[i]);
        if (buf.size() >= (1u << 20)) flush();
    }
    flush();
    for (std::uint32_t v : graph.adjacency) {
        append_u32le(buf, v);
        if (buf.size() >= (1u << 20)) flush();
    }
    flush();
    if (std::fclose(f) != 0) throw FormatError(path.string() + ": close failed");
}

ProximityGraph load_graph(const std::filesystem::path& path) {
    std::FILE* f = std::fopen(path.string().c_str(), "rb");
    if (!f) throw FormatError(path.string() + ": cannot open for reading");
    auto fail = [&](const std::string& what) -> FormatError {
        std::fclose(f);
        return FormatError(path.string() + ": " + what);
    };

    unsigned char hdr[28];
    if (std::fread(hdr, 1, sizeof hdr, f) != sizeof hdr)
        throw fail("truncated header");
    if (load_u32le(hdr) != kGraphMagic) throw fail("bad magic");
    if (load_u32le(hdr + 4) != kGraphVersion) throw fail("unsupported version");

    ProximityGraph g;
    g.points.dim = load_u32le(hdr + 8);
    std::uint32_t metric_raw = load_u32le(hdr + 12);
    if (metric_raw > 2) throw fail("bad metric code");
    g.metric = static_cast<Metric>(metric_raw);
    const std::uint64_t n = load_u64le(hdr + 16);
    g.max_degree = load_u32le(hdr + 24);

    unsigned char entry_raw[4];
    if (std::fread(entry_raw, 1, 4, f) != 4) throw fail("truncated header");
    g.entry = load_u32le(entry_raw);
    if (n > 0 && g.entry >= n) throw fail("entry out of range");

    auto read_block = [&](std::size_t bytes, const char* what) {
        std::vector<unsigned char> block(bytes);
        if (std::fread(block.data(), 1, bytes, f) != bytes)
            throw fail(std::string("truncated ") + what);
        return block;
    };

    {
        auto block = read_block(n * 8, "id table");
        g.points.ids.resize(n);
        for (std::uint64_t i = 0; i < n; ++i)
            g.points.ids[i] = load_u64le(block.data() + i * 8);
    }
    {
        auto block = read_block(n * g.points.dim * 4, "vector data");
        g.points.data.resize(n * g.points.dim);
        for (std::size_t i = 0; i < g.points.data.size(); ++i)
            g.points.data[i] = load_f32le(block.data() + i * 4);
    }
    {
        auto block = read_block((n + 1) * 8, "offset table");
        g.offsets.resize(n + 1);
        for (std::uint64_t i = 0; i <= n; ++i)
            g.offsets[i] = load_u64le(block.data() + i * 8);
        if (g.offsets[0] != 0) throw fail("bad offset table");
        for (std::uint64_t i = 0; i < n; ++i)
            if (g.offsets[i + 1] < g.offsets[i]) throw fail("bad offset table");
    }
    {
        auto block = read_block(g.offsets[n] * 4, "adjacency");
        g.adjacency.resize(g.offsets[n]);
        for (std::uint64_t i = 0; i < g.offsets[n]; ++i) {
            g.adjacency[i] = load_u32le(block.data() + i * 4);
            if (g.adjacency[i] >= n) throw fail("edge target out of range");
        }
    }
    std::fclose(f);
    return g;
}

} // namespace strata
