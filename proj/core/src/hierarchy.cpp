#include "strata/hierarchy.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>
#include <unordered_set>

#include "kv_file.hpp"
#include "strata/distance.hpp"
#include "strata/errors.hpp"
#include "strata/profiler.hpp"
#include "strata/rng.hpp"

namespace strata {

namespace {

// Relative slack on the product-law stop rule, so a level whose ideal count
// sits exactly on the budget does not trigger one extra split through
// floating-point noise.
constexpr double kLawTolerance = 1e-9;

constexpr std::uint64_t kLevelSeedTag = 0x1e00;
constexpr std::uint64_t kRootSeedTag = 0x16a9;
constexpr std::uint64_t kProfileSplitTag = 0xde5a;
constexpr std::uint64_t kProfileSelectTag = 0xde5b;
constexpr std::uint64_t kProfileLevelTag = 0x9f00;

std::uint64_t level_k(double density, std::size_t n) {
    auto k = static_cast<std::uint64_t>(std::llround(density * static_cast<double>(n)));
    return k == 0 ? 1 : k;
}

// Auto density: hold out a query set, sample the remainder, and run the
// balanced-granularity selection against exact ground truth. Runs once per
// level on that level's vectors; a pinned density skips profiling entirely.
double choose_density(const VectorArray& base, Metric metric,
                      const BuildParams& params, std::uint64_t seed) {
    const std::size_t n = base.size();
    if (n < 256) return 0.1; // too small for a stable cost curve
    std::size_t q = std::min(params.profile_queries, n / 4);
    if (q == 0) q = 1;
    const std::size_t s = std::min(params.profile_sample, n - q);

    // Partial Fisher-Yates: the first q + s slots of a virtual permutation.
    Rng rng(mix_seed(seed, kProfileSplitTag));
    std::vector<std::uint32_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = static_cast<std::uint32_t>(i);
    for (std::size_t i = 0; i < q + s; ++i)
        std::swap(order[i], order[i + rng.bounded(n - i)]);

    VectorArray queries;
    queries.dim = base.dim;
    queries.reserve(q);
    for (std::size_t i = 0; i < q; ++i)
        queries.push_back(static_cast<VectorId>(i), base.row(order[i]));

    Dataset sample;
    sample.metric = metric;
    sample.vectors.dim = base.dim;
    sample.vectors.reserve(s);
    for (std::size_t i = 0; i < s; ++i)
        sample.vectors.push_back(static_cast<VectorId>(i), base.row(order[q + i]));

    const GroundTruth truth = brute_force_topk(sample, queries, kProfileRecallK);
    const DensityProfile profile =
        select_balanced_density(sample, queries, truth, params.target_recall,
                                params.cost_ratio, mix_seed(seed, kProfileSelectTag));
    double d = profile.chosen;
    // A near-unit choice cannot reduce the level size; fall back to the
    // same default the profiler uses when the curve is inconclusive.
    if (!(d > 0.0) || d >= 0.95) d = 0.1;
    return d;
}

void append_double(std::string& out, const char* key, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    out += key;
    out += '=';
    out += buf;
    out += '\n';
}

} // namespace

void HierarchicalIndex::rebuild_pid_maps() {
    pid_maps.clear();
    pid_maps.resize(levels.size());
    for (std::size_t li = 0; li < levels.size(); ++li) {
        auto& map = pid_maps[li];
        map.reserve(levels[li].size());
        for (std::uint32_t i = 0; i < levels[li].size(); ++i)
            map.emplace(levels[li][i].pid, i);
    }
}

std::uint64_t planned_clustered_levels(std::uint64_t n, double density,
                                       std::uint64_t budget) {
    if (budget == 0) throw std::invalid_argument("planned levels: budget must be positive");
    if (!(density > 0.0) || density >= 1.0)
        throw std::invalid_argument("planned levels: density must be in (0, 1)");
    const double limit = static_cast<double>(budget) * (1.0 + kLawTolerance);
    double p = static_cast<double>(n);
    std::uint64_t levels = 0;
    while (p > limit) {
        p *= density;
        ++levels;
    }
    return levels;
}

HierarchicalIndex build_levels(const Dataset& data, const BuildParams& params) {
    if (data.vectors.empty()) throw std::invalid_argument("build: empty dataset");
    if (data.dim() == 0) throw std::invalid_argument("build: dimension is zero");
    if (params.budget == 0) throw std::invalid_argument("build: budget must be positive");
    if (params.density < 0.0 || params.density >= 1.0)
        throw std::invalid_argument("build: density must be in (0, 1), or 0 for auto");

    HierarchicalIndex index;
    index.metric = data.metric;
    index.dim = data.dim();
    index.budget = params.budget;
    index.seed = params.seed;

    const bool auto_density = params.density == 0.0;

    VectorArray current = data.vectors;
    const double law_limit = static_cast<double>(params.budget) * (1.0 + kLawTolerance);
    double law_p = static_cast<double>(current.size());

    while (current.size() > params.budget || law_p > law_limit) {
        const std::size_t level = index.levels.size();
        if (current.size() == 1) {
            // One vector already satisfies any budget; the law term can only
            // linger through rounding. Stop rather than split a singleton.
            break;
        }
        // Auto mode re-profiles each level on that level's own vectors; a
        // pinned density applies uniformly, which keeps the level count on
        // the single-density product law.
        const double chosen =
            auto_density
                ? choose_density(current, index.metric, params,
                                 mix_seed(params.seed, kProfileLevelTag + level))
                : params.density;
        const std::uint64_t k = level_k(chosen, current.size());
        if (k >= current.size() && current.size() > 1)
            throw std::invalid_argument(
                "build: density " + std::to_string(chosen) + " does not reduce " +
                std::to_string(current.size()) + " vectors");
        ClusteringResult split = partition_at_density(
            current, index.metric, chosen,
            mix_seed(params.seed, kLevelSeedTag + level));
        split = replicate_boundary(std::move(split), index.metric, params.epsilon,
                                   params.max_copies);
        index.levels.push_back(std::move(split.partitions));
        index.densities.push_back(chosen);
        current = std::move(split.centroids);
        law_p *= chosen;
    }

    GraphBuildParams gp;
    gp.max_degree = params.max_degree;
    gp.build_beam = params.build_beam;
    gp.seed = mix_seed(params.seed, kRootSeedTag);
    index.root = build_graph(current, index.metric, gp);
    index.rebuild_pid_maps();
    return index;
}

std::pair<std::vector<Candidate>, SearchTrace>
search(const HierarchicalIndex& index, std::span<const float> query,
       const SearchParams& params) {
    params.validate();
    if (query.size() != index.dim)
        throw std::invalid_argument("search: query dimension mismatch");

    SearchTrace trace;
    const std::size_t L = index.levels.size();
    trace.levels.resize(L);
    trace.fetch_rounds = L;

    auto [cands, stats] =
        graph_search(index.root, query, params.m, params.effective_root_beam());
    trace.root_distance_computations = stats.distance_computations;
    trace.total_vectors_scanned = stats.distance_computations;

    if (L == 0) {
        if (cands.size() > params.k) cands.resize(params.k);
        return {std::move(cands), std::move(trace)};
    }

    std::vector<VectorId> pids;
    pids.reserve(cands.size());
    for (const Candidate& c : cands) pids.push_back(c.id);

    std::vector<Candidate> pool;
    for (std::size_t li = L; li-- > 0;) {
        const auto& parts = index.levels[li];
        const auto& map = index.pid_maps[li];
        LevelTrace& lt = trace.levels[li];
        lt.pids = pids;

        std::vector<const Partition*> fetched;
        fetched.reserve(pids.size());
        for (VectorId pid : pids) {
            auto it = map.find(pid);
            if (it == map.end())
                throw CorruptIndexError("search: level " + std::to_string(li) +
                                            " has no partition " + std::to_string(pid),
                                        pid);
            fetched.push_back(&parts[it->second]);
        }

        pool.clear();
        std::uint64_t scanned = 0;
        for (const Partition* part : fetched) {
            const std::size_t count = part->size();
            for (std::size_t i = 0; i < count; ++i)
                pool.push_back({part->member_ids[i],
                                distance(part->member(i, index.dim), query,
                                         index.metric)});
            scanned += count;
        }

        // Replicated copies show up once: keep the best distance per id.
        std::sort(pool.begin(), pool.end(), [](const Candidate& a, const Candidate& b) {
            if (a.id != b.id) return a.id < b.id;
            return a.distance < b.distance;
        });
        pool.erase(std::unique(pool.begin(), pool.end(),
                               [](const Candidate& a, const Candidate& b) {
                                   return a.id == b.id;
                               }),
                   pool.end());
        std::sort(pool.begin(), pool.end(), candidate_less);
        const std::uint32_t keep = (li == 0) ? params.k : params.m;
        if (pool.size() > keep) pool.resize(keep);

        lt.vectors_scanned = scanned;
        lt.wire_bytes = 8 * lt.pids.size() + 4ull * index.dim +
                        kCandidateWireBytes * pool.size();
        trace.total_vectors_scanned += scanned;

        pids.clear();
        for (const Candidate& c : pool) pids.push_back(c.id);
    }
    return {std::move(pool), std::move(trace)};
}

std::vector<EvalRow> evaluate(const HierarchicalIndex& index,
                              const VectorArray& queries,
                              const GroundTruth& truth,
                              const std::vector<std::uint32_t>& m_values,
                              std::uint32_t k) {
    if (k == 0) throw std::invalid_argument("evaluate: k must be positive");
    if (truth.k < k) throw std::invalid_argument("evaluate: ground truth depth below k");
    if (truth.rows.size() != queries.size())
        throw std::invalid_argument("evaluate: ground truth row count mismatch");
    for (std::uint32_t m : m_values)
        if (m < k) throw std::invalid_argument("evaluate: every m must be >= k");

    const std::size_t L = index.levels.size();
    const std::size_t nq = queries.size();

    // Admissible pid chains: chains[li][id] lists the level-li partitions
    // whose subtree holds base vector id. A query covers id at level li iff
    // it fetched one of them. Built only for ids the ground truth needs.
    std::vector<std::unordered_map<VectorId, std::vector<VectorId>>> chains(L);
    if (L > 0) {
        std::unordered_set<VectorId> wanted;
        for (const auto& row : truth.rows)
            for (std::size_t i = 0; i < k && i < row.size(); ++i)
                wanted.insert(row[i].id);

        for (const Partition& part : index.levels[0])
            for (VectorId id : part.member_ids)
                if (wanted.contains(id)) chains[0][id].push_back(part.pid);

        for (std::size_t li = 1; li < L; ++li) {
            std::unordered_map<VectorId, std::vector<VectorId>> parents;
            for (const Partition& part : index.levels[li])
                for (VectorId child : part.member_ids)
                    parents[child].push_back(part.pid);
            for (const auto& [id, below] : chains[li - 1]) {
                auto& up = chains[li][id];
                for (VectorId pid : below) {
                    auto it = parents.find(pid);
                    if (it == parents.end()) continue;
                    up.insert(up.end(), it->second.begin(), it->second.end());
                }
                std::sort(up.begin(), up.end());
                up.erase(std::unique(up.begin(), up.end()), up.end());
            }
        }
        for (auto& [id, pids] : chains[0]) {
            std::sort(pids.begin(), pids.end());
            pids.erase(std::unique(pids.begin(), pids.end()), pids.end());
        }
    }

    std::vector<EvalRow> rows;
    rows.reserve(m_values.size());
    for (std::uint32_t m : m_values) {
        std::vector<double> recalls(nq, 0.0);
        std::vector<std::uint64_t> scanned(nq, 0);
        std::vector<std::uint8_t> covered(nq * (L ? L : 1), 0);

        SearchParams sp;
        sp.m = m;
        sp.k = k;

#pragma omp parallel for schedule(dynamic, 8)
        for (std::int64_t q = 0; q < static_cast<std::int64_t>(nq); ++q) {
            auto [result, trace] = search(index, queries.row(q), sp);
            recalls[q] = recall_at_k(result, truth.rows[q], k);
            scanned[q] = trace.total_vectors_scanned;
            for (std::size_t li = 0; li < L; ++li) {
                std::vector<VectorId> fetched = trace.levels[li].pids;
                std::sort(fetched.begin(), fetched.end());
                bool all = true;
                const auto& row = truth.rows[q];
                for (std::size_t i = 0; all && i < k && i < row.size(); ++i) {
                    auto it = chains[li].find(row[i].id);
                    if (it == chains[li].end()) {
                        all = false;
                        break;
                    }
                    bool hit = false;
                    for (VectorId pid : it->second)
                        if (std::binary_search(fetched.begin(), fetched.end(), pid)) {
                            hit = true;
                            break;
                        }
                    all = hit;
                }
                covered[q * L + li] = all ? 1 : 0;
            }
        }

        EvalRow row;
        row.m = m;
        row.fetch_rounds = L;
        double rsum = 0.0;
        double ssum = 0.0;
        for (std::size_t q = 0; q < nq; ++q) {
            rsum += recalls[q];
            ssum += static_cast<double>(scanned[q]);
        }
        row.recall = nq ? rsum / static_cast<double>(nq) : 0.0;
        row.mean_vectors_scanned = nq ? ssum / static_cast<double>(nq) : 0.0;
        row.per_level_recall.resize(L, 0.0);
        for (std::size_t li = 0; li < L; ++li) {
            std::uint64_t hits = 0;
            for (std::size_t q = 0; q < nq; ++q) hits += covered[q * L + li];
            row.per_level_recall[li] =
                nq ? static_cast<double>(hits) / static_cast<double>(nq) : 0.0;
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

void save_index(const HierarchicalIndex& index, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    std::string meta;
    meta += "dim=" + std::to_string(index.dim) + '\n';
    meta += "metric=" + std::string(metric_name(index.metric)) + '\n';
    meta += "budget=" + std::to_string(index.budget) + '\n';
    meta += "seed=" + std::to_string(index.seed) + '\n';
    meta += "clustered_levels=" + std::to_string(index.levels.size()) + '\n';
    for (std::size_t li = 0; li < index.densities.size(); ++li)
        append_double(meta, ("density" + std::to_string(li)).c_str(),
                      index.densities[li]);
    {
        std::ofstream out(dir / "index.meta", std::ios::binary | std::ios::trunc);
        if (!out) throw FormatError("cannot write " + (dir / "index.meta").string());
        out.write(meta.data(), static_cast<std::streamsize>(meta.size()));
        if (!out) throw FormatError("short write to " + (dir / "index.meta").string());
    }
    save_graph(index.root, dir / "root.graph");
    for (std::size_t li = 0; li < index.levels.size(); ++li)
        write_partitions(index.levels[li], index.dim,
                         dir / ("level" + std::to_string(li) + ".part"));
}

HierarchicalIndex load_index(const std::filesystem::path& dir) {
    using detail::parse_f64;
    using detail::parse_u64;
    using detail::require_key;
    const auto meta_path = dir / "index.meta";
    const auto kv = detail::parse_kv_file(meta_path);

    HierarchicalIndex index;
    index.dim = static_cast<std::uint32_t>(parse_u64(kv, "dim", meta_path));
    index.metric = parse_metric(require_key(kv, "metric", meta_path));
    index.budget = parse_u64(kv, "budget", meta_path);
    index.seed = parse_u64(kv, "seed", meta_path);
    const std::size_t L = parse_u64(kv, "clustered_levels", meta_path);
    for (std::size_t li = 0; li < L; ++li)
        index.densities.push_back(
            parse_f64(kv, "density" + std::to_string(li), meta_path));

    index.root = load_graph(dir / "root.graph");
    for (std::size_t li = 0; li < L; ++li)
        index.levels.push_back(read_partitions(
            dir / ("level" + std::to_string(li) + ".part"), index.dim));

    if (L > 0 && index.root.size() != index.levels[L - 1].size())
        throw FormatError(dir.string() + ": root graph spans " +
                          std::to_string(index.root.size()) +
                          " nodes but the top level has " +
                          std::to_string(index.levels[L - 1].size()) + " partitions");
    index.rebuild_pid_maps();
    return index;
}

} // namespace strata
