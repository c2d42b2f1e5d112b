#include <unistd.h>

#include <algorithm>
#include <csignal>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "CLI11.hpp"
#include "strata/cluster_model.hpp"
#include "strata/dataset.hpp"
#include "strata/distance.hpp"
#include "strata/engine.hpp"
#include "strata/errors.hpp"
#include "strata/graph.hpp"
#include "strata/hierarchy.hpp"
#include "strata/profiler.hpp"
#include "strata/rng.hpp"
#include "strata/store.hpp"
#include "strata/wire.hpp"

namespace fs = std::filesystem;
using namespace strata;

namespace {

volatile std::sig_atomic_t g_stop = 0;

void handle_stop(int) { g_stop = 1; }

// %.17g round-trips doubles exactly, which is what keeps reports
// byte-identical across reruns of the same seed.
std::string num(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

VecFormat detect_format(const fs::path& p) {
    const auto f = sniff_format(p);
    if (!f)
        throw std::invalid_argument("cannot infer format of " + p.string() +
                                    " (expect .fvecs/.bvecs/.ivecs)");
    return *f;
}

VectorArray load_query_file(const fs::path& p, std::uint32_t dim) {
    VectorArray q = load_vectors(p, detect_format(p));
    if (q.empty()) throw std::invalid_argument(p.string() + ": no queries");
    if (q.dim != dim)
        throw std::invalid_argument(p.string() + ": queries are " +
                                    std::to_string(q.dim) + "-dimensional, data is " +
                                    std::to_string(dim));
    return q;
}

void write_text(const fs::path& p, const std::string& text) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::FILE* f = std::fopen(p.c_str(), "wb");
    if (!f) throw FormatError("cannot write " + p.string());
    const bool ok = std::fwrite(text.data(), 1, text.size(), f) == text.size();
    std::fclose(f);
    if (!ok) throw FormatError("short write to " + p.string());
}

GroundTruth load_truth_prefix(const fs::path& prefix) {
    return load_ground_truth(prefix.string() + ".ivecs", prefix.string() + ".fvecs");
}

// Query hold-out for profiling: the first q + s slots of a seeded virtual
// permutation give disjoint query and sample sets.
struct Holdout {
    VectorArray queries;
    Dataset sample;
};

Holdout split_holdout(const Dataset& data, std::size_t sample_size,
                      std::size_t query_count, std::uint64_t seed) {
    const std::size_t n = data.size();
    if (n < 16) throw std::invalid_argument("profile: need at least 16 vectors");
    std::size_t q = std::min(query_count, n / 4);
    if (q == 0) q = 1;
    const std::size_t s = std::min(sample_size, n - q);

    Rng rng(mix_seed(seed, 0x51a7));
    std::vector<std::uint32_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = static_cast<std::uint32_t>(i);
    for (std::size_t i = 0; i < q + s; ++i)
        std::swap(order[i], order[i + rng.bounded(n - i)]);

    Holdout h;
    h.queries.dim = data.dim();
    h.queries.reserve(q);
    for (std::size_t i = 0; i < q; ++i)
        h.queries.push_back(static_cast<VectorId>(i), data.vectors.row(order[i]));
    h.sample.metric = data.metric;
    h.sample.vectors.dim = data.dim();
    h.sample.vectors.reserve(s);
    for (std::size_t i = 0; i < s; ++i)
        h.sample.vectors.push_back(static_cast<VectorId>(i),
                                   data.vectors.row(order[q + i]));
    return h;
}

// Smallest beam whose mean recall@k over the workload reaches the target.
// Doubles until feasible, then bisects; the final beam is re-verified.
struct BeamPick {
    std::uint32_t beam = 0;
    double recall = 0.0;
};

BeamPick find_beam_for_recall(const ProximityGraph& graph,
                              const VectorArray& queries,
                              const GroundTruth& truth, std::uint32_t k,
                              double target) {
    auto mean_recall = [&](std::uint32_t beam) {
        double sum = 0.0;
        for (std::size_t qi = 0; qi < queries.size(); ++qi) {
            auto [res, stats] = graph_search(graph, queries.row(qi), k, beam);
            sum += recall_at_k(res, truth.rows[qi], k);
        }
        return sum / static_cast<double>(queries.size());
    };

    const auto cap = static_cast<std::uint32_t>(graph.size());
    std::uint32_t hi = std::max(k, 16u);
    double hi_recall = mean_recall(hi);
    while (hi_recall < target && hi < cap) {
        hi = std::min(hi * 2, cap);
        hi_recall = mean_recall(hi);
    }
    if (hi_recall < target)
        throw UnreachableTargetError("graph cannot reach recall " + num(target) +
                                         " at any beam",
                                     hi_recall);
    std::uint32_t lo = std::max(k, hi / 2);
    while (lo + 1 < hi) {
        const std::uint32_t mid = lo + (hi - lo) / 2;
        if (mean_recall(mid) >= target)
            hi = mid;
        else
            lo = mid;
    }
    return {hi, mean_recall(hi)};
}

std::string metric_str(Metric m) { return std::string(metric_name(m)); }

// ---------------------------------------------------------------- gen

struct GenOpts {
    std::string out;
    std::uint64_t n = 10000;
    std::uint32_t dim = 32;
    std::uint32_t clusters = 64;
    double spread = 0.08;
    std::uint64_t seed = 1;
    std::string metric = "l2";
};

int cmd_gen(const GenOpts& o) {
    const Dataset data = generate_synthetic(o.n, o.dim, o.clusters, o.spread,
                                            o.seed, parse_metric(o.metric));
    const fs::path out(o.out);
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    write_vectors(data.vectors, out, VecFormat::Fvecs);

    DatasetManifest m;
    m.path = out.filename();
    m.format = VecFormat::Fvecs;
    m.metric = data.metric;
    m.dim = data.dim();
    const fs::path manifest = out.string() + ".manifest";
    write_manifest(m, manifest);

    std::printf("wrote %zu vectors (dim %u, metric %s) to %s\n", data.size(),
                data.dim(), metric_str(data.metric).c_str(), out.c_str());
    std::printf("manifest: %s\n", manifest.c_str());
    return 0;
}

// ---------------------------------------------------------- groundtruth

struct TruthOpts {
    std::string dataset;
    std::string queries;
    std::uint32_t k = 100;
    std::string out;
};

int cmd_groundtruth(const TruthOpts& o) {
    const Dataset data = load_dataset(o.dataset);
    const VectorArray queries = load_query_file(o.queries, data.dim());
    const GroundTruth gt = brute_force_topk(data, queries, o.k);
    write_ground_truth(gt, o.out + ".ivecs", o.out + ".fvecs");
    std::printf("wrote top-%u of %zu queries over %zu vectors to %s.{ivecs,fvecs}\n",
                gt.k, queries.size(), data.size(), o.out.c_str());
    return 0;
}

// -------------------------------------------------------------- profile

struct ProfileOpts {
    std::string dataset;
    std::size_t sample = 100000;
    std::size_t queries = 64;
    double target_recall = 0.9;
    double cost_ratio = 2.0;
    std::uint64_t seed = 1;
    std::string out;
};

int cmd_profile(const ProfileOpts& o) {
    const Dataset data = load_dataset(o.dataset);
    const Holdout h = split_holdout(data, o.sample, o.queries, o.seed);
    const GroundTruth truth = brute_force_topk(h.sample, h.queries, kProfileRecallK);
    const DensityProfile profile =
        select_balanced_density(h.sample, h.queries, truth, o.target_recall,
                                o.cost_ratio, mix_seed(o.seed, 0x51a8));
    write_profile_csv(profile, o.out);
    std::printf("profiled %zu vectors, %zu queries: chosen density %s "
                "(baseline cost %s)\n",
                h.sample.size(), h.queries.size(), num(profile.chosen).c_str(),
                num(profile.baseline_cost).c_str());
    return 0;
}

// ---------------------------------------------------------------- build

struct BuildOpts {
    std::string dataset;
    std::string out;
    BuildParams params;
};

int cmd_build(const BuildOpts& o) {
    const Dataset data = load_dataset(o.dataset);
    const HierarchicalIndex index = build_levels(data, o.params);
    save_index(index, o.out);

    for (std::size_t li = 0; li < index.levels.size(); ++li)
        std::printf("level %zu: %zu partitions (density %s)\n", li,
                    index.levels[li].size(), num(index.densities[li]).c_str());
    std::printf("root: %zu vectors, %zu clustered levels\n", index.root.size(),
                index.clustered_levels());
    std::printf("saved to %s\n", o.out.c_str());
    return 0;
}

// --------------------------------------------------------------- search

struct SearchOpts {
    std::string index;
    std::string queries;
    std::uint32_t m = 256;
    std::uint32_t k = 10;
    std::uint32_t root_beam = 0;
    std::string out;
};

std::string results_csv(const std::vector<std::vector<Candidate>>& rows) {
    std::string csv = "# schema: strata.search.v1\nquery,rank,id,distance\n";
    for (std::size_t qi = 0; qi < rows.size(); ++qi)
        for (std::size_t r = 0; r < rows[qi].size(); ++r)
            csv += std::to_string(qi) + "," + std::to_string(r) + "," +
                   std::to_string(rows[qi][r].id) + "," +
                   num(rows[qi][r].distance) + "\n";
    return csv;
}

int cmd_search(const SearchOpts& o) {
    const HierarchicalIndex index = load_index(o.index);
    const VectorArray queries = load_query_file(o.queries, index.dim);
    SearchParams params;
    params.m = o.m;
    params.k = o.k;
    params.root_beam = o.root_beam;
    params.validate();

    std::vector<std::vector<Candidate>> rows(queries.size());
    double scanned = 0.0;
    std::uint64_t rounds = 0;
    for (std::size_t qi = 0; qi < queries.size(); ++qi) {
        auto [res, trace] = search(index, queries.row(qi), params);
        scanned += static_cast<double>(trace.total_vectors_scanned);
        rounds = trace.fetch_rounds;
        rows[qi] = std::move(res);
    }
    write_text(o.out, results_csv(rows));
    std::printf("searched %zu queries: fetch_rounds=%llu mean_scanned=%s\n",
                queries.size(), static_cast<unsigned long long>(rounds),
                num(scanned / static_cast<double>(queries.size())).c_str());
    std::printf("results: %s\n", o.out.c_str());
    return 0;
}

// ----------------------------------------------------------------- eval

struct EvalOpts {
    std::string index;
    std::string queries;
    std::string truth;
    std::vector<std::uint32_t> m_values = {64, 128, 256};
    std::uint32_t k = 10;
    std::string model;
    std::uint32_t nodes = 0; // 0: keep the model file's node count
    std::string out;
};

int cmd_eval(const EvalOpts& o) {
    const HierarchicalIndex index = load_index(o.index);
    const VectorArray queries = load_query_file(o.queries, index.dim);
    const GroundTruth truth = load_truth_prefix(o.truth);

    ClusterModel model;
    if (!o.model.empty()) model = load_cluster_model(o.model);
    if (o.nodes > 0) model.node_count = o.nodes;
    model.validate();
    const Placement placement = place(index, model.node_count);

    const auto rows = evaluate(index, queries, truth, o.m_values, o.k);

    std::string csv =
        "# schema: strata.eval.v1\n"
        "m,recall,mean_vectors_scanned,fetch_rounds,mean_latency_us,"
        "estimated_qps,binding,per_level_recall\n";
    for (const EvalRow& row : rows) {
        SearchParams params;
        params.m = row.m;
        params.k = o.k;
        const auto reports =
            simulate_workload(index, placement, model, queries, params);
        double latency = 0.0;
        for (const auto& r : reports) latency += r.total_us;
        latency /= static_cast<double>(reports.size());
        const ThroughputEstimate est =
            estimate_throughput(index, placement, model, queries, params);

        std::string levels;
        for (std::size_t li = 0; li < row.per_level_recall.size(); ++li) {
            if (li) levels += ';';
            levels += num(row.per_level_recall[li]);
        }
        csv += std::to_string(row.m) + "," + num(row.recall) + "," +
               num(row.mean_vectors_scanned) + "," +
               std::to_string(row.fetch_rounds) + "," + num(latency) + "," +
               num(est.qps) + "," + std::string(resource_name(est.binding)) +
               "," + levels + "\n";
        std::printf("m=%u recall@%u=%s scanned=%s rounds=%llu\n", row.m, o.k,
                    num(row.recall).c_str(), num(row.mean_vectors_scanned).c_str(),
                    static_cast<unsigned long long>(row.fetch_rounds));
    }
    write_text(o.out, csv);
    std::printf("report: %s\n", o.out.c_str());
    return 0;
}

// ------------------------------------------------------------- simulate

struct SimulateOpts {
    std::string index;
    std::string queries;
    std::string model;
    std::vector<std::uint32_t> nodes = {1, 5, 10};
    std::uint32_t m = 256;
    std::uint32_t k = 10;
    double beta = 0.0; // 0: use the beta measured from the replay
    std::string out;
};

int cmd_simulate(const SimulateOpts& o) {
    const HierarchicalIndex index = load_index(o.index);
    const VectorArray queries = load_query_file(o.queries, index.dim);
    ClusterModel base;
    if (!o.model.empty()) base = load_cluster_model(o.model);
    SearchParams params;
    params.m = o.m;
    params.k = o.k;
    params.validate();

    std::string csv =
        "# schema: strata.simulate.v1\n"
        "nodes,analytic_qps,des_qps,binding,beta_used,beta_measured,"
        "mean_latency_us,util_disk_iops,util_disk_bandwidth,util_net_bandwidth,"
        "util_cpu\n";
    for (std::uint32_t n : o.nodes) {
        ClusterModel model = base;
        model.node_count = n;
        model.validate();
        const Placement placement = place(index, n);
        const auto reports =
            simulate_workload(index, placement, model, queries, params);
        const double beta_measured = measure_beta(reports);
        model.beta = o.beta > 0.0 ? o.beta : beta_measured;

        double latency = 0.0;
        for (const auto& r : reports) latency += r.total_us;
        latency /= static_cast<double>(reports.size());

        const ThroughputEstimate est =
            estimate_throughput(index, placement, model, queries, params);
        const SimulatedThroughput des =
            simulate_closed_loop(index, placement, model, queries, params);

        csv += std::to_string(n) + "," + num(est.qps) + "," + num(des.qps) + "," +
               std::string(resource_name(est.binding)) + "," + num(model.beta) +
               "," + num(beta_measured) + "," + num(latency);
        for (std::size_t r = 0; r < kResourceCount; ++r)
            csv += "," + num(est.utilization[r]);
        csv += "\n";
        std::printf("nodes=%u analytic_qps=%s des_qps=%s binding=%s beta=%s\n", n,
                    num(est.qps).c_str(), num(des.qps).c_str(),
                    std::string(resource_name(est.binding)).c_str(),
                    num(model.beta).c_str());
    }
    write_text(o.out, csv);
    std::printf("report: %s\n", o.out.c_str());
    return 0;
}

// ----------------------------------------------------------- shardprobe

struct ShardProbeOpts {
    std::string dataset;
    std::string queries;
    std::string truth; // optional; brute force when empty
    std::uint32_t shards = 5;
    std::uint32_t k = 5;
    double target_recall = 0.9;
    std::uint32_t max_degree = 32;
    std::uint32_t build_beam = 128;
    std::uint64_t seed = 1;
    std::string out;
};

int cmd_shardprobe(const ShardProbeOpts& o) {
    const Dataset data = load_dataset(o.dataset);
    const VectorArray queries = load_query_file(o.queries, data.dim());
    const GroundTruth truth = o.truth.empty()
                                  ? brute_force_topk(data, queries, o.k)
                                  : load_truth_prefix(o.truth);
    if (truth.rows.size() != queries.size())
        throw std::invalid_argument("shardprobe: ground truth rows do not match queries");

    GraphBuildParams gp;
    gp.max_degree = o.max_degree;
    gp.build_beam = o.build_beam;
    gp.seed = o.seed;
    const ProximityGraph graph = build_graph(data.vectors, data.metric, gp);

    const BeamPick pick =
        find_beam_for_recall(graph, queries, truth, o.k, o.target_recall);
    const ShardProbeSummary sum =
        shard_and_measure(graph, o.shards, queries, o.k, pick.beam, o.seed);

    std::string csv =
        "# schema: strata.shardprobe.v1\n"
        "shards,beam,recall,mean_cross_fraction,p99_cross_fraction,"
        "mean_shards_touched,p99_shards_touched\n";
    csv += std::to_string(sum.shard_count) + "," + std::to_string(pick.beam) +
           "," + num(pick.recall) + "," + num(sum.mean_cross_fraction) + "," +
           num(sum.p99_cross_fraction) + "," + num(sum.mean_shards_touched) +
           "," + num(sum.p99_shards_touched) + "\n";
    write_text(o.out, csv);
    std::printf("shards=%u beam=%u recall@%u=%s cross_fraction=%s\n",
                sum.shard_count, pick.beam, o.k, num(pick.recall).c_str(),
                num(sum.mean_cross_fraction).c_str());
    std::printf("report: %s\n", o.out.c_str());
    return 0;
}

// ---------------------------------------------------------- serve-store

struct ServeStoreOpts {
    std::string index;
    std::uint32_t nodes = 1;
    std::uint32_t node = 0;
    std::string listen = "127.0.0.1:0";
    std::string shard_dir;
};

int cmd_serve_store(const ServeStoreOpts& o) {
    if (o.node >= o.nodes)
        throw std::invalid_argument("serve-store: node must be < nodes");
    const HierarchicalIndex index = load_index(o.index);
    const fs::path shard_dir =
        o.shard_dir.empty() ? fs::path(o.index) / "shards" : fs::path(o.shard_dir);
    fs::create_directories(shard_dir);

    StoreConfig config;
    config.dim = index.dim;
    config.metric = index.metric;
    for (std::size_t li = 0; li < index.levels.size(); ++li) {
        const auto shuffled = shuffle_partitions(index.levels[li], o.nodes);
        const auto& mine = shuffled.by_node[o.node];
        const fs::path path =
            shard_dir / ("node" + std::to_string(o.node) + "_of_" +
                         std::to_string(o.nodes) + "_level" + std::to_string(li) +
                         ".part");
        write_partitions(mine, index.dim, path);
        config.level_files[static_cast<std::uint32_t>(li)] = path;
        std::printf("level %zu: %zu partitions owned\n", li, mine.size());
    }

    StoreServer server(config, parse_address(o.listen));
    std::printf("listening on %s\n", server.address().str().c_str());
    std::fflush(stdout);

    std::signal(SIGINT, handle_stop);
    std::signal(SIGTERM, handle_stop);
    while (!g_stop) ::usleep(100 * 1000);
    server.stop();

    const StoreStats stats = server.stats();
    std::printf("requests=%llu\npartitions_read=%llu\nbytes_out=%llu\n",
                static_cast<unsigned long long>(stats.requests),
                static_cast<unsigned long long>(stats.partitions_read),
                static_cast<unsigned long long>(stats.bytes_out));
    return 0;
}

// --------------------------------------------------------- serve-engine

struct ServeEngineOpts {
    std::string index;
    std::string stores;
    std::string queries;
    std::uint32_t m = 256;
    std::uint32_t k = 10;
    std::uint32_t timeout_ms = 5000;
    std::string out;
};

int cmd_serve_engine(const ServeEngineOpts& o) {
    const EngineIndex index = load_engine_index(o.index);
    std::vector<SocketAddress> addresses;
    std::string rest = o.stores;
    while (!rest.empty()) {
        const auto comma = rest.find(',');
        addresses.push_back(parse_address(rest.substr(0, comma)));
        rest = comma == std::string::npos ? "" : rest.substr(comma + 1);
    }
    EngineOptions eo;
    eo.timeout_ms = o.timeout_ms;
    QueryEngine engine(index, addresses, eo);

    const VectorArray queries = load_query_file(o.queries, index.dim);
    SearchParams params;
    params.m = o.m;
    params.k = o.k;
    params.validate();

    std::vector<std::vector<Candidate>> rows(queries.size());
    std::uint64_t request_bytes = 0, response_bytes = 0, rounds = 0;
    for (std::size_t qi = 0; qi < queries.size(); ++qi) {
        auto [res, trace] = engine.search(queries.row(qi), params);
        for (const auto& lt : trace.levels) {
            request_bytes += lt.request_bytes;
            response_bytes += lt.response_bytes;
        }
        rounds = trace.fetch_rounds;
        rows[qi] = std::move(res);
    }
    write_text(o.out, results_csv(rows));
    std::printf("searched %zu queries over %zu stores: fetch_rounds=%llu "
                "request_bytes=%llu response_bytes=%llu\n",
                queries.size(), engine.store_count(),
                static_cast<unsigned long long>(rounds),
                static_cast<unsigned long long>(request_bytes),
                static_cast<unsigned long long>(response_bytes));
    std::printf("results: %s\n", o.out.c_str());
    return 0;
}

} // namespace

int main(int argc, char** argv) {
#ifdef _OPENMP
    if (const char* threads = std::getenv("STRATA_THREADS")) {
        const int n = std::atoi(threads);
        if (n > 0) omp_set_num_threads(n);
    }
#endif

    CLI::App app{"strata: hierarchical partitioned vector search"};
    app.require_subcommand(1);
    app.set_config("--config", "",
                   "key=value file with one [subcommand] section per command; "
                   "command-line flags take precedence");
    int rc = 0;

    GenOpts gen;
    auto* cmd_g = app.add_subcommand("gen", "generate a synthetic dataset");
    cmd_g->add_option("--out", gen.out, "output fvecs path")->required();
    cmd_g->add_option("--n", gen.n, "vector count")->capture_default_str();
    cmd_g->add_option("--dim", gen.dim, "dimension")->capture_default_str();
    cmd_g->add_option("--clusters", gen.clusters, "mixture components")
        ->capture_default_str();
    cmd_g->add_option("--spread", gen.spread, "per-coordinate noise sigma")
        ->capture_default_str();
    cmd_g->add_option("--seed", gen.seed, "rng seed")->capture_default_str();
    cmd_g->add_option("--metric", gen.metric, "l2|cosine|ip")->capture_default_str();
    cmd_g->fallthrough();
    cmd_g->callback([&] { rc = cmd_gen(gen); });

    TruthOpts truth;
    auto* cmd_t = app.add_subcommand("groundtruth", "exact top-k oracle files");
    cmd_t->add_option("--dataset", truth.dataset, "dataset manifest")
        ->required()
        ->check(CLI::ExistingFile);
    cmd_t->add_option("--queries", truth.queries, "query vector file")
        ->required()
        ->check(CLI::ExistingFile);
    cmd_t->add_option("--k", truth.k, "neighbors per query")->capture_default_str();
    cmd_t->add_option("--out", truth.out, "output prefix (.ivecs/.fvecs)")
        ->required();
    cmd_t->fallthrough();
    cmd_t->callback([&] { rc = cmd_groundtruth(truth); });

    ProfileOpts prof;
    auto* cmd_p = app.add_subcommand("profile", "density cost curve and selection");
    cmd_p->add_option("--dataset", prof.dataset, "dataset manifest")
        ->required()
        ->check(CLI::ExistingFile);
    cmd_p->add_option("--sample", prof.sample, "profiling sample size")
        ->capture_default_str();
    cmd_p->add_option("--queries", prof.queries, "held-out query count")
        ->capture_default_str();
    cmd_p->add_option("--target-recall", prof.target_recall, "recall@5 target")
        ->capture_default_str();
    cmd_p->add_option("--cost-ratio", prof.cost_ratio,
                      "cost tolerance over the graph baseline")
        ->capture_default_str();
    cmd_p->add_option("--seed", prof.seed, "rng seed")->capture_default_str();
    cmd_p->add_option("--out", prof.out, "profile csv path")->required();
    cmd_p->fallthrough();
    cmd_p->callback([&] { rc = cmd_profile(prof); });

    BuildOpts build;
    auto* cmd_b = app.add_subcommand("build", "build and persist a multi-level index");
    cmd_b->add_option("--dataset", build.dataset, "dataset manifest")
        ->required()
        ->check(CLI::ExistingFile);
    cmd_b->add_option("--out", build.out, "index directory")->required();
    cmd_b->add_option("--budget", build.params.budget, "max root vector count")
        ->capture_default_str();
    cmd_b->add_option("--density", build.params.density,
                      "partition density; 0 profiles each level")
        ->capture_default_str();
    cmd_b->add_option("--seed", build.params.seed, "rng seed")->capture_default_str();
    cmd_b->add_option("--max-degree", build.params.max_degree, "root graph degree")
        ->capture_default_str();
    cmd_b->add_option("--build-beam", build.params.build_beam, "graph build beam")
        ->capture_default_str();
    cmd_b->add_option("--epsilon", build.params.epsilon,
                      "boundary replication width")
        ->capture_default_str();
    cmd_b->add_option("--max-copies", build.params.max_copies,
                      "copies per vector, home included")
        ->capture_default_str();
    cmd_b->add_option("--profile-sample", build.params.profile_sample,
                      "auto-density sample size")
        ->capture_default_str();
    cmd_b->add_option("--profile-queries", build.params.profile_queries,
                      "auto-density query count")
        ->capture_default_str();
    cmd_b->add_option("--target-recall", build.params.target_recall,
                      "auto-density recall target")
        ->capture_default_str();
    cmd_b->add_option("--cost-ratio", build.params.cost_ratio,
                      "auto-density cost tolerance")
        ->capture_default_str();
    cmd_b->fallthrough();
    cmd_b->callback([&] { rc = cmd_build(build); });

    SearchOpts search;
    auto* cmd_s = app.add_subcommand("search", "run queries against an index");
    cmd_s->add_option("--index", search.index, "index directory")
        ->required()
        ->check(CLI::ExistingDirectory);
    cmd_s->add_option("--queries", search.queries, "query vector file")
        ->required()
        ->check(CLI::ExistingFile);
    cmd_s->add_option("--m", search.m, "partitions fetched per level")
        ->capture_default_str();
    cmd_s->add_option("--k", search.k, "results per query")->capture_default_str();
    cmd_s->add_option("--root-beam", search.root_beam, "root beam (0: max(m, 64))")
        ->capture_default_str();
    cmd_s->add_option("--out", search.out, "results csv path")->required();
    cmd_s->fallthrough();
    cmd_s->callback([&] { rc = cmd_search(search); });

    EvalOpts eval;
    auto* cmd_e = app.add_subcommand("eval", "sweep m against the oracle");
    cmd_e->add_option("--index", eval.index, "index directory")
        ->required()
        ->check(CLI::ExistingDirectory);
    cmd_e->add_option("--queries", eval.queries, "query vector file")
        ->required()
        ->check(CLI::ExistingFile);
    cmd_e->add_option("--truth", eval.truth, "ground truth prefix")->required();
    cmd_e->add_option("--m", eval.m_values, "m values to sweep")
        ->delimiter(',')
        ->capture_default_str();
    cmd_e->add_option("--k", eval.k, "recall depth")->capture_default_str();
    cmd_e->add_option("--model", eval.model, "cluster model file")
        ->check(CLI::ExistingFile);
    cmd_e->add_option("--nodes", eval.nodes, "override model node count");
    cmd_e->add_option("--out", eval.out, "eval csv path")->required();
    cmd_e->fallthrough();
    cmd_e->callback([&] { rc = cmd_eval(eval); });

    SimulateOpts sim;
    auto* cmd_m = app.add_subcommand("simulate", "cost model across node counts");
    cmd_m->add_option("--index", sim.index, "index directory")
        ->required()
        ->check(CLI::ExistingDirectory);
    cmd_m->add_option("--queries", sim.queries, "query vector file")
        ->required()
        ->check(CLI::ExistingFile);
    cmd_m->add_option("--model", sim.model, "cluster model file")
        ->check(CLI::ExistingFile);
    cmd_m->add_option("--nodes", sim.nodes, "node counts to sweep")
        ->delimiter(',')
        ->capture_default_str();
    cmd_m->add_option("--m", sim.m, "partitions fetched per level")
        ->capture_default_str();
    cmd_m->add_option("--k", sim.k, "results per query")->capture_default_str();
    cmd_m->add_option("--beta", sim.beta, "pin the load-imbalance factor (0: measure)")
        ->capture_default_str();
    cmd_m->add_option("--out", sim.out, "simulate csv path")->required();
    cmd_m->fallthrough();
    cmd_m->callback([&] { rc = cmd_simulate(sim); });

    ShardProbeOpts probe;
    auto* cmd_sp = app.add_subcommand("shardprobe",
                                      "cross-shard traffic of a sharded graph");
    cmd_sp->add_option("--dataset", probe.dataset, "dataset manifest")
        ->required()
        ->check(CLI::ExistingFile);
    cmd_sp->add_option("--queries", probe.queries, "query vector file")
        ->required()
        ->check(CLI::ExistingFile);
    cmd_sp->add_option("--truth", probe.truth,
                       "ground truth prefix (computed when omitted)");
    cmd_sp->add_option("--shards", probe.shards, "spatial shard count")
        ->capture_default_str();
    cmd_sp->add_option("--k", probe.k, "recall depth")->capture_default_str();
    cmd_sp->add_option("--target-recall", probe.target_recall,
                       "recall the probe beam must reach")
        ->capture_default_str();
    cmd_sp->add_option("--max-degree", probe.max_degree, "graph degree")
        ->capture_default_str();
    cmd_sp->add_option("--build-beam", probe.build_beam, "graph build beam")
        ->capture_default_str();
    cmd_sp->add_option("--seed", probe.seed, "rng seed")->capture_default_str();
    cmd_sp->add_option("--out", probe.out, "probe csv path")->required();
    cmd_sp->fallthrough();
    cmd_sp->callback([&] { rc = cmd_shardprobe(probe); });

    ServeStoreOpts store;
    auto* cmd_ss = app.add_subcommand("serve-store", "run one index-store node");
    cmd_ss->add_option("--index", store.index, "index directory")
        ->required()
        ->check(CLI::ExistingDirectory);
    cmd_ss->add_option("--nodes", store.nodes, "cluster node count")
        ->capture_default_str();
    cmd_ss->add_option("--node", store.node, "this node's id")
        ->capture_default_str();
    cmd_ss->add_option("--listen", store.listen, "host:port (port 0: ephemeral)")
        ->capture_default_str();
    cmd_ss->add_option("--shard-dir", store.shard_dir,
                       "shard spool directory (default: <index>/shards)");
    cmd_ss->fallthrough();
    cmd_ss->callback([&] { rc = cmd_serve_store(store); });

    ServeEngineOpts eng;
    auto* cmd_se = app.add_subcommand(
        "serve-engine", "run a query workload through live store nodes");
    cmd_se->add_option("--index", eng.index, "index directory")
        ->required()
        ->check(CLI::ExistingDirectory);
    cmd_se->add_option("--stores", eng.stores,
                       "comma-separated store addresses in placement order")
        ->required();
    cmd_se->add_option("--queries", eng.queries, "query vector file")
        ->required()
        ->check(CLI::ExistingFile);
    cmd_se->add_option("--m", eng.m, "partitions fetched per level")
        ->capture_default_str();
    cmd_se->add_option("--k", eng.k, "results per query")->capture_default_str();
    cmd_se->add_option("--timeout-ms", eng.timeout_ms, "per-store socket timeout")
        ->capture_default_str();
    cmd_se->add_option("--out", eng.out, "results csv path")->required();
    cmd_se->fallthrough();
    cmd_se->callback([&] { rc = cmd_serve_engine(eng); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const UnreachableTargetError& e) {
        std::fprintf(stderr, "strata: error: %s (best recall %s)\n", e.what(),
                     num(e.best_recall).c_str());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "strata: error: %s\n", e.what());
        return 1;
    }
    return rc;
}
